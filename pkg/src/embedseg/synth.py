"""Synthetic corpora with known word boundaries and types.

Each word type is a smooth random trajectory (a cubic spline through a few
control points). A token is its type's trajectory sampled uniformly at a
random length (a linear time warp, so zero-noise tokens of equal length are
exact duplicates), shifted by a per-speaker offset, plus white Gaussian
noise. Utterances concatenate tokens, so ground-truth alignments are exact by
construction. A simulated term-discovery pair list (same-type pairs,
contaminated at a configurable rate with different-type pairs) is emitted
alongside.
"""

import logging

import numpy as np
from scipy.interpolate import CubicSpline

from .corpus import Corpus, TokenAlignment, Utterance

logger = logging.getLogger(__name__)


class SynthSpec:
    """Generator settings; ranges are inclusive (lo, hi) tuples."""

    def __init__(
        self,
        vocab_size=5,
        dim=4,
        frames_per_word=(20, 40),
        words_per_utterance=(3, 6),
        n_utterances=100,
        n_speakers=1,
        prototype_separation=6.0,
        speaker_offset_scale=0.0,
        noise_std=1.0,
        n_pairs=0,
        pair_noise_rate=0.0,
        n_control_points=5,
        seed=0,
    ):
        if vocab_size < 2:
            raise ValueError("need at least 2 word types")
        if frames_per_word[0] < 2 or frames_per_word[0] > frames_per_word[1]:
            raise ValueError("bad frames_per_word range")
        if words_per_utterance[0] < 1 or words_per_utterance[0] > words_per_utterance[1]:
            raise ValueError("bad words_per_utterance range")
        if prototype_separation <= 0:
            raise ValueError("prototype_separation must be positive")
        if not 0.0 <= pair_noise_rate <= 1.0:
            raise ValueError("pair_noise_rate must lie in [0, 1]")
        self.vocab_size = int(vocab_size)
        self.dim = int(dim)
        self.frames_per_word = tuple(frames_per_word)
        self.words_per_utterance = tuple(words_per_utterance)
        self.n_utterances = int(n_utterances)
        self.n_speakers = int(n_speakers)
        self.prototype_separation = float(prototype_separation)
        self.speaker_offset_scale = float(speaker_offset_scale)
        self.noise_std = float(noise_std)
        self.n_pairs = int(n_pairs)
        self.pair_noise_rate = float(pair_noise_rate)
        self.n_control_points = int(n_control_points)
        self.seed = int(seed)


def _prototypes(spec, rng):
    """Smooth trajectories scaled so the smallest pairwise gap matches the
    requested separation (in units of the within-class noise std)."""
    splines = []
    for _ in range(spec.vocab_size):
        knots = np.linspace(0.0, 1.0, spec.n_control_points)
        control = rng.normal(0.0, 1.0, size=(spec.n_control_points, spec.dim))
        splines.append(CubicSpline(knots, control, axis=0))

    grid = np.linspace(0.0, 1.0, 50)
    values = [s(grid) for s in splines]
    min_gap = np.inf
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            gap = float(np.mean(np.linalg.norm(values[i] - values[j], axis=1)))
            min_gap = min(min_gap, gap)
    unit = spec.noise_std if spec.noise_std > 0 else 1.0
    target = spec.prototype_separation * unit
    if min_gap < 1e-9:
        raise ValueError(
            "prototype draw is degenerate for dim=%d: achievable separation "
            "bound is %.3g" % (spec.dim, min_gap)
        )
    scale = target / min_gap
    return [lambda t, s=s: scale * s(t) for s in splines]


def _warp_grid(length):
    """Uniform time map of `length` points onto [0, 1]."""
    return np.linspace(0.0, 1.0, length) if length > 1 else np.zeros(1)


def generate(spec, rng=None):
    """Draw a corpus; returns (corpus, word_alignments, word_pairs)."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    prototypes = _prototypes(spec, rng)
    offsets = rng.normal(
        0.0,
        spec.speaker_offset_scale * (spec.noise_std if spec.noise_std > 0 else 1.0),
        size=(spec.n_speakers, spec.dim),
    )

    utterances, alignments = [], []
    tokens_by_type = {v: [] for v in range(spec.vocab_size)}
    lo_w, hi_w = spec.words_per_utterance
    lo_f, hi_f = spec.frames_per_word
    for u in range(spec.n_utterances):
        utt_id = "utt%04d" % u
        spk = u % spec.n_speakers
        n_words = int(rng.integers(lo_w, hi_w + 1))
        parts, cursor = [], 0
        for _ in range(n_words):
            wtype = int(rng.integers(spec.vocab_size))
            length = int(rng.integers(lo_f, hi_f + 1))
            token = prototypes[wtype](_warp_grid(length)) + offsets[spk]
            if spec.noise_std > 0:
                token = token + rng.normal(0.0, spec.noise_std, size=token.shape)
            parts.append(token)
            alignments.append(
                TokenAlignment(utt_id, cursor, cursor + length, "w%d" % wtype)
            )
            tokens_by_type[wtype].append((utt_id, cursor, cursor + length))
            cursor += length
        utterances.append(
            Utterance(utt_id, "spk%d" % spk, np.concatenate(parts, axis=0))
        )

    pairs = []
    pairable = [v for v in tokens_by_type if len(tokens_by_type[v]) >= 2]
    for _ in range(spec.n_pairs):
        if rng.random() < spec.pair_noise_rate and spec.vocab_size >= 2:
            va, vb = rng.choice(spec.vocab_size, size=2, replace=False)
            a = tokens_by_type[int(va)][int(rng.integers(len(tokens_by_type[int(va)])))]
            b = tokens_by_type[int(vb)][int(rng.integers(len(tokens_by_type[int(vb)])))]
        else:
            if not pairable:
                raise ValueError("no word type has 2 tokens; cannot emit pairs")
            v = int(pairable[int(rng.integers(len(pairable)))])
            ia, ib = rng.choice(len(tokens_by_type[v]), size=2, replace=False)
            a, b = tokens_by_type[v][int(ia)], tokens_by_type[v][int(ib)]
        pairs.append((a, b))

    return Corpus(utterances), alignments, pairs
