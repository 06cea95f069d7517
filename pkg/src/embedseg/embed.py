"""Fixed-dimensional acoustic word embeddings for variable-length segments.

Two embedding backends are provided: uniform downsampling (here, band-limited
Fourier resampling of each feature dimension to a fixed number of frames,
flattened time-major) and the reference-vector eigenmaps backend in
`embedseg.eigenmaps`. This module also owns embedding normalization, the
pooled scale statistic used to size the pre-normalization noise, the
precomputed table of all allowed-segment embeddings, and exemplar-set
refinement from a completed segmentation run.
"""

import hashlib
import logging

import numpy as np
from scipy.signal import resample

from .segment import allowed_segments

logger = logging.getLogger(__name__)


def downsample_embed(segment, n_keep):
    """Embed a segment by resampling each feature dimension to n_keep points.

    Returns a raw (unnormalized) vector of length n_keep * dim, flattened
    time-major: the first `dim` values are the first resampled frame.
    """
    segment = np.atleast_2d(np.asarray(segment, dtype=np.float64))
    if segment.shape[0] == 0:
        raise ValueError("cannot embed an empty segment")
    if n_keep < 1:
        raise ValueError("n_keep must be >= 1")
    if segment.shape[0] == n_keep:
        return segment.flatten()
    return resample(segment, n_keep, axis=0).flatten()


def compute_sigma_e(raw_embeddings):
    """Pooled sample standard deviation over all coordinates of all embeddings."""
    pool = np.concatenate([np.ravel(e) for e in raw_embeddings])
    if pool.size < 2:
        raise ValueError("need at least 2 values to estimate a standard deviation")
    return float(np.std(pool, ddof=1))


def normalize_embedding(raw, noise_factor, sigma_e, rng):
    """Add low-variance Gaussian noise, then scale to the unit sphere.

    Noise is zero-mean with per-coordinate standard deviation
    noise_factor * sigma_e; with noise_factor = 0 the input is simply
    normalized (a zero vector is then an error).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if noise_factor > 0.0:
        raw = raw + rng.normal(0.0, noise_factor * sigma_e, size=raw.shape)
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero embedding without noise")
    return raw / norm


class EmbeddingTable:
    """Embeddings for every allowed segment, keyed by (utt_id, start, end)."""

    def __init__(self, entries, d_emb):
        self.entries = dict(entries)
        self.d_emb = int(d_emb)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, key):
        return self.entries[key]

    def __contains__(self, key):
        return key in self.entries

    def keys(self):
        return self.entries.keys()

    def matrix_for(self, keys):
        """Stack the embeddings for `keys` into a (len(keys), d_emb) matrix."""
        return np.array([self.entries[k] for k in keys], dtype=np.float64)

    def save(self, path):
        with open(path, "w") as f:
            f.write("%d %d\n" % (self.d_emb, len(self.entries)))
            for (utt, start, end), vec in self.entries.items():
                f.write(
                    "%s %d %d %s\n" % (utt, start, end, " ".join(repr(float(v)) for v in vec))
                )

    @classmethod
    def load(cls, path):
        with open(path) as f:
            d_emb, n_entries = (int(v) for v in f.readline().split())
            entries = {}
            for line in f:
                parts = line.split()
                key = (parts[0], int(parts[1]), int(parts[2]))
                entries[key] = np.array([float(v) for v in parts[3:]])
        if len(entries) != n_entries:
            raise ValueError(
                "%s: header says %d entries, found %d" % (path, n_entries, len(entries))
            )
        return cls(entries, d_emb)


def _segment_rng(seed, utt_id, start, end):
    """Noise stream keyed by segment identity, not evaluation order."""
    utt_hash = int.from_bytes(
        hashlib.sha256(utt_id.encode("utf-8")).digest()[:8], "little"
    )
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), utt_hash, int(start), int(end)])
    )


def precompute_from_segments(
    corpus, segments_by_utt, embed_fn, noise_factor=0.0, seed=0, normalize=True,
    sigma_e=None,
):
    """Embed the given (start, end) spans of each utterance into a table.

    `segments_by_utt` maps utterance id to a list of spans. Embedding errors
    are re-raised with the offending segment key attached. When noise is
    requested and `sigma_e` is not given, it is pooled over all raw
    embeddings of this call.
    """
    raw = {}
    for utt_id in segments_by_utt:
        frames = corpus[utt_id].frames
        for start, end in segments_by_utt[utt_id]:
            key = (utt_id, start, end)
            try:
                raw[key] = np.asarray(embed_fn(frames[start:end]), dtype=np.float64)
            except Exception as exc:
                raise type(exc)("segment %r: %s" % (key, exc)) from exc

    if not raw:
        return EmbeddingTable({}, 0)
    d_emb = len(next(iter(raw.values())))

    if normalize and noise_factor > 0.0 and sigma_e is None:
        sigma_e = compute_sigma_e(list(raw.values()))
    entries = {}
    for key in raw:
        if normalize:
            rng = _segment_rng(seed, *key)
            entries[key] = normalize_embedding(raw[key], noise_factor, sigma_e, rng)
        else:
            entries[key] = raw[key]
    return EmbeddingTable(entries, d_emb)


def precompute_table(
    corpus, constraints, embed_fn, noise_factor=0.0, seed=0, normalize=True,
    sigma_e=None,
):
    """Embed every allowed segment of every utterance (see `allowed_segments`)."""
    segs = {u.id: allowed_segments(u, constraints) for u in corpus}
    n_total = sum(len(s) for s in segs.values())
    logger.info("Precomputing %d segment embeddings", n_total)
    return precompute_from_segments(
        corpus, segs, embed_fn,
        noise_factor=noise_factor, seed=seed, normalize=normalize, sigma_e=sigma_e,
    )


def refine_reference_set(seg_state, table, corpus, n_discovered, n_random, rng):
    """Build a new exemplar set from a completed segmentation run.

    Clusters are ranked by frame coverage and the smallest prefix covering at
    least 90% of all segmented frames is kept. Within those clusters, tokens
    with the highest mixture-marginal density are selected (quotas
    proportional to cluster size) until `n_discovered` exemplars are found;
    if the clusters hold fewer tokens, the shortfall is filled with random
    allowed segments and a warning is logged. `n_random` uniformly random
    allowed segments are always added. Returns a list of frame matrices.
    """
    tokens_by_cluster = {}
    frames_by_cluster = {}
    for utt_id, spans in seg_state.segments_with_clusters().items():
        for (start, end), k in spans:
            tokens_by_cluster.setdefault(k, []).append((utt_id, start, end))
            frames_by_cluster[k] = frames_by_cluster.get(k, 0) + (end - start)

    total_frames = sum(frames_by_cluster.values())
    order = sorted(frames_by_cluster, key=lambda k: (-frames_by_cluster[k], k))
    selected, covered = [], 0
    for k in order:
        if covered >= 0.9 * total_frames:
            break
        selected.append(k)
        covered += frames_by_cluster[k]

    chosen = []
    if n_discovered > 0 and selected:
        n_selected_tokens = sum(len(tokens_by_cluster[k]) for k in selected)
        quotas = _proportional_quotas(
            [len(tokens_by_cluster[k]) for k in selected],
            min(n_discovered, n_selected_tokens),
        )
        for k, quota in zip(selected, quotas):
            keys = tokens_by_cluster[k]
            density = seg_state.gmm.log_marginal_many(table.matrix_for(keys))
            ranked = sorted(zip(keys, density), key=lambda p: -p[1])
            chosen.extend(key for key, _ in ranked[:quota])
        if len(chosen) < n_discovered:
            logger.warning(
                "only %d discovered exemplars available (requested %d); "
                "filling the remainder randomly", len(chosen), n_discovered,
            )

    n_fill = n_random + max(0, n_discovered - len(chosen))
    all_keys = sorted(table.keys())
    if n_fill > 0:
        idx = rng.choice(len(all_keys), size=n_fill, replace=len(all_keys) < n_fill)
        chosen.extend(all_keys[i] for i in np.atleast_1d(idx))

    return [corpus[utt].frames[start:end] for utt, start, end in chosen]


def _proportional_quotas(sizes, total):
    """Largest-remainder apportionment of `total` across `sizes`."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.sum() == 0:
        return [0] * len(sizes)
    exact = total * sizes / sizes.sum()
    quotas = np.floor(exact).astype(int)
    remainder = total - quotas.sum()
    order = np.argsort(-(exact - quotas), kind="stable")
    for i in order[:remainder]:
        quotas[i] += 1
    return [int(min(q, s)) for q, s in zip(quotas, sizes)]
