"""Blocked Gibbs sampling of utterance segmentations.

Each utterance is resegmented as a block: its segments are removed from the
acoustic model, prefix marginals are computed by forward filtering over the
allowed boundary positions, a new boundary sequence is drawn backwards from
the exact conditional posterior (optionally annealed), and each new segment's
mixture component is resampled. Segment scores follow the whole-segment
convention: a candidate covering j frames contributes the j-th power of its
embedding's mixture marginal, so every frame carries one density value.

Annealing raises the backward boundary-sampling probabilities to a
temperature exponent before renormalizing; the forward lattice itself is
always exponent-free.
"""

import logging

import numpy as np
from scipy.special import logsumexp

from .gmm import GmmState, NgPrior, BigramLm, sample_assignment

logger = logging.getLogger(__name__)

NEG_INF = -np.inf


class LatticeError(Exception):
    """Raised when constraints prune every path through an utterance."""


class Constraints:
    """Where word boundaries may be hypothesized.

    Grid mode (allowed_positions None): boundaries fall on multiples of
    `boundary_interval_frames` plus the utterance end, and segments must be
    between `min_dur_frames` and `max_dur_frames` long.

    Syllable mode: `allowed_positions` maps utterance id to sorted candidate
    boundary frames (the utterance end must be among them); a segment may
    cover at most `max_units_per_word` consecutive units and must be at least
    `min_dur_frames` long.
    """

    def __init__(
        self,
        boundary_interval_frames=1,
        min_dur_frames=1,
        max_dur_frames=10**9,
        allowed_positions=None,
        max_units_per_word=6,
    ):
        if boundary_interval_frames < 1:
            raise ValueError("boundary_interval_frames must be >= 1")
        if not 1 <= min_dur_frames <= max_dur_frames:
            raise ValueError("need 1 <= min_dur_frames <= max_dur_frames")
        if max_units_per_word < 1:
            raise ValueError("max_units_per_word must be >= 1")
        self.boundary_interval_frames = int(boundary_interval_frames)
        self.min_dur_frames = int(min_dur_frames)
        self.max_dur_frames = int(max_dur_frames)
        self.allowed_positions = allowed_positions
        self.max_units_per_word = int(max_units_per_word)

    @property
    def mode(self):
        return "grid" if self.allowed_positions is None else "syllable"


def boundary_positions(utterance, constraints):
    """Sorted candidate boundary positions for one utterance (0 and end included)."""
    m = utterance.n_frames
    if constraints.allowed_positions is None:
        g = constraints.boundary_interval_frames
        positions = list(range(0, m, g))
        if positions[-1] != m:
            positions.append(m)
        return positions
    given = sorted(p for p in constraints.allowed_positions[utterance.id] if 0 < p <= m)
    if not given or given[-1] != m:
        raise ValueError(
            "utterance '%s': allowed positions must include the end frame %d"
            % (utterance.id, m)
        )
    return [0] + given


def allowed_segments(utterance, constraints):
    """All (start, end) spans where a word may be hypothesized.

    An utterance shorter than the minimum duration yields the whole-utterance
    span only (full coverage is never sacrificed); a warning is logged.
    """
    m = utterance.n_frames
    if m < constraints.min_dur_frames:
        logger.warning(
            "utterance '%s' has %d frames, shorter than the minimum duration "
            "%d; treating it as a single segment",
            utterance.id, m, constraints.min_dur_frames,
        )
        return [(0, m)]
    positions = boundary_positions(utterance, constraints)
    spans = []
    if constraints.mode == "grid":
        for i, s in enumerate(positions):
            for e in positions[i + 1:]:
                dur = e - s
                if dur < constraints.min_dur_frames:
                    continue
                if dur > constraints.max_dur_frames:
                    break
                spans.append((s, e))
    else:
        max_units = constraints.max_units_per_word
        for i, s in enumerate(positions):
            for units, e in enumerate(positions[i + 1: i + 1 + max_units], start=1):
                dur = e - s
                if dur < constraints.min_dur_frames or dur > constraints.max_dur_frames:
                    continue
                spans.append((s, e))
    if not spans:
        # min <= m but the duration window excludes every span
        logger.warning(
            "utterance '%s': constraints prune every span; falling back to the "
            "whole utterance", utterance.id,
        )
        return [(0, m)]
    return spans


class LatticeTemplate:
    """Static per-utterance lattice structure: positions, candidate segments
    (grouped by end position), their durations and embedding rows."""

    __slots__ = (
        "utt_id", "positions", "keys", "durations", "start_index", "by_end", "X",
    )

    def __init__(self, utt_id, positions, keys, durations, start_index, by_end, X):
        self.utt_id = utt_id
        self.positions = positions
        self.keys = keys
        self.durations = durations
        self.start_index = start_index
        self.by_end = by_end
        self.X = X


def build_template(utterance, table, constraints=None):
    """Assemble the lattice template for one utterance.

    With `constraints` the segment set is enumerated; without it, the spans
    are recovered from the table keys (whose key set is, by contract, exactly
    the allowed-segment set of the run).
    """
    if constraints is not None:
        segs = allowed_segments(utterance, constraints)
    else:
        segs = sorted(
            (s, e) for (u, s, e) in table.keys() if u == utterance.id
        )
        if not segs:
            raise LatticeError(
                "utterance '%s': no candidate segments in the embedding table"
                % utterance.id
            )
    pos_set = {0, utterance.n_frames}
    for s, e in segs:
        pos_set.add(s)
        pos_set.add(e)
    positions = sorted(pos_set)
    pos_index = {p: i for i, p in enumerate(positions)}

    keys, durations, start_index = [], [], []
    by_end = [[] for _ in positions]
    for row, (s, e) in enumerate(segs):
        key = (utterance.id, s, e)
        if key not in table:
            raise LatticeError("embedding table is missing segment %r" % (key,))
        keys.append(key)
        durations.append(e - s)
        start_index.append(pos_index[s])
        by_end[pos_index[e]].append(row)
    return LatticeTemplate(
        utterance.id,
        np.array(positions),
        keys,
        np.array(durations, dtype=np.float64),
        np.array(start_index, dtype=np.int64),
        [np.array(rows, dtype=np.int64) for rows in by_end],
        table.matrix_for(keys),
    )


class ForwardLattice:
    """Forward log-densities over boundary positions plus candidate scores."""

    __slots__ = ("template", "alpha", "cand_scores", "_tables")

    def __init__(self, template, alpha, cand_scores):
        self.template = template
        self.alpha = alpha
        self.cand_scores = cand_scores
        self._tables = {}

    def sampler_tables(self, temperature_exponent):
        """Per-position cumulative candidate distributions (cached)."""
        if temperature_exponent not in self._tables:
            self._tables[temperature_exponent] = _posterior_tables(
                self.template, self.alpha, self.cand_scores, temperature_exponent
            )
        return self._tables[temperature_exponent]


def _forward_pass(template, cand_scores, utt_id):
    n_pos = len(template.positions)
    alpha = np.full(n_pos, NEG_INF)
    alpha[0] = 0.0
    for i in range(1, n_pos):
        rows = template.by_end[i]
        if rows.size == 0:
            continue
        terms = cand_scores[rows] + alpha[template.start_index[rows]]
        finite = terms > NEG_INF
        if finite.any():
            alpha[i] = logsumexp(terms[finite])
    if not np.isfinite(alpha[-1]):
        raise LatticeError(
            "utterance '%s': no valid path reaches position %d "
            "(constraints prune every segmentation)"
            % (utt_id, int(template.positions[-1]))
        )
    return alpha


def forward_filter(utterance, table, model, constraints=None):
    """Compute the forward lattice for one utterance.

    `model` counts must exclude this utterance's current segments. Candidate
    scores are duration-weighted mixture marginals; the lattice is
    exponent-free (annealing enters only in `backward_sample`).
    """
    template = build_template(utterance, table, constraints)
    cand_scores = template.durations * model.log_marginal_many(template.X)
    alpha = _forward_pass(template, cand_scores, utterance.id)
    return ForwardLattice(template, alpha, cand_scores)


def _posterior_tables(template, alpha, cand_scores, temperature_exponent):
    """Annealed, renormalized duration distributions per end position.

    Entry i is (candidate rows, cumulative probabilities), or None where no
    candidate is reachable.
    """
    tables = [None] * len(template.positions)
    for i in range(1, len(template.positions)):
        rows = template.by_end[i]
        if rows.size == 0:
            continue
        log_probs = cand_scores[rows] + alpha[template.start_index[rows]]
        finite = log_probs > NEG_INF
        if not finite.any():
            continue
        scaled = np.full(log_probs.shape, NEG_INF)
        scaled[finite] = temperature_exponent * log_probs[finite]
        scaled -= scaled[finite].max()
        probs = np.exp(scaled)
        probs /= probs.sum()
        tables[i] = (rows, np.cumsum(probs))
    return tables


def _sample_boundaries(template, tables, rng):
    positions = template.positions
    bounds = [int(positions[-1])]
    i = len(positions) - 1
    while positions[i] > 0:
        rows, cumulative = tables[i]
        j = int(np.searchsorted(cumulative, rng.random(), side="right"))
        choice = rows[min(j, len(rows) - 1)]
        i = int(template.start_index[choice])
        bounds.append(int(positions[i]))
    bounds.reverse()
    return bounds


def backward_sample(lattice, temperature_exponent, rng):
    """Draw one boundary sequence (ascending, 0 and utterance end included).

    Each duration candidate's probability is raised to `temperature_exponent`
    and renormalized before sampling; exponent 1 gives exact draws from the
    conditional segmentation posterior.
    """
    if temperature_exponent <= 0:
        raise ValueError("temperature_exponent must be positive")
    return _sample_boundaries(
        lattice.template, lattice.sampler_tables(temperature_exponent), rng
    )


class AnnealSchedule:
    """Annealing exponents and iteration counts for one sampling run.

    The exponent list divides `total_iters` into equal blocks; exponents must
    be non-decreasing, in (0, 1], ending at 1.
    """

    def __init__(self, exponents, iters_fixed_boundaries, total_iters):
        exponents = [float(e) for e in exponents]
        if not exponents or exponents[-1] != 1.0:
            raise ValueError("final annealing exponent must be 1")
        if any(not 0.0 < e <= 1.0 for e in exponents):
            raise ValueError("annealing exponents must lie in (0, 1]")
        if any(b < a for a, b in zip(exponents, exponents[1:])):
            raise ValueError("annealing exponents must be non-decreasing")
        if total_iters < 1 or iters_fixed_boundaries < 0:
            raise ValueError("bad iteration counts")
        self.exponents = exponents
        self.iters_fixed_boundaries = int(iters_fixed_boundaries)
        self.total_iters = int(total_iters)

    @classmethod
    def linear(cls, n_steps, iters_fixed_boundaries, total_iters, start=0.01):
        return cls(
            list(np.linspace(start, 1.0, n_steps)), iters_fixed_boundaries, total_iters
        )

    def exponent_at(self, iteration):
        block = iteration * len(self.exponents) // self.total_iters
        return self.exponents[min(block, len(self.exponents) - 1)]


class ChainConfig:
    """Hyperparameters for one sampling chain."""

    def __init__(
        self,
        constraints,
        K,
        schedule,
        sigma_sq=0.005,
        kappa0=0.05,
        alpha_a=1.0,
        p_boundary_init=0.25,
        lm_mode="unigram",
        lambda_interp=0.1,
        b_bi=1.0,
        eta=1.0,
    ):
        if lm_mode not in ("unigram", "bigram"):
            raise ValueError("lm_mode must be 'unigram' or 'bigram'")
        self.constraints = constraints
        self.K = int(K)
        self.schedule = schedule
        self.sigma_sq = float(sigma_sq)
        self.kappa0 = float(kappa0)
        self.alpha_a = float(alpha_a)
        self.p_boundary_init = float(p_boundary_init)
        self.lm_mode = lm_mode
        self.lambda_interp = float(lambda_interp)
        self.b_bi = float(b_bi)
        self.eta = float(eta)


class SegmentationState:
    """Mutable sampler state: a tiling of every utterance plus the acoustic
    model holding one assignment per segment (keyed by (utt_id, start, end))."""

    def __init__(self, corpus, table, gmm, templates, lm=None):
        self.corpus = corpus
        self.table = table
        self.gmm = gmm
        self.templates = templates
        self.lm = lm
        self.boundaries = {}  # utt_id -> ascending positions incl. 0 and end

    def segments(self, utt_id):
        b = self.boundaries[utt_id]
        return list(zip(b[:-1], b[1:]))

    def cluster_of(self, utt_id, start, end):
        return self.gmm.assignments[(utt_id, start, end)]

    def utterance_clusters(self, utt_id):
        return [self.cluster_of(utt_id, s, e) for s, e in self.segments(utt_id)]

    def segments_with_clusters(self):
        return {
            u.id: [((s, e), self.cluster_of(u.id, s, e)) for s, e in self.segments(u.id)]
            for u in self.corpus
        }

    def n_boundaries(self):
        """Internal boundaries over the whole corpus (utterance edges excluded)."""
        return sum(len(b) - 2 for b in self.boundaries.values())

    def check_consistency(self):
        n_items = 0
        for utt in self.corpus:
            b = self.boundaries[utt.id]
            assert b[0] == 0 and b[-1] == utt.n_frames
            assert all(x < y for x, y in zip(b, b[1:]))
            for s, e in self.segments(utt.id):
                assert (utt.id, s, e) in self.gmm.assignments
                n_items += 1
        assert n_items == len(self.gmm.assignments)
        assert self.gmm.N == n_items
        assert int(self.gmm.counts.sum()) == n_items


def _remove_utterance(state, utt_id):
    """Remove an utterance's segments (and LM counts) from the model."""
    ks = []
    for s, e in state.segments(utt_id):
        key = (utt_id, s, e)
        ks.append(state.gmm.remove_item(key, state.table[key]))
    if state.lm is not None:
        for k in ks:
            state.lm.remove_token(k)
        for l, k in zip(ks, ks[1:]):
            state.lm.remove_transition(l, k)
    return ks


def _assign_segments(state, utt_id, bounds, rng):
    """Sample components for an utterance's segments, left to right."""
    prev_k = None
    for s, e in zip(bounds[:-1], bounds[1:]):
        key = (utt_id, s, e)
        x = state.table[key]
        if state.lm is None:
            k = sample_assignment(state.gmm, x, rng)
        else:
            k = sample_assignment(state.gmm, x, rng, lm=state.lm, left_context=prev_k)
            state.lm.add_token(k)
            if prev_k is not None:
                state.lm.add_transition(prev_k, k)
        state.gmm.assignments[key] = k
        prev_k = k


def resegment_utterance(state, utt_index, rng, temperature_exponent=1.0):
    """One blocked-Gibbs move: resample an utterance's boundaries and clusters."""
    utt = state.corpus.utterances[utt_index]
    _remove_utterance(state, utt.id)
    template = state.templates[utt.id]
    cand_scores = template.durations * state.gmm.log_marginal_many(template.X)
    alpha = _forward_pass(template, cand_scores, utt.id)
    tables = _posterior_tables(template, alpha, cand_scores, temperature_exponent)
    bounds = _sample_boundaries(template, tables, rng)
    state.boundaries[utt.id] = bounds
    _assign_segments(state, utt.id, bounds, rng)


def _resample_assignments(state, utt_id, rng):
    """Resample each segment's component with boundaries held fixed."""
    segs = state.segments(utt_id)
    ks = state.utterance_clusters(utt_id)
    for i, (s, e) in enumerate(segs):
        key = (utt_id, s, e)
        x = state.table[key]
        old_k = state.gmm.remove_item(key, x)
        if state.lm is None:
            k = sample_assignment(state.gmm, x, rng)
        else:
            state.lm.remove_token(old_k)
            if i > 0:
                state.lm.remove_transition(ks[i - 1], old_k)
            if i + 1 < len(ks):
                state.lm.remove_transition(old_k, ks[i + 1])
            left = ks[i - 1] if i > 0 else None
            k = sample_assignment(state.gmm, x, rng, lm=state.lm, left_context=left)
            state.lm.add_token(k)
            if i > 0:
                state.lm.add_transition(ks[i - 1], k)
            if i + 1 < len(ks):
                state.lm.add_transition(k, ks[i + 1])
        state.gmm.assignments[key] = k
        ks[i] = k


def _init_boundaries(state, rng, p_boundary):
    """Draw an initial valid tiling per utterance.

    Each eligible internal position becomes a boundary with probability
    `p_boundary`, conditioned on the tiling satisfying the constraints: a
    candidate segment skipping n internal positions carries Bernoulli weight
    p (1-p)^n, and a tiling is drawn exactly from the resulting lattice.
    """
    log_p = np.log(p_boundary)
    log_q = np.log1p(-p_boundary)
    for utt in state.corpus:
        template = state.templates[utt.id]
        pos = template.positions
        # positions strictly inside each candidate span
        n_inside = np.empty(len(template.keys))
        for row, key in enumerate(template.keys):
            _, s, e = key
            i = int(np.searchsorted(pos, s))
            j = int(np.searchsorted(pos, e))
            n_inside[row] = j - i - 1
        # the spurious log p on the segment ending at the utterance edge is a
        # constant factor per tiling and cancels in the normalization
        weights = log_p + n_inside * log_q
        alpha = _forward_pass(template, weights, utt.id)
        tables = _posterior_tables(template, alpha, weights, 1.0)
        state.boundaries[utt.id] = _sample_boundaries(template, tables, rng)


class ChainRecord:
    """Per-iteration summaries and the final state of one chain."""

    def __init__(self, state, history):
        self.state = state
        self.history = history  # list of (iter, log_post_proxy, n_used, n_bounds)

    def write_summary(self, path):
        with open(path, "w") as f:
            for it, proxy, n_used, n_bounds in self.history:
                f.write("%d %s %d %d\n" % (it, repr(float(proxy)), n_used, n_bounds))


def log_post_proxy(state):
    """Monitoring quantity: duration-weighted marginals of the current
    segments plus their assignment priors, under the full current counts.
    Not the true model marginal."""
    total = 0.0
    log_priors = state.gmm.log_assign_prior_all()
    for utt in state.corpus:
        template = state.templates[utt.id]
        segs = state.segments(utt.id)
        keys = [(utt.id, s, e) for s, e in segs]
        X = state.table.matrix_for(keys)
        durations = np.array([e - s for s, e in segs], dtype=np.float64)
        total += float(np.sum(durations * state.gmm.log_marginal_many(X)))
        total += float(
            sum(log_priors[state.gmm.assignments[key]] for key in keys)
        )
    return total


def write_segmentation(state, path):
    """One line per segment: `utt_id start_frame end_frame cluster_id`."""
    with open(path, "w") as f:
        for utt in state.corpus:
            for s, e in state.segments(utt.id):
                f.write("%s %d %d %d\n" % (utt.id, s, e, state.cluster_of(utt.id, s, e)))


def load_segmentation(path):
    """Read a segmentation file into {utt_id: [((start, end), cluster), ...]}."""
    out = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            utt, s, e, k = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
            out.setdefault(utt, []).append(((s, e), k))
    for utt in out:
        out[utt].sort()
    return out


def run_chain(corpus, table, config, rng):
    """Run one sampling chain; returns a `ChainRecord`.

    Boundaries are initialized randomly at allowed positions (probability
    `config.p_boundary_init`, conditioned on a valid tiling) and initial
    components are drawn one segment at a time from the collapsed
    conditional. The sampler then runs `iters_fixed_boundaries` iterations of
    assignment-only sweeps followed by `total_iters` full blocked sweeps under
    the annealing schedule. Utterances are visited in a fresh random
    permutation each iteration.
    """
    prior = NgPrior(np.zeros(table.d_emb), config.sigma_sq, config.kappa0)
    gmm = GmmState(config.K, config.alpha_a, prior)
    lm = None
    if config.lm_mode == "bigram":
        lm = BigramLm(
            config.K,
            lambda_interp=config.lambda_interp,
            a_uni=config.alpha_a,
            b_bi=config.b_bi,
            eta=config.eta,
        )
    templates = {u.id: build_template(u, table) for u in corpus}
    state = SegmentationState(corpus, table, gmm, templates, lm=lm)

    _init_boundaries(state, rng, config.p_boundary_init)
    for utt in corpus:
        _assign_segments(state, utt.id, state.boundaries[utt.id], rng)

    history = []
    schedule = config.schedule
    iteration = 0
    for _ in range(schedule.iters_fixed_boundaries):
        for utt_index in rng.permutation(len(corpus.utterances)):
            _resample_assignments(state, corpus.utterances[utt_index].id, rng)
        history.append(
            (iteration, log_post_proxy(state), gmm.components_in_use(), state.n_boundaries())
        )
        iteration += 1

    for main_iter in range(schedule.total_iters):
        exponent = schedule.exponent_at(main_iter)
        for utt_index in rng.permutation(len(corpus.utterances)):
            resegment_utterance(state, int(utt_index), rng, exponent)
        history.append(
            (iteration, log_post_proxy(state), gmm.components_in_use(), state.n_boundaries())
        )
        logger.info(
            "iteration %d: exponent %.3g, log-post proxy %.6g, %d clusters, %d boundaries",
            iteration, exponent, history[-1][1], history[-1][2], history[-1][3],
        )
        iteration += 1

    return ChainRecord(state, history)


# -- bigram segmentation lattice (optional tier) -------------------------------


class BigramLattice:
    """Two-dimensional forward lattice: per end position, one log-density per
    candidate last-segment duration."""

    __slots__ = ("template", "alpha2", "cand_rows")

    def __init__(self, template, alpha2, cand_rows):
        self.template = template
        self.alpha2 = alpha2  # list over positions; arrays over candidates
        self.cand_rows = cand_rows

    def marginal_alpha(self):
        """Collapse the duration dimension: one log-density per position."""
        out = np.full(len(self.template.positions), NEG_INF)
        out[0] = 0.0
        for i in range(1, len(out)):
            if self.alpha2[i].size:
                finite = self.alpha2[i] > NEG_INF
                if finite.any():
                    out[i] = logsumexp(self.alpha2[i][finite])
        return out


def bigram_forward_filter(utterance, table, model, lm, approx="exact", constraints=None):
    """Forward filtering with a bigram model over segment components.

    The conditional density of a segment given its predecessor marginalizes
    the component of both segments; `approx="exact"` sums over all K^2 pairs,
    `approx="peaked"` keeps only the predecessor's maximum-posterior
    component. Language-model terms are raised to `lm.eta` and renormalized
    (eta = 0 therefore reduces to a uniform language model). The first segment
    of the utterance, having no predecessor, is scored with the eta-scaled
    unigram estimator.
    """
    if approx not in ("exact", "peaked"):
        raise ValueError("approx must be 'exact' or 'peaked'")
    template = build_template(utterance, table, constraints)
    n_seg = len(template.keys)
    log_pred = model.log_post_pred_many(template.X)  # (n_seg, K)
    log_uni = lm.log_prob_vector_scaled(None)  # (K,)
    log_big = np.stack(
        [lm.log_prob_vector_scaled(l) for l in range(lm.K)]
    )  # [l, k]

    # posterior over the predecessor's component given its embedding alone
    post_prev = log_pred + log_uni[None, :]
    post_prev = post_prev - logsumexp(post_prev, axis=1, keepdims=True)

    if approx == "exact":
        # u[c', k1] = log sum_k2 P_eta(k1 | k2) post_prev[c', k2]
        u = logsumexp(post_prev[:, :, None] + log_big[None, :, :], axis=1)
    else:
        k2_star = np.argmax(post_prev, axis=1)
        u = log_big[k2_star]

    # pair_cond[c, c'] = log p(x_c | x_c'), initial[c] = log p(x_c | no context)
    pair_cond = logsumexp(log_pred[:, None, :] + u[None, :, :], axis=2)
    initial = logsumexp(log_pred + log_uni[None, :], axis=1)

    positions = template.positions
    n_pos = len(positions)
    alpha2 = [np.zeros(0) for _ in range(n_pos)]
    durations = template.durations
    for i in range(1, n_pos):
        rows = template.by_end[i]
        vals = np.full(rows.shape, NEG_INF)
        for out_idx, c in enumerate(rows):
            start = int(template.start_index[c])
            if positions[start] == 0:
                vals[out_idx] = durations[c] * initial[c]
            else:
                prev_rows = template.by_end[start]
                if prev_rows.size == 0:
                    continue
                terms = durations[c] * pair_cond[c, prev_rows] + alpha2[start]
                finite = terms > NEG_INF
                if finite.any():
                    vals[out_idx] = logsumexp(terms[finite])
        alpha2[i] = vals
    if n_pos > 1 and (alpha2[-1].size == 0 or not np.isfinite(alpha2[-1]).any()):
        raise LatticeError(
            "utterance '%s': no valid path reaches position %d"
            % (utterance.id, int(positions[-1]))
        )
    return BigramLattice(template, alpha2, [template.by_end[i] for i in range(n_pos)])
