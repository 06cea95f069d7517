"""Oracle tests for the bigram segmentation lattice.

The brute-force reference enumerates every segmentation and, per segment
pair, sums the K x K joint component assignments directly with plain loops.
"""

import numpy as np
import pytest
from scipy.special import logsumexp

from embedseg.corpus import Corpus, Utterance
from embedseg.embed import precompute_table, downsample_embed
from embedseg.gmm import BigramLm, GmmState, NgPrior
from embedseg.segment import (
    Constraints, allowed_segments, bigram_forward_filter, forward_filter,
)
from tests.test_segment import enumerate_tilings, random_gmm_state


def make_instance(rng, n_frames, K, n_items=10):
    utt = Utterance("u", "s", rng.normal(size=(n_frames, 2)))
    corpus = Corpus([utt])
    cons = Constraints(1, 1, n_frames)
    table = precompute_table(
        corpus, cons, lambda seg: downsample_embed(seg, 2), noise_factor=0.0
    )
    state = random_gmm_state(rng, K, table.d_emb, n_items=n_items)
    return utt, corpus, cons, table, state


def make_lm(rng, K, state=None, lambda_interp=0.1, eta=1.0, n_transitions=15):
    """LM whose unigram counts mirror the acoustic model's counts."""
    lm = BigramLm(K, lambda_interp=lambda_interp, a_uni=1.0, b_bi=1.0, eta=eta)
    if state is not None:
        for k in range(K):
            for _ in range(int(state.counts[k])):
                lm.add_token(k)
    for _ in range(n_transitions):
        lm.add_transition(int(rng.integers(K)), int(rng.integers(K)))
    return lm


def brute_force_pair_conditional(x1, x2, state, lm):
    """Direct double sum over both components (the K^2 joint assignments)."""
    K = state.K
    uni = np.exp(lm.log_prob_vector_scaled(None))
    big = np.exp(np.stack([lm.log_prob_vector_scaled(l) for l in range(K)]))  # [l, k]
    pred1 = np.exp(state.log_post_pred_all(x1))
    pred2 = np.exp(state.log_post_pred_all(x2))
    denom = sum(pred2[k2] * uni[k2] for k2 in range(K))
    total = 0.0
    for k1 in range(K):
        for k2 in range(K):
            total += pred1[k1] * big[k2, k1] * pred2[k2] * uni[k2]
    return np.log(total / denom)


def brute_force_initial(x, state, lm):
    K = state.K
    uni = np.exp(lm.log_prob_vector_scaled(None))
    pred = np.exp(state.log_post_pred_all(x))
    return np.log(sum(uni[k] * pred[k] for k in range(K)))


def brute_force_bigram_alpha_final(utt, cons, table, state, lm):
    """log alpha[M][k] per final duration k, by joint enumeration."""
    m = utt.n_frames
    spans = allowed_segments(utt, cons)
    positions = {0, m}
    for s, e in spans:
        positions.update((s, e))
    emb = {span: table[(utt.id, *span)] for span in spans}
    by_last_dur = {}
    for tiling in enumerate_tilings(positions, m, set(spans)):
        segs = list(zip(tiling, tiling[1:]))
        total = (segs[0][1] - segs[0][0]) * brute_force_initial(emb[segs[0]], state, lm)
        for prev, cur in zip(segs, segs[1:]):
            total += (cur[1] - cur[0]) * brute_force_pair_conditional(
                emb[cur], emb[prev], state, lm
            )
        dur = segs[-1][1] - segs[-1][0]
        by_last_dur.setdefault(dur, []).append(total)
    return {dur: logsumexp(vals) for dur, vals in by_last_dur.items()}


def lattice_alpha_final_by_duration(lattice):
    template = lattice.template
    final = len(template.positions) - 1
    rows = template.by_end[final]
    return {
        int(template.durations[row]): lattice.alpha2[final][i]
        for i, row in enumerate(rows)
    }


class TestBigramLattice:
    def test_matches_exhaustive_joint_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            n = int(rng.integers(2, 7))
            utt, corpus, cons, table, state = make_instance(rng, n, K=2)
            lm = make_lm(rng, 2, state, lambda_interp=0.3, eta=1.0)
            lattice = bigram_forward_filter(utt, table, state, lm, "exact", cons)
            got = lattice_alpha_final_by_duration(lattice)
            want = brute_force_bigram_alpha_final(utt, cons, table, state, lm)
            assert set(got) == set(want)
            for dur in want:
                assert abs(got[dur] - want[dur]) < 1e-9 * max(1.0, abs(want[dur]))

    def test_uniform_lm_marginalizes_to_unigram(self):
        # eta = 0 makes every LM term uniform; with empty acoustic counts the
        # unigram assignment prior is uniform too, so the lattices coincide
        rng = np.random.default_rng(1)
        for n in (3, 5, 6):
            utt, corpus, cons, table, _ = make_instance(rng, n, K=3)
            state = GmmState(3, 1.0, NgPrior(np.zeros(table.d_emb), 0.05, 0.5))
            lm = make_lm(rng, 3, None, eta=0.0, n_transitions=20)
            uni = forward_filter(utt, table, state, cons)
            big = bigram_forward_filter(utt, table, state, lm, "exact", cons)
            marg = big.marginal_alpha()
            assert np.all(np.abs(marg - uni.alpha) < 1e-10 * np.maximum(1.0, np.abs(uni.alpha)))

    def test_lambda_one_marginalizes_to_unigram_with_counts(self):
        # lambda = 1 removes the bigram dependence; with LM unigram counts
        # mirroring the acoustic counts, the reduction is exact
        rng = np.random.default_rng(2)
        utt, corpus, cons, table, state = make_instance(rng, 5, K=3)
        lm = make_lm(rng, 3, state, lambda_interp=1.0, eta=1.0)
        uni = forward_filter(utt, table, state, cons)
        big = bigram_forward_filter(utt, table, state, lm, "exact", cons)
        marg = big.marginal_alpha()
        assert np.all(np.abs(marg - uni.alpha) < 1e-10 * np.maximum(1.0, np.abs(uni.alpha)))

    def test_single_component_collapse(self):
        rng = np.random.default_rng(3)
        utt, corpus, cons, table, state = make_instance(rng, 4, K=1)
        lm = make_lm(rng, 1, state, n_transitions=5)
        uni = forward_filter(utt, table, state, cons)
        big = bigram_forward_filter(utt, table, state, lm, "exact", cons)
        assert np.allclose(big.marginal_alpha(), uni.alpha, atol=1e-10)

    def test_peaked_equals_exact_for_separated_components(self):
        # far-apart components make the predecessor posterior one-hot
        rng = np.random.default_rng(4)
        utt = Utterance("u", "s", np.concatenate([
            np.full((3, 2), 5.0), np.full((3, 2), -5.0)
        ]) + rng.normal(0, 0.01, size=(6, 2)))
        corpus = Corpus([utt])
        cons = Constraints(3, 3, 3)
        table = precompute_table(
            corpus, cons, lambda seg: downsample_embed(seg, 2), noise_factor=0.0
        )
        state = GmmState(2, 1.0, NgPrior(np.zeros(table.d_emb), 0.01, 0.05))
        for k, base in [(0, 0.7), (1, -0.7)]:
            for _ in range(20):
                state.update_stats(
                    np.full(table.d_emb, base) + rng.normal(0, 0.001, table.d_emb),
                    k, "add",
                )
        lm = make_lm(rng, 2, state, n_transitions=10)
        exact = bigram_forward_filter(utt, table, state, lm, "exact", cons)
        peaked = bigram_forward_filter(utt, table, state, lm, "peaked", cons)
        assert np.allclose(
            exact.marginal_alpha(), peaked.marginal_alpha(), rtol=1e-6, atol=1e-6
        )

    def test_rejects_unknown_mode(self):
        rng = np.random.default_rng(5)
        utt, corpus, cons, table, state = make_instance(rng, 3, K=2)
        lm = make_lm(rng, 2, state)
        with pytest.raises(ValueError, match="exact.*peaked"):
            bigram_forward_filter(utt, table, state, lm, "viterbi", cons)
