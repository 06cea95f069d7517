"""Metric tests against hand-computed values and independent brute-force code.

The shared fixture is a committed 10-token, 2-utterance corpus with phone
alignments; every metric value asserted here was worked out by hand and is
re-derived by naive reference implementations that share no code with the
library (plain dict counting, recursive edit distance, exhaustive matching).
"""

import itertools

import numpy as np
import pytest

from embedseg.corpus import Corpus, TokenAlignment, Utterance
from embedseg.evaluate import (
    MappingMatrix, boundary_prf, build_mapping_matrix, cluster_purity,
    edit_distance, map_clusters, ned, same_different_ap, speaker_gender_purity,
    token_type_prf, wer,
)


def hand_fixture():
    """Two 30-frame utterances, 10 word tokens, phone tier, one split word."""
    corpus = Corpus([
        Utterance("utt1", "spkA", np.zeros((30, 2))),
        Utterance("utt2", "spkB", np.zeros((30, 2))),
    ])
    words = [
        TokenAlignment("utt1", 0, 6, "yeah"),
        TokenAlignment("utt1", 6, 9, "i"),
        TokenAlignment("utt1", 9, 18, "mean"),
        TokenAlignment("utt1", 18, 24, "yeah"),
        TokenAlignment("utt1", 24, 30, "ok"),
        TokenAlignment("utt2", 0, 3, "i"),
        TokenAlignment("utt2", 3, 9, "yeah"),
        TokenAlignment("utt2", 9, 18, "mean"),
        TokenAlignment("utt2", 18, 24, "bye"),
        TokenAlignment("utt2", 24, 30, "ok"),
    ]
    phones = [
        TokenAlignment("utt1", 0, 3, "y"),
        TokenAlignment("utt1", 3, 6, "ae"),
        TokenAlignment("utt1", 6, 9, "ay"),
        TokenAlignment("utt1", 9, 12, "m"),
        TokenAlignment("utt1", 12, 15, "iy"),
        TokenAlignment("utt1", 15, 18, "n"),
        TokenAlignment("utt1", 18, 21, "y"),
        TokenAlignment("utt1", 21, 24, "ae"),
        TokenAlignment("utt1", 24, 27, "ow"),
        TokenAlignment("utt1", 27, 30, "k"),
        TokenAlignment("utt2", 0, 3, "ay"),
        TokenAlignment("utt2", 3, 6, "y"),
        TokenAlignment("utt2", 6, 9, "ae"),
        TokenAlignment("utt2", 9, 12, "m"),
        TokenAlignment("utt2", 12, 15, "iy"),
        TokenAlignment("utt2", 15, 18, "n"),
        TokenAlignment("utt2", 18, 21, "b"),
        TokenAlignment("utt2", 21, 24, "ay"),
        TokenAlignment("utt2", 24, 27, "ow"),
        TokenAlignment("utt2", 27, 30, "k"),
    ]
    # the word 'mean' in utt1 is split across clusters 2 and 3; everything
    # else is segmented and clustered correctly
    pred = {
        "utt1": [((0, 6), 0), ((6, 9), 1), ((9, 15), 2), ((15, 18), 3),
                 ((18, 24), 0), ((24, 30), 4)],
        "utt2": [((0, 3), 1), ((3, 9), 0), ((9, 18), 2), ((18, 24), 5),
                 ((24, 30), 4)],
    }
    return corpus, words, phones, pred


# -- independent reference implementations ----------------------------------


def naive_frame_counts(pred, words):
    """Per-(label, cluster) frame counts by literal frame loops."""
    counts = {}
    for utt_id, spans in pred.items():
        labels = {}
        for w in words:
            if w.utterance_id == utt_id:
                for f in range(w.start_frame, w.end_frame):
                    labels[f] = w.label
        for (s, e), k in spans:
            for f in range(s, e):
                key = (labels[f], k)
                counts[key] = counts.get(key, 0) + 1
    return counts


def naive_purity(counts):
    by_cluster = {}
    for (label, k), n in counts.items():
        by_cluster.setdefault(k, {})[label] = n
    best = sum(max(v.values()) for v in by_cluster.values())
    return best / sum(counts.values())


def naive_edit_distance(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        naive_edit_distance(a[1:], b[1:]) + (a[0] != b[0]),
        naive_edit_distance(a[1:], b) + 1,
        naive_edit_distance(a, b[1:]) + 1,
    )


def naive_wer_total(truth_seq, pred_seq):
    """Minimum S+D+I via the recursive edit distance (None never matches)."""
    a = tuple(truth_seq)
    b = tuple("\0" if x is None else x for x in pred_seq)
    return naive_edit_distance(a, b)


def naive_max_boundary_matching(pred, truth, tol):
    """Exhaustive maximum one-to-one matching within tolerance."""
    best = 0
    for k in range(min(len(pred), len(truth)), -1, -1):
        for p_sub in itertools.combinations(pred, k):
            for t_perm in itertools.permutations(truth, k):
                if all(abs(p - t) <= tol for p, t in zip(p_sub, t_perm)):
                    return k
    return best


def naive_ap(distances, same_flags):
    """PR sweep written out longhand over distinct thresholds."""
    n_same = sum(same_flags)
    points = []
    for theta in sorted(set(distances)):
        tp = sum(1 for d, s in zip(distances, same_flags) if d <= theta and s)
        fp = sum(1 for d, s in zip(distances, same_flags) if d <= theta and not s)
        points.append((tp / n_same, tp / (tp + fp), tp))
    ap, prev_recall, seen_tp = 0.0, 0.0, set()
    for recall, precision, tp in points:
        if recall > prev_recall:
            ap += (recall - prev_recall) * precision
            prev_recall = recall
    return ap


# -- mapping matrix and cluster mapping --------------------------------------


class TestMappingMatrix:
    def test_frame_counts_match_naive(self):
        corpus, words, phones, pred = hand_fixture()
        mapping = build_mapping_matrix(pred, words, unit="frames")
        naive = naive_frame_counts(pred, words)
        for (label, k), n in naive.items():
            i = mapping.labels.index(label)
            j = mapping.clusters.index(k)
            assert mapping.counts[i, j] == n
        assert mapping.counts.sum() == sum(naive.values())

    def test_perfect_prediction_is_permuted_diagonal(self):
        words = [TokenAlignment("u", 0, 5, "a"), TokenAlignment("u", 5, 9, "b")]
        pred = {"u": [((0, 5), 7), ((5, 9), 3)]}
        mapping = build_mapping_matrix(pred, words, unit="tokens")
        real = mapping.counts[mapping.real_rows]
        assert (real > 0).sum() == 2
        assert sorted(real.max(axis=0)) == sorted(real.sum(axis=0))

    def test_token_unit_tie_goes_to_earlier_truth_token(self):
        words = [TokenAlignment("u", 0, 4, "a"), TokenAlignment("u", 4, 8, "b")]
        pred = {"u": [((2, 6), 0)]}  # overlaps both words by 2 frames
        mapping = build_mapping_matrix(pred, words, unit="tokens")
        assert mapping.counts[mapping.labels.index("a"), 0] == 1
        assert mapping.counts[mapping.labels.index("b"), 0] == 0

    def test_empty_prediction_zero_matrix(self):
        words = [TokenAlignment("u", 0, 4, "a")]
        mapping = build_mapping_matrix({}, words, unit="frames")
        assert mapping.counts.sum() == 0

    def test_out_of_coverage_goes_to_background(self, caplog):
        import logging

        words = [TokenAlignment("u", 0, 4, "a")]
        pred = {"u": [((4, 8), 0)]}
        with caplog.at_level(logging.WARNING):
            mapping = build_mapping_matrix(pred, words, unit="tokens")
        assert mapping.counts[-1, 0] == 1
        assert any("outside truth coverage" in r.message for r in caplog.records)


class TestMapClusters:
    def _mapping(self, counts, labels, clusters):
        return MappingMatrix(np.array(counts), labels, clusters, "frames")

    def test_diagonal_identity_both_modes(self):
        m = self._mapping([[4, 0], [0, 7]], ["a", "b"], [0, 1])
        for mode in ("many_to_one", "one_to_one_greedy"):
            assert map_clusters(m, mode) == {0: "a", 1: "b"}

    def test_hand_case(self):
        m = self._mapping([[5, 4], [0, 3]], ["a", "b"], [0, 1])
        assert map_clusters(m, "many_to_one") == {0: "a", 1: "a"}
        assert map_clusters(m, "one_to_one_greedy") == {0: "a", 1: "b"}

    def test_greedy_leaves_surplus_unassigned(self):
        m = self._mapping([[5, 4, 1]], ["a"], [0, 1, 2])
        assert map_clusters(m, "one_to_one_greedy") == {0: "a", 1: None, 2: None}

    def test_tie_break_lowest_label_then_cluster(self):
        m = self._mapping([[2, 2], [2, 2]], ["a", "b"], [0, 1])
        assert map_clusters(m, "one_to_one_greedy") == {0: "a", 1: "b"}


class TestPurity:
    def test_hand_values(self):
        m = MappingMatrix(np.array([[3, 1], [1, 3]]), ["a", "b"], [0, 1], "frames")
        assert cluster_purity(m) == pytest.approx(0.75)

    def test_diagonal_is_one(self):
        m = MappingMatrix(np.array([[5, 0], [0, 2]]), ["a", "b"], [0, 1], "frames")
        assert cluster_purity(m) == 1.0

    def test_single_cluster_uniform_labels(self):
        m = MappingMatrix(np.array([[4], [4], [4], [4]]), list("abcd"), [0], "frames")
        assert cluster_purity(m) == pytest.approx(0.25)

    def test_fixture_matches_naive(self):
        corpus, words, phones, pred = hand_fixture()
        mapping = build_mapping_matrix(pred, words, unit="frames")
        naive = naive_purity(naive_frame_counts(pred, words))
        assert cluster_purity(mapping) == pytest.approx(naive, abs=1e-12)
        assert cluster_purity(mapping) == pytest.approx(1.0)

    def test_speaker_purity_on_fixture(self):
        corpus, words, phones, pred = hand_fixture()
        spk, gen = speaker_gender_purity(
            pred, corpus, gender_of_speaker={"spkA": "f", "spkB": "m"}
        )
        # clusters 0, 1, 2, 4 mix both speakers; 3 and 5 are single-speaker
        # by-hand: best-per-cluster tokens = 2+1+1+1+1+1 = 7 of 11
        assert spk == pytest.approx(7 / 11)
        assert gen == pytest.approx(7 / 11)


class TestWer:
    def test_perfect(self):
        rate, S, D, I, N = wer({"u": ["a", "b"]}, {"u": ["a", "b"]})
        assert (rate, S, D, I, N) == (0.0, 0, 0, 0, 2)

    def test_empty_prediction_all_deletions(self):
        rate, S, D, I, N = wer({}, {"u": ["a", "b", "c"]})
        assert rate == 1.0 and D == 3 and S == 0 and I == 0

    def test_hand_alignment(self):
        rate, S, D, I, N = wer({"u": ["a", "x", "c", "y"]}, {"u": ["a", "b", "c"]})
        assert (S, D, I, N) == (1, 0, 1, 3)
        assert rate == pytest.approx(2 / 3)

    def test_none_labels_never_match(self):
        rate, S, D, I, N = wer({"u": [None, None]}, {"u": [None, None]})
        assert rate == 1.0

    def test_fixture_value_and_naive_total(self):
        corpus, words, phones, pred = hand_fixture()
        mapping = build_mapping_matrix(pred, words, unit="frames")
        cl_map = map_clusters(mapping, "one_to_one_greedy")
        pred_seqs = {u: [cl_map[k] for _, k in spans] for u, spans in pred.items()}
        truth_seqs = {
            "utt1": ["yeah", "i", "mean", "yeah", "ok"],
            "utt2": ["i", "yeah", "mean", "bye", "ok"],
        }
        rate, S, D, I, N = wer(pred_seqs, truth_seqs)
        assert rate == pytest.approx(0.1)
        naive_total = sum(
            naive_wer_total(truth_seqs[u], pred_seqs.get(u, [])) for u in truth_seqs
        )
        assert S + D + I == naive_total == 1


class TestBoundary:
    def test_perfect(self):
        p, r, f = boundary_prf({"u": [5, 9]}, {"u": [5, 9]}, 2)
        assert (p, r, f) == (1.0, 1.0, 1.0)

    def test_no_predictions(self):
        p, r, f = boundary_prf({"u": []}, {"u": [5]}, 2)
        assert (p, r, f) == (0.0, 0.0, 0.0)

    def test_hand_case(self):
        p, r, f = boundary_prf({"u": [11, 40]}, {"u": [10, 20]}, 2)
        assert (p, r, f) == (0.5, 0.5, 0.5)

    def test_edges_excluded(self):
        p, r, f = boundary_prf(
            {"u": [0, 5, 30]}, {"u": [0, 5, 30]}, 1, utterance_lengths={"u": 30}
        )
        assert (p, r, f) == (1.0, 1.0, 1.0)

    def test_one_to_one_matching(self):
        # two predictions near one truth boundary: only one may match
        p, r, f = boundary_prf({"u": [9, 11]}, {"u": [10]}, 2)
        assert p == 0.5 and r == 1.0

    def test_fixture_matches_exhaustive_matching(self):
        corpus, words, phones, pred = hand_fixture()
        pred_bounds = {u: sorted({e for (s, e), _ in spans})[:-1] for u, spans in pred.items()}
        truth_bounds = {
            "utt1": [6, 9, 18, 24],
            "utt2": [3, 9, 18, 24],
        }
        p, r, f = boundary_prf(pred_bounds, truth_bounds, 1)
        matched = sum(
            naive_max_boundary_matching(pred_bounds[u], truth_bounds[u], 1)
            for u in truth_bounds
        )
        assert matched == 8
        assert p == pytest.approx(8 / 9)
        assert r == pytest.approx(1.0)
        assert f == pytest.approx(2 * (8 / 9) / (8 / 9 + 1))


class TestTokenType:
    def test_fixture_hand_values(self):
        # 11 predicted tokens ('mean' split in two), 9 credited; 9 of the 10
        # truth tokens recovered
        corpus, words, phones, pred = hand_fixture()
        token_prf, type_prf = token_type_prf(pred, words, phones, overlap_frames=3)
        assert token_prf[0] == pytest.approx(9 / 11)
        assert token_prf[1] == pytest.approx(9 / 10)
        assert token_prf[2] == pytest.approx(6 / 7)
        assert type_prf[0] == pytest.approx(5 / 7)
        assert type_prf[1] == pytest.approx(1.0)
        assert type_prf[2] == pytest.approx(5 / 6)

    def test_perfect_segmentation(self):
        corpus, words, phones, pred = hand_fixture()
        perfect = {
            u: [((w.start_frame, w.end_frame), i) for i, w in enumerate(words)
                if w.utterance_id == u]
            for u in ("utt1", "utt2")
        }
        token_prf, type_prf = token_type_prf(perfect, words, phones)
        assert token_prf == (1.0, 1.0, 1.0)
        assert type_prf == (1.0, 1.0, 1.0)

    def test_empty_prediction(self):
        corpus, words, phones, pred = hand_fixture()
        token_prf, type_prf = token_type_prf(
            {"utt1": [], "utt2": []}, words, phones
        )
        assert token_prf == (0.0, 0.0, 0.0)
        assert type_prf == (0.0, 0.0, 0.0)

    def test_missing_phones_rejected(self):
        corpus, words, phones, pred = hand_fixture()
        with pytest.raises(ValueError, match="phone alignments"):
            token_type_prf(pred, words, [])


class TestNed:
    def test_identical_strings_zero(self):
        corpus, words, phones, pred = hand_fixture()
        same = {"utt1": [((0, 6), 0), ((18, 24), 0)]}
        assert ned(same, phones) == 0.0

    def test_paper_worked_value(self):
        # /m iy/ against /m iy n/ in one cluster: edit distance 1, longer 3
        corpus, words, phones, pred = hand_fixture()
        cluster = {"utt1": [((9, 15), 2)], "utt2": [((9, 18), 2)]}
        assert ned(cluster, phones) == pytest.approx(1 / 3)

    def test_three_token_cluster(self):
        phones = [
            TokenAlignment("u", 0, 2, "a"), TokenAlignment("u", 2, 4, "b"),
            TokenAlignment("u", 4, 6, "a"), TokenAlignment("u", 6, 8, "b"),
            TokenAlignment("u", 8, 10, "c"), TokenAlignment("u", 10, 12, "d"),
        ]
        cluster = {"u": [((0, 4), 0), ((4, 8), 0), ((8, 12), 0)]}
        # strings ab, ab, cd: pair distances 0, 1, 1
        assert ned(cluster, phones, overlap_frames=2) == pytest.approx(2 / 3)

    def test_fixture_full_value_matches_naive(self):
        corpus, words, phones, pred = hand_fixture()
        value = ned(pred, phones)
        strings = {
            0: [("y", "ae")] * 3, 1: [("ay",)] * 2,
            2: [("m", "iy"), ("m", "iy", "n")], 3: [("n",)],
            4: [("ow", "k")] * 2, 5: [("b", "ay")],
        }
        total, pairs = 0.0, 0
        for toks in strings.values():
            for a, b in itertools.combinations(toks, 2):
                total += naive_edit_distance(a, b) / max(len(a), len(b))
                pairs += 1
        assert value == pytest.approx(total / pairs) == pytest.approx(1 / 18)

    def test_no_pairs_rejected(self):
        corpus, words, phones, pred = hand_fixture()
        with pytest.raises(ValueError, match="no within-cluster pairs"):
            ned({"utt1": [((0, 6), 0)]}, phones)

    def test_edit_distance_matches_naive(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = tuple(rng.choice(list("abc"), size=rng.integers(0, 5)))
            b = tuple(rng.choice(list("abc"), size=rng.integers(0, 5)))
            assert edit_distance(a, b) == naive_edit_distance(a, b)


class TestSameDifferentAp:
    def test_perfect_separation(self):
        items = [
            (np.array([1.0, 0.0]), "a"), (np.array([1.0, 0.01]), "a"),
            (np.array([0.0, 1.0]), "b"), (np.array([0.01, 1.0]), "b"),
        ]
        assert same_different_ap(items, distance="cosine") == pytest.approx(1.0)

    def test_hand_case_with_one_inversion(self):
        # distances chosen so one different pair sneaks below a same pair
        items = [
            (np.array([1.0, 0.0]), "a"),
            (np.array([1.0, 0.2]), "a"),
            (np.array([1.0, 0.12]), "b"),
            (np.array([-1.0, 0.3]), "b"),
        ]
        dists, flags = [], []
        for (ra, la), (rb, lb) in itertools.combinations(items, 2):
            from embedseg.dtw import cosine_distance

            dists.append(cosine_distance(ra, rb))
            flags.append(la == lb)
        expected = naive_ap(dists, flags)
        assert same_different_ap(items, distance="cosine") == pytest.approx(expected)

    def test_random_labels_near_base_rate(self):
        rng = np.random.default_rng(1)
        reps = [rng.normal(size=3) for _ in range(12)]
        aps, base_rates = [], []
        for trial in range(40):
            labels = rng.permutation(["a"] * 6 + ["b"] * 6)
            items = list(zip(reps, labels))
            pairs = list(itertools.combinations(labels, 2))
            base_rates.append(np.mean([a == b for a, b in pairs]))
            aps.append(same_different_ap(items, distance="cosine"))
        # representations carry no label signal: mean AP ~ base rate
        assert abs(np.mean(aps) - np.mean(base_rates)) < 3 * np.std(aps) / np.sqrt(len(aps))

    def test_dtw_distance_mode(self):
        rng = np.random.default_rng(2)
        items = [
            (np.tile([1.0, 0.0], (rng.integers(3, 6), 1)), "a") for _ in range(2)
        ] + [
            (np.tile([0.0, 1.0], (rng.integers(3, 6), 1)), "b") for _ in range(2)
        ]
        assert same_different_ap(items, distance="dtw") == pytest.approx(1.0)

    def test_requires_two_labels(self):
        items = [(np.ones(2), "a"), (np.ones(2), "a")]
        with pytest.raises(ValueError, match="2 distinct labels"):
            same_different_ap(items)


class TestInvariances:
    def test_metrics_invariant_under_cluster_relabeling(self):
        corpus, words, phones, pred = hand_fixture()
        relabel = {0: 17, 1: 4, 2: 99, 3: 0, 4: 55, 5: 23}
        renamed = {
            u: [((s, e), relabel[k]) for (s, e), k in spans]
            for u, spans in pred.items()
        }
        for p in (pred, renamed):
            m = build_mapping_matrix(p, words, unit="frames")
            assert cluster_purity(m) == pytest.approx(1.0)
        assert ned(pred, phones) == pytest.approx(ned(renamed, phones))
        a = token_type_prf(pred, words, phones)
        b = token_type_prf(renamed, words, phones)
        assert a == b

    def test_many_to_one_purity_bounds_one_to_one_accuracy(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            counts = rng.integers(0, 10, size=(4, 6))
            if counts.sum() == 0:
                continue
            m = MappingMatrix(counts, list("abcd"), list(range(6)), "frames")
            purity = cluster_purity(m)
            bound = map_clusters(m, "one_to_one_greedy")
            accuracy = sum(
                counts[m.labels.index(lab), m.clusters.index(k)]
                for k, lab in bound.items() if lab is not None
            ) / counts.sum()
            assert purity >= accuracy - 1e-12

    def test_wer_one_to_one_at_least_many_to_one(self):
        corpus, words, phones, pred = hand_fixture()
        mapping = build_mapping_matrix(pred, words, unit="frames")
        truth_seqs = {
            "utt1": ["yeah", "i", "mean", "yeah", "ok"],
            "utt2": ["i", "yeah", "mean", "bye", "ok"],
        }
        rates = {}
        for mode in ("one_to_one_greedy", "many_to_one"):
            cl_map = map_clusters(mapping, mode)
            seqs = {u: [cl_map[k] for _, k in spans] for u, spans in pred.items()}
            rates[mode], *_ = wer(seqs, truth_seqs)
        assert rates["one_to_one_greedy"] >= rates["many_to_one"] - 1e-12
