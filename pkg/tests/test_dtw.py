import itertools

import numpy as np
import pytest

from embedseg.dtw import cosine_distance, dtw_align, dtw_cost


def brute_force_dtw(X, Y, metric):
    """Enumerate every monotone warping path (oracle).

    The path criterion is lexicographic (total distance, then path length),
    matching the contract: the path minimizes the total, and the reported
    cost is that total divided by the path's length.
    """
    n, m = len(X), len(Y)
    best = [(np.inf, 0)]

    def walk(i, j, total, steps):
        total += metric(X[i], Y[j])
        steps += 1
        if i == n - 1 and j == m - 1:
            best[0] = min(best[0], (total, steps))
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total, steps)
        if i + 1 < n:
            walk(i + 1, j, total, steps)
        if j + 1 < m:
            walk(i, j + 1, total, steps)

    walk(0, 0, 0.0, 0)
    total, steps = best[0]
    return total / steps


def euclid(u, v):
    return float(np.linalg.norm(np.asarray(u) - np.asarray(v)))


class TestCosineDistance:
    def test_identical_vectors(self):
        v = np.array([1.0, 2.0, -3.0])
        assert cosine_distance(v, v) == pytest.approx(0.0, abs=1e-12)

    def test_antipodal(self):
        v = np.array([0.3, -0.4])
        assert cosine_distance(v, -v) == pytest.approx(2.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_zero_vector_neutral(self):
        assert cosine_distance([0.0, 0.0], [1.0, 2.0]) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            cosine_distance([1.0], [1.0, 2.0])


class TestDtwAlign:
    def test_identical_sequences(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(5, 3))
        result = dtw_align(X, X, metric="euclidean")
        assert result.cost == pytest.approx(0.0, abs=1e-12)
        assert result.path == [(i, i) for i in range(5)]

    def test_single_frame_covers_other_sequence(self):
        X = np.array([[1.0, 0.0]])
        Y = np.ones((4, 2))
        result = dtw_align(X, Y, metric="euclidean")
        assert [j for _, j in result.path] == [0, 1, 2, 3]
        assert all(i == 0 for i, _ in result.path)

    def test_small_case_matches_enumeration(self):
        X = np.array([[0.0], [1.0]])
        Y = np.array([[0.0], [0.0], [1.0]])
        result = dtw_align(X, Y, metric=euclid)
        assert result.cost == pytest.approx(brute_force_dtw(X, Y, euclid), abs=1e-12)
        assert result.cost == pytest.approx(0.0)

    def test_random_small_sequences_match_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n, m = rng.integers(1, 7, size=2)
            X = rng.normal(size=(n, 2))
            Y = rng.normal(size=(m, 2))
            got = dtw_align(X, Y, metric=euclid).cost
            want = brute_force_dtw(X, Y, euclid)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_cost_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            X = rng.normal(size=(rng.integers(1, 8), 3))
            Y = rng.normal(size=(rng.integers(1, 8), 3))
            assert dtw_cost(X, Y) == pytest.approx(dtw_cost(Y, X), rel=1e-12)

    def test_path_endpoints_and_steps(self):
        rng = np.random.default_rng(5)
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        path = dtw_align(X, Y).path
        assert path[0] == (0, 0) and path[-1] == (5, 3)
        for (i0, j0), (i1, j1) in zip(path, path[1:]):
            assert (i1 - i0, j1 - j0) in [(1, 0), (0, 1), (1, 1)]

    def test_cost_is_path_mean(self):
        rng = np.random.default_rng(9)
        X, Y = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        result = dtw_align(X, Y, metric=euclid)
        manual = np.mean([euclid(X[i], Y[j]) for i, j in result.path])
        assert result.cost == pytest.approx(manual, rel=1e-12)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            dtw_align(np.zeros((0, 2)), np.zeros((3, 2)))
