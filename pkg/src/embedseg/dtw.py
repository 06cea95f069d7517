"""Dynamic time warping between frame sequences.

Symmetric step set {(1,0), (0,1), (1,1)}, no band constraint, cost normalized
by path length so that alignment costs are comparable across segment lengths.
"""

import numpy as np


class DtwResult:
    """Alignment cost (per-step-normalized) and the warping path."""

    __slots__ = ("cost", "path")

    def __init__(self, cost, path):
        self.cost = cost
        self.path = path

    def __repr__(self):
        return "DtwResult(cost=%.6f, path_len=%d)" % (self.cost, len(self.path))


def cosine_distance(u, v):
    """1 - cos(u, v), in [0, 2]; returns 1 if either vector is all-zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("dimension mismatch: %s vs %s" % (u.shape, v.shape))
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return float(1.0 - np.dot(u, v) / (nu * nv))


def cosine_distance_matrix(X, Y):
    """Pairwise cosine distances between the rows of X and Y."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    sim = X @ Y.T
    denom = np.outer(nx, ny)
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = 1.0 - sim / denom
    # all-zero frames get the neutral distance 1
    dist[np.isnan(dist)] = 1.0
    return dist


def euclidean_distance_matrix(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    sq = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * (X @ Y.T)
        + np.sum(Y**2, axis=1)[None, :]
    )
    return np.sqrt(np.maximum(sq, 0.0))


_METRIC_MATRIX = {
    "cosine": cosine_distance_matrix,
    "euclidean": euclidean_distance_matrix,
}


def dtw_align(X, Y, metric="cosine"):
    """Align two frame matrices; returns a `DtwResult`.

    The path minimizes the sum of frame distances over monotone paths from
    (0, 0) to (len(X)-1, len(Y)-1); cost is that sum divided by path length.
    Backtrace ties prefer the diagonal step, then the step consuming a frame
    of X, then the step consuming a frame of Y.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("cannot align an empty sequence")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(
            "frame dimension mismatch: %d vs %d" % (X.shape[1], Y.shape[1])
        )
    if callable(metric):
        local = np.array([[metric(x, y) for y in Y] for x in X])
    else:
        local = _METRIC_MATRIX[metric](X, Y)

    n, m = local.shape
    acc = np.full((n, m), np.inf)
    acc[0, 0] = local[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if i > 0:
                best = min(best, acc[i - 1, j])
            if j > 0:
                best = min(best, acc[i, j - 1])
            acc[i, j] = local[i, j] + best

    # backtrace: diagonal, then vertical (i-1), then horizontal (j-1)
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        candidates = []
        if i > 0 and j > 0:
            candidates.append((acc[i - 1, j - 1], (i - 1, j - 1)))
        if i > 0:
            candidates.append((acc[i - 1, j], (i - 1, j)))
        if j > 0:
            candidates.append((acc[i, j - 1], (i, j - 1)))
        _, (i, j) = min(candidates, key=lambda c: c[0])
        path.append((i, j))
    path.reverse()
    return DtwResult(cost=float(acc[n - 1, m - 1]) / len(path), path=path)


def dtw_cost(X, Y, metric="cosine"):
    """Per-step-normalized DTW alignment cost (no path)."""
    return dtw_align(X, Y, metric=metric).cost
