"""Reference-vector acoustic word embeddings via regularized Laplacian eigenmaps.

A segment is compared by DTW alignment cost to every exemplar in a reference
set; a radial basis function kernel turns costs into similarities,

    K(Y_i, Y_j) = exp(-DTW(Y_i, Y_j)^2 / (2 sigma_K^2)),

and the out-of-sample projection to target dimension j is

    h_j(Y) = sum_i coeffs[i, j] * K(Y_i, Y),

where the coefficient columns solve the generalized eigenproblem
(L K + xi I) alpha = lambda K alpha, with L the normalized Laplacian of the
symmetric k-nearest-neighbour graph over the reference set and K the kernel
Gram matrix.
"""

import logging

import numpy as np
import scipy.linalg

from .dtw import dtw_cost

logger = logging.getLogger(__name__)


class EigenmapModel:
    """Fitted reference set, kernel parameters and projection coefficients.

    `coeffs` has one column per embedding dimension; `eigenvalues` stores the
    matching generalized eigenvalues so the eigenpairs remain checkable.
    """

    def __init__(self, ref_set, sigma_k, knn_k, reg_xi, coeffs, eigenvalues,
                 gram, metric="cosine"):
        if len(ref_set) < coeffs.shape[1] + 1:
            raise ValueError("need more reference entries than embedding dims")
        self.ref_set = ref_set
        self.sigma_k = float(sigma_k)
        self.knn_k = int(knn_k)
        self.reg_xi = float(reg_xi)
        self.coeffs = coeffs
        self.eigenvalues = eigenvalues
        self.gram = gram
        self.metric = metric

    @property
    def n_ref(self):
        return len(self.ref_set)

    @property
    def d_emb(self):
        return self.coeffs.shape[1]


def _kernel(costs, sigma_k):
    return np.exp(-(costs**2) / (2.0 * sigma_k**2))


def _knn_graph(costs, knn_k, sigma_k):
    """Symmetric kNN adjacency with Gaussian weights (self-edges excluded)."""
    n = costs.shape[0]
    adjacency = np.zeros((n, n), dtype=bool)
    for i in range(n):
        order = np.argsort(costs[i], kind="stable")
        neighbours = [j for j in order if j != i][:knn_k]
        adjacency[i, neighbours] = True
    adjacency |= adjacency.T
    return np.where(adjacency, _kernel(costs, sigma_k), 0.0)


def _is_connected(weights):
    n = weights.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(weights[i] > 0)[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def fit_eigenmaps(ref_set, knn_k=30, sigma_k=0.04, reg_xi=2.0, d_emb=11,
                  metric="cosine"):
    """Fit the projection coefficients on a reference set of frame matrices.

    The trivial smoothest eigenvector is discarded when the neighbour graph
    is connected (a disconnected graph logs a warning and keeps all pairs);
    the `d_emb` eigenvectors of smallest remaining eigenvalue are kept, each
    scaled to unit Euclidean norm with its first nonzero coefficient made
    positive. (The alignment-cost kernel is not guaranteed positive definite,
    so the kernel-induced norm is not a usable normalizer.)
    """
    n = len(ref_set)
    if n <= d_emb:
        raise ValueError("need len(ref_set) > d_emb (got %d <= %d)" % (n, d_emb))

    costs = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            costs[i, j] = costs[j, i] = dtw_cost(ref_set[i], ref_set[j], metric)

    gram = _kernel(costs, sigma_k)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(
            "singular kernel Gram matrix (condition estimate %.3g); "
            "reference set likely contains duplicates" % cond
        )

    weights = _knn_graph(costs, knn_k, sigma_k)
    connected = _is_connected(weights)
    if not connected:
        logger.warning(
            "k-nearest-neighbour graph is disconnected (k=%d); keeping the "
            "smoothest eigenvector", knn_k,
        )
    degrees = weights.sum(axis=1)
    inv_sqrt = np.where(degrees > 0, 1.0 / np.sqrt(np.maximum(degrees, 1e-300)), 0.0)
    laplacian = np.eye(n) - inv_sqrt[:, None] * weights * inv_sqrt[None, :]

    lhs = laplacian @ gram + reg_xi * np.eye(n)
    eigvals, eigvecs = scipy.linalg.eig(lhs, gram)
    if np.abs(eigvals.imag).max() > 1e-8 * max(1.0, np.abs(eigvals.real).max()):
        raise np.linalg.LinAlgError("generalized eigenvalues are not real")
    eigvals = eigvals.real
    eigvecs = eigvecs.real
    order = np.argsort(eigvals, kind="stable")
    start = 1 if connected else 0
    picked = order[start:start + d_emb]
    if len(picked) < d_emb:
        raise ValueError("not enough eigenpairs for %d dimensions" % d_emb)

    coeffs = np.empty((n, d_emb))
    eigenvalues = np.empty(d_emb)
    for out, idx in enumerate(picked):
        alpha = eigvecs[:, idx]
        alpha = alpha / np.linalg.norm(alpha)
        nonzero = np.nonzero(np.abs(alpha) > 1e-12)[0]
        if nonzero.size and alpha[nonzero[0]] < 0:
            alpha = -alpha
        coeffs[:, out] = alpha
        eigenvalues[out] = eigvals[idx]
    return EigenmapModel(
        ref_set, sigma_k, knn_k, reg_xi, coeffs, eigenvalues, gram, metric,
    )


def kernel_vector(model, segment):
    """Kernel similarities of one segment against the reference set."""
    costs = np.array([dtw_cost(segment, ref, model.metric) for ref in model.ref_set])
    return _kernel(costs, model.sigma_k)


def eigenmaps_embed(model, segment):
    """Project a frame matrix to the raw d_emb-dimensional embedding."""
    return model.coeffs.T @ kernel_vector(model, segment)


def eigenproblem_residual(model):
    """max-norm residual of (L K + xi I) alpha = lambda K alpha per eigenpair.

    Recomputed from the stored reference set; used to verify a fitted model.
    """
    n = model.n_ref
    costs = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            costs[i, j] = costs[j, i] = dtw_cost(
                model.ref_set[i], model.ref_set[j], model.metric
            )
    gram = _kernel(costs, model.sigma_k)
    weights = _knn_graph(costs, model.knn_k, model.sigma_k)
    degrees = weights.sum(axis=1)
    inv_sqrt = np.where(degrees > 0, 1.0 / np.sqrt(np.maximum(degrees, 1e-300)), 0.0)
    laplacian = np.eye(n) - inv_sqrt[:, None] * weights * inv_sqrt[None, :]
    lhs = laplacian @ gram + model.reg_xi * np.eye(n)
    residuals = np.empty(model.d_emb)
    for j in range(model.d_emb):
        alpha = model.coeffs[:, j]
        residuals[j] = np.abs(
            lhs @ alpha - model.eigenvalues[j] * (gram @ alpha)
        ).max()
    return residuals
