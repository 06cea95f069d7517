"""Collapsed Bayesian Gaussian mixture model with fixed spherical covariance.

Mixture weights (symmetric Dirichlet prior, concentration a/K per component)
and component means (spherical Gaussian prior) are marginalized out; only
per-component counts and embedding sums are maintained. Scoring follows the
collapsed conditionals: an assignment prior

    P(z = k | rest) = (N_k + a/K) / (N + a)

with N_k and N excluding the item being scored, and a posterior predictive
that factorizes over dimensions into univariate Gaussians

    N(x_d | mu_N, sigma_N^2 + sigma^2),
    sigma_N^2 = sigma^2 sigma_0^2 / (N_k sigma_0^2 + sigma^2),
    mu_N = sigma_N^2 (mu_0 / sigma_0^2 + N_k xbar / sigma^2).

A token-bigram language model over component ids (interpolated with the
unigram estimator and raised to a scaling exponent) can replace the unigram
assignment prior when sampling assignments left to right.

All probability arithmetic is done in log space.
"""

import logging

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


class NgPrior:
    """Conjugate prior for component means: N(mu0, sigma0_sq I), with the
    shared fixed spherical covariance sigma_sq I; sigma0_sq = sigma_sq/kappa0.
    """

    __slots__ = ("mu0", "sigma_sq", "kappa0", "sigma0_sq")

    def __init__(self, mu0, sigma_sq, kappa0):
        self.mu0 = np.asarray(mu0, dtype=np.float64)
        if sigma_sq <= 0 or kappa0 <= 0:
            raise ValueError("sigma_sq and kappa0 must be positive")
        self.sigma_sq = float(sigma_sq)
        self.kappa0 = float(kappa0)
        self.sigma0_sq = self.sigma_sq / self.kappa0

    @property
    def dim(self):
        return self.mu0.shape[0]

    def __repr__(self):
        return "NgPrior(dim=%d, sigma_sq=%g, kappa0=%g)" % (
            self.dim, self.sigma_sq, self.kappa0,
        )


class GmmState:
    """Sufficient statistics and assignments of the collapsed Bayesian GMM.

    Component ids are stable integers 0..K-1; components may empty out and be
    reused. Items are registered under caller-chosen hashable keys so the
    held-out convention (remove before scoring) can be enforced.

    Parameters
    ----------
    K : int
        Maximum number of components.
    alpha_a : float
        Symmetric Dirichlet concentration (the full prior mass; each
        component receives alpha_a / K).
    prior : NgPrior
    """

    def __init__(self, K, alpha_a, prior):
        if K < 1:
            raise ValueError("need K >= 1")
        if alpha_a <= 0:
            raise ValueError("alpha_a must be positive")
        self.K = int(K)
        self.alpha_a = float(alpha_a)
        self.prior = prior
        self.counts = np.zeros(K, dtype=np.int64)
        self.sums = np.zeros((K, prior.dim), dtype=np.float64)
        self.N = 0
        self.assignments = {}

    # -- sufficient statistics ------------------------------------------------

    def update_stats(self, x, k, mode):
        """Add or remove one embedding's contribution to component k."""
        x = np.asarray(x, dtype=np.float64)
        if mode == "add":
            self.counts[k] += 1
            self.sums[k] += x
            self.N += 1
        elif mode == "remove":
            if self.counts[k] <= 0:
                raise ValueError("remove from empty component %d" % k)
            self.counts[k] -= 1
            self.sums[k] -= x
            self.N -= 1
            if self.counts[k] == 0:
                self.sums[k] = 0.0  # cancel accumulated round-off exactly
        else:
            raise ValueError("mode must be 'add' or 'remove'")

    def add_item(self, key, x, k):
        if key in self.assignments:
            raise ValueError("item %r already assigned" % (key,))
        self.update_stats(x, k, "add")
        self.assignments[key] = k

    def remove_item(self, key, x):
        """Remove a registered item; returns the component it was assigned to."""
        try:
            k = self.assignments.pop(key)
        except KeyError:
            raise ValueError("item %r is not assigned" % (key,)) from None
        self.update_stats(x, k, "remove")
        return k

    def components_in_use(self):
        return int(np.count_nonzero(self.counts))

    # -- collapsed scoring ----------------------------------------------------

    def log_assign_prior(self, k):
        """log (N_k + a/K)/(N + a); counts must exclude the item scored."""
        return float(
            np.log(self.counts[k] + self.alpha_a / self.K)
            - np.log(self.N + self.alpha_a)
        )

    def log_assign_prior_all(self):
        return np.log(self.counts + self.alpha_a / self.K) - np.log(
            self.N + self.alpha_a
        )

    def _posterior_params(self):
        """Per-component posterior mean and predictive variance (spherical)."""
        p = self.prior
        var_n = p.sigma_sq * p.sigma0_sq / (self.counts * p.sigma0_sq + p.sigma_sq)
        mu_n = var_n[:, None] * (p.mu0 / p.sigma0_sq + self.sums / p.sigma_sq)
        return mu_n, var_n + p.sigma_sq

    def log_post_pred(self, x, k):
        """Log posterior predictive density of x under component k."""
        x = np.asarray(x, dtype=np.float64)
        mu_n, pred_var = self._posterior_params()
        d = self.prior.dim
        sq = float(np.sum((x - mu_n[k]) ** 2))
        return float(-0.5 * d * (_LOG_2PI + np.log(pred_var[k])) - sq / (2.0 * pred_var[k]))

    def log_post_pred_all(self, x):
        """(K,) vector of log posterior predictives for one embedding."""
        return self.log_post_pred_many(np.asarray(x)[None, :])[0]

    def log_post_pred_many(self, X):
        """(n, K) matrix of log posterior predictives for rows of X."""
        X = np.asarray(X, dtype=np.float64)
        mu_n, pred_var = self._posterior_params()
        d = self.prior.dim
        sq = (
            np.sum(X**2, axis=1)[:, None]
            - 2.0 * (X @ mu_n.T)
            + np.sum(mu_n**2, axis=1)[None, :]
        )
        return -0.5 * d * (_LOG_2PI + np.log(pred_var))[None, :] - sq / (
            2.0 * pred_var[None, :]
        )

    def log_marginal(self, x):
        """log p(x | state) with the component marginalized out."""
        return float(
            logsumexp(self.log_assign_prior_all() + self.log_post_pred_all(x))
        )

    def log_marginal_many(self, X):
        """(n,) vector of log marginals for rows of X."""
        return logsumexp(
            self.log_assign_prior_all()[None, :] + self.log_post_pred_many(X),
            axis=1,
        )


class BigramLm:
    """Interpolated token-bigram model over component ids.

    P(k | l) = lambda (N_k + a/K)/(N + a) + (1 - lambda) (N_{k|l} + b/K)/(N_l + b)

    with N_l the number of observed transitions out of l. All counts exclude
    the token being sampled. `eta` is the scaling exponent applied to the
    language-model term when combined with acoustic scores.
    """

    def __init__(self, K, lambda_interp=0.1, a_uni=1.0, b_bi=1.0, eta=1.0):
        if not 0.0 <= lambda_interp <= 1.0:
            raise ValueError("lambda_interp must lie in [0, 1]")
        if a_uni <= 0 or b_bi <= 0:
            raise ValueError("smoothing masses a_uni and b_bi must be positive")
        if eta < 0:
            raise ValueError("eta must be non-negative")
        self.K = int(K)
        self.lambda_interp = float(lambda_interp)
        self.a_uni = float(a_uni)
        self.b_bi = float(b_bi)
        self.eta = float(eta)
        self.uni_counts = np.zeros(K, dtype=np.int64)
        self.bi_counts = np.zeros((K, K), dtype=np.int64)  # [l, k]
        self.ctx_counts = np.zeros(K, dtype=np.int64)
        self.total = 0

    def add_token(self, k):
        self.uni_counts[k] += 1
        self.total += 1

    def remove_token(self, k):
        if self.uni_counts[k] <= 0:
            raise ValueError("no tokens of component %d to remove" % k)
        self.uni_counts[k] -= 1
        self.total -= 1

    def add_transition(self, l, k):
        self.bi_counts[l, k] += 1
        self.ctx_counts[l] += 1

    def remove_transition(self, l, k):
        if self.bi_counts[l, k] <= 0:
            raise ValueError("no transitions %d -> %d to remove" % (l, k))
        self.bi_counts[l, k] -= 1
        self.ctx_counts[l] -= 1

    def unigram_vector(self):
        """(K,) unigram estimator (N_k + a/K)/(N + a)."""
        return (self.uni_counts + self.a_uni / self.K) / (self.total + self.a_uni)

    def prob_vector(self, context=None):
        """(K,) next-component probabilities given the left context.

        `context=None` (utterance-initial token, no left context) falls back
        to the unigram estimator.
        """
        uni = self.unigram_vector()
        if context is None:
            return uni
        bi = (self.bi_counts[context] + self.b_bi / self.K) / (
            self.ctx_counts[context] + self.b_bi
        )
        return self.lambda_interp * uni + (1.0 - self.lambda_interp) * bi

    def log_prob_vector_scaled(self, context=None):
        """log of the eta-scaled, renormalized distribution P(k|l)^eta / Z.

        With eta = 0 this is exactly uniform, matching the reading that a
        zero exponent makes the language model uninformative.
        """
        logp = self.eta * np.log(self.prob_vector(context))
        return logp - logsumexp(logp)


def bigram_lm_prob(lm, k, l):
    """Interpolated bigram probability P(k | l) (unscaled)."""
    return float(lm.prob_vector(l)[k])


def sample_assignment(state, x, rng, lm=None, left_context=None):
    """Draw a component id for embedding x and add it to the statistics.

    The caller must have removed x from `state` first (held-out convention).
    Without `lm`, the draw follows the collapsed unigram conditional: prior
    times posterior predictive. With `lm`, the language-model term (given the
    previous token's component, or the unigram estimator utterance-initially)
    is raised to `lm.eta` in place of the unigram prior.
    """
    x = np.asarray(x, dtype=np.float64)
    log_pred = state.log_post_pred_all(x)
    if lm is None:
        logits = state.log_assign_prior_all() + log_pred
    else:
        logits = lm.eta * np.log(lm.prob_vector(left_context)) + log_pred
    logits = logits - logsumexp(logits)
    probs = np.exp(logits)
    probs = probs / probs.sum()
    k = int(rng.choice(state.K, p=probs))
    state.update_stats(x, k, "add")
    return k


def dump_gmm_state(state, path):
    """Write counts and sums in a diffable text form (debugging, fixtures)."""
    with open(path, "w") as f:
        f.write(
            "K %d alpha_a %s sigma_sq %s kappa0 %s dim %d N %d\n"
            % (
                state.K,
                repr(float(state.alpha_a)),
                repr(float(state.prior.sigma_sq)),
                repr(float(state.prior.kappa0)),
                state.prior.dim,
                state.N,
            )
        )
        f.write("mu0 " + " ".join(repr(float(v)) for v in state.prior.mu0) + "\n")
        for k in range(state.K):
            f.write(
                "%d %d %s\n"
                % (k, state.counts[k], " ".join(repr(float(v)) for v in state.sums[k]))
            )


def load_gmm_state(path):
    """Rebuild a stats-only GmmState from `dump_gmm_state` output.

    Item assignments are not part of the dump; the returned state has an
    empty registry.
    """
    with open(path) as f:
        head = f.readline().split()
        K = int(head[1])
        alpha_a = float(head[3])
        sigma_sq = float(head[5])
        kappa0 = float(head[7])
        n_total = int(head[11])
        mu0 = np.array([float(v) for v in f.readline().split()[1:]])
        state = GmmState(K, alpha_a, NgPrior(mu0, sigma_sq, kappa0))
        for line in f:
            parts = line.split()
            k = int(parts[0])
            state.counts[k] = int(parts[1])
            state.sums[k] = [float(v) for v in parts[2:]]
    state.N = n_total
    return state
