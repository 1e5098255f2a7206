"""Finite Poisson mixture baseline fitted by EM, with BIC."""

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from mixmem.families import DEGENERATE_WEIGHT_FLOOR, RATE_FLOOR, PoissonGamma
from mixmem.validation import check_count_matrix, check_simplex

__all__ = [
    "PoissonMixture",
    "e_step",
    "m_step",
    "log_likelihood",
    "fit_em",
    "bic",
]


def _log_joint(X, weights, rates, family):
    """log tau_g + sum_m log p(x_nm | rate_gm), shape (N, G).

    Rates are floored at RATE_FLOOR before the log; zero mixture weights
    contribute -inf rather than raising.
    """
    rates = np.maximum(np.asarray(rates, dtype=float), RATE_FLOOR)
    log_comp = family.log_density(X[:, :, np.newaxis], rates.T[np.newaxis, :, :])
    weights = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.where(weights > 0, np.log(np.maximum(weights, 1e-300)), -np.inf)
    return log_w[np.newaxis, :] + log_comp.sum(axis=1)


def e_step(X, weights, rates, family=None):
    """Posterior group responsibilities, one row per observation."""
    family = family if family is not None else PoissonGamma()
    X = np.asarray(X, dtype=float)
    lj = _log_joint(X, weights, rates, family)
    norm = logsumexp(lj, axis=1)
    if not np.all(np.isfinite(norm)):
        raise ValueError(
            "an observation has zero density under every component; "
            "check mixture weights and the rate floor"
        )
    return np.exp(lj - norm[:, np.newaxis])


def m_step(X, resp, family=None):
    """Closed-form weight and rate updates from responsibilities.

    tau_g = mean_n resp[n, g]; rate_gm = weighted mean of column m. Groups
    with ~zero total responsibility revert to the global column means.
    """
    family = family if family is not None else PoissonGamma()
    X = np.asarray(X, dtype=float)
    resp = check_simplex(np.asarray(resp, dtype=float), name="responsibilities")
    totals = resp.sum(axis=0)                      # (G,)
    weights = totals / X.shape[0]
    rates = (resp.T @ X) / np.maximum(totals, DEGENERATE_WEIGHT_FLOOR)[:, np.newaxis]
    degenerate = totals < DEGENERATE_WEIGHT_FLOOR
    if np.any(degenerate):
        rates[degenerate] = X.mean(axis=0)[np.newaxis, :]
    return weights, rates


def log_likelihood(X, weights, rates, family=None):
    """Total log-likelihood of the mixture, computed with log-sum-exp."""
    family = family if family is not None else PoissonGamma()
    X = np.asarray(X, dtype=float)
    return float(logsumexp(_log_joint(X, weights, rates, family), axis=1).sum())


def bic(loglik, n_groups, n_obs, n_attr):
    """Bayesian information criterion, -2 loglik + kappa log N.

    The free parameter count is kappa = (G - 1) + G * M: the weight
    simplex plus every rate. Lower is better.
    """
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    kappa = (n_groups - 1) + n_groups * n_attr
    return -2.0 * loglik + kappa * np.log(n_obs)


def fit_em(X, n_groups, family=None, resp_init=None, max_iter=2000, tol=1e-8,
           random_state=None):
    """EM from one responsibility initialization.

    When `resp_init` is None, responsibilities are drawn from a flat
    Dirichlet per observation using `random_state`. Returns
    (weights, rates, resp, loglik_trace, converged, n_iter).
    """
    family = family if family is not None else PoissonGamma()
    X = check_count_matrix(X)
    if resp_init is None:
        rng = (random_state if isinstance(random_state, np.random.Generator)
               else np.random.default_rng(random_state))
        resp = rng.dirichlet(np.ones(n_groups), size=X.shape[0])
    else:
        resp = np.asarray(resp_init, dtype=float)
        resp = resp / resp.sum(axis=1, keepdims=True)

    weights, rates = m_step(X, resp, family)
    trace = [log_likelihood(X, weights, rates, family)]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        resp = e_step(X, weights, rates, family)
        weights, rates = m_step(X, resp, family)
        trace.append(log_likelihood(X, weights, rates, family))
        rel_change = abs(trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-10)
        if rel_change < tol:
            converged = True
            break
    return weights, rates, resp, np.asarray(trace), converged, n_iter


class PoissonMixture(BaseEstimator):
    """Poisson mixture model fitted by EM.

    Each observation belongs to exactly one of `n_components` groups;
    conditional on the group, its attributes are independent Poisson
    counts with per-attribute rates.

    Parameters
    ----------
    n_components : int, default=1
    tol : float, default=1e-8
        Relative log-likelihood change that stops EM.
    max_iter : int, default=2000
    n_restarts : int, default=10
        Seeded random-responsibility initializations; best likelihood wins.
    random_state : int, Generator, or None

    Attributes
    ----------
    weights_ : array (G,), mixture weights.
    rates_ : array (G, M), per-group Poisson rates.
    responsibilities_ : array (N, G), training-data group posteriors.
    loglik_trace_, loglik_, converged_, n_iter_ : fit diagnostics.
    """

    def __init__(self, n_components=1, tol=1e-8, max_iter=2000, n_restarts=10,
                 random_state=None):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_count_matrix(X)
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        family = PoissonGamma()

        if isinstance(self.random_state, np.random.Generator):
            rngs = self.random_state.spawn(self.n_restarts)
        else:
            seq = np.random.SeedSequence(self.random_state)
            rngs = [np.random.default_rng(child) for child in seq.spawn(self.n_restarts)]

        best = None
        for rng in rngs:
            result = fit_em(X, self.n_components, family=family,
                            max_iter=self.max_iter, tol=self.tol, random_state=rng)
            if best is None or result[3][-1] > best[3][-1]:
                best = result

        weights, rates, resp, trace, converged, n_iter = best
        self.weights_ = weights
        self.rates_ = rates
        self.responsibilities_ = resp
        self.loglik_trace_ = trace
        self.loglik_ = float(trace[-1])
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.n_attributes_ = X.shape[1]
        return self

    def _check_fitted_X(self, X):
        if not hasattr(self, "rates_"):
            raise ValueError("this estimator is not fitted yet; call fit first")
        X = check_count_matrix(X)
        if X.shape[1] != self.n_attributes_:
            raise ValueError(
                f"X has {X.shape[1]} attributes, the model was fitted with "
                f"{self.n_attributes_}"
            )
        return X

    def predict_proba(self, X):
        """Posterior group probabilities for each observation."""
        X = self._check_fitted_X(X)
        return e_step(X, self.weights_, self.rates_)

    def predict(self, X):
        """Most probable group per observation (0-based labels)."""
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y=None):
        """Mean per-observation log-likelihood."""
        X = self._check_fitted_X(X)
        return log_likelihood(X, self.weights_, self.rates_) / X.shape[0]

    def bic(self, X):
        """BIC of the fitted model on `X`; lower is better."""
        X = self._check_fitted_X(X)
        return bic(log_likelihood(X, self.weights_, self.rates_),
                   self.n_components, X.shape[0], X.shape[1])
