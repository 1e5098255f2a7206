"""Mixed membership inference by coordinate-ascent variational Bayes.

Each observation carries a simplex of membership weights over G basis
profiles; every attribute independently samples its profile from those
weights and then emits a value from the profile's component distribution.
The posterior is approximated by a factored family with a Dirichlet factor
(parameters ``gamma``), a per-cell multinomial factor (``phi``), and either
a conjugate factor over the component parameters (``eta_post``/``nu_post``,
the fully Bayesian mode) or maximum-likelihood point estimates
(``theta_hat``, the nuisance-parameter mode).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy
from sklearn.base import BaseEstimator, TransformerMixin

from mixmem.families import (
    DEGENERATE_WEIGHT_FLOOR,
    RATE_FLOOR,
    PoissonGamma,
)
from mixmem.special import digamma
from mixmem.validation import check_count_matrix, check_random_state, resolve_delta

__all__ = [
    "VBState",
    "MixedMembership",
    "update_gamma",
    "update_phi_bayes",
    "update_phi_nuisance",
    "update_theta_bayes",
    "update_theta_nuisance",
    "elbo",
    "coordinate_ascent",
    "initial_phi",
    "sample_mixed_membership",
]


@dataclass
class VBState:
    """Free variational parameters of one fit.

    Exactly one of (``eta_post``, ``nu_post``) and ``theta_hat`` is
    populated, matching the inference mode.
    """

    gamma: np.ndarray              # (N, G)
    phi: np.ndarray                # (N, M, G)
    eta_post: np.ndarray = None    # (G, M)
    nu_post: np.ndarray = None     # (G, M, d)
    theta_hat: np.ndarray = None   # (G, M)

    @property
    def mode(self):
        if (self.theta_hat is None) == (self.eta_post is None):
            raise ValueError("exactly one of theta_hat and eta_post must be set")
        return "nuisance" if self.theta_hat is not None else "bayes"


def _normalize_log_weights(logw):
    """Exponentiate and normalize per-cell log-weights over the last axis."""
    if not np.all(np.isfinite(logw)):
        raise ValueError(
            "non-finite log-weight in membership update; "
            "check component parameters and hyperparameters"
        )
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    return w


def update_gamma(phi, delta):
    """gamma[n, g] = sum_m phi[n, m, g] + delta[g]."""
    phi = np.asarray(phi, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if phi.ndim != 3 or delta.shape != (phi.shape[2],):
        raise ValueError(
            f"phi shape {phi.shape} incompatible with delta shape {delta.shape}"
        )
    return phi.sum(axis=1) + delta[np.newaxis, :]


def update_phi_bayes(gamma, eta_post, nu_post, X, family):
    """Cell memberships from expected component log-densities.

    phi[n, m, g] is proportional to exp(E[log k] + E[r] . s(x_nm) +
    psi(gamma[n, g])); the log h(x) constant and the -psi(sum gamma)
    term cancel in the per-cell normalization.
    """
    logp = family.expected_log_density(
        X[:, :, np.newaxis],
        np.asarray(eta_post).T,
        np.moveaxis(np.asarray(nu_post), 0, 1),
        include_base_measure=False,
    )
    return _normalize_log_weights(logp + digamma(gamma)[:, np.newaxis, :])


def update_phi_nuisance(gamma, theta_hat, X, family):
    """Cell memberships from point-estimate component log-densities.

    Rates are floored at RATE_FLOOR before the density evaluation.
    """
    theta = np.maximum(np.asarray(theta_hat, dtype=float), RATE_FLOOR)
    logp = family.log_density(X[:, :, np.newaxis], theta.T[np.newaxis, :, :])
    return _normalize_log_weights(logp + digamma(gamma)[:, np.newaxis, :])


def update_theta_bayes(phi, X, prior, family):
    """Per-(profile, attribute) conjugate posterior from soft memberships.

    eta'[g, m] = sum_n phi[n, m, g] + eta and
    nu'[g, m] = sum_n phi[n, m, g] s(x_nm) + nu.
    """
    phi = np.asarray(phi, dtype=float)
    s = family.sufficient_stat(X)
    eta_post = phi.sum(axis=0).T + np.asarray(prior.eta, dtype=float)
    nu_post = np.einsum("nmg,nmd->gmd", phi, s) + np.asarray(prior.nu, dtype=float)
    return eta_post, nu_post


def update_theta_nuisance(phi, X, family):
    """Weighted maximum-likelihood point estimates per (profile, attribute).

    Entries whose total responsibility falls below
    DEGENERATE_WEIGHT_FLOOR revert to the global column estimate, so an
    empty profile gets a neutral rate instead of a divide-by-zero.
    """
    phi = np.asarray(phi, dtype=float)
    s = family.sufficient_stat(X)              # (N, M, d)
    wsum = phi.sum(axis=0).T                   # (G, M)
    wstat = np.einsum("nmg,nmd->gmd", phi, s)  # (G, M, d)
    stat_mean = wstat / np.maximum(wsum, DEGENERATE_WEIGHT_FLOOR)[..., np.newaxis]
    degenerate = wsum < DEGENERATE_WEIGHT_FLOOR
    if np.any(degenerate):
        column_mean = s.mean(axis=0)           # (M, d)
        g_idx, m_idx = np.nonzero(degenerate)
        stat_mean[g_idx, m_idx] = column_mean[m_idx]
    return family.mle(stat_mean)


def elbo(X, state, delta, family, prior=None):
    """Evidence lower bound of the current variational state.

    In the fully Bayesian mode this bounds the log evidence with the
    component parameters integrated out; in nuisance mode it bounds the
    log marginal likelihood at the current point estimates (prior and
    component-posterior terms drop). Includes all constants, so values
    are directly comparable with exact evidence computations.
    """
    X = np.asarray(X, dtype=float)
    gamma, phi = state.gamma, state.phi
    n_obs, n_attr, n_prof = phi.shape
    delta = np.asarray(delta, dtype=float)

    e_log_tau = digamma(gamma) - digamma(gamma.sum(axis=1))[:, np.newaxis]

    if state.mode == "nuisance":
        theta = np.maximum(state.theta_hat, RATE_FLOOR)
        log_p1 = family.log_density(X[:, :, np.newaxis], theta.T[np.newaxis, :, :])
    else:
        log_p1 = family.expected_log_density(
            X[:, :, np.newaxis],
            state.eta_post.T,
            np.moveaxis(state.nu_post, 0, 1),
        )

    value = (phi * log_p1).sum()
    value += (phi * e_log_tau[:, np.newaxis, :]).sum()
    value += n_obs * (gammaln(delta.sum()) - gammaln(delta).sum())
    value += ((delta - 1.0)[np.newaxis, :] * e_log_tau).sum()
    # entropy terms of the Dirichlet and multinomial factors
    value -= (gammaln(gamma.sum(axis=1)) - gammaln(gamma).sum(axis=1)).sum()
    value -= ((gamma - 1.0) * e_log_tau).sum()
    value -= xlogy(phi, phi).sum()

    if state.mode == "bayes":
        if prior is None:
            raise ValueError("the fully Bayesian bound requires the prior")
        eta_post, nu_post = state.eta_post, state.nu_post
        e_log_k = family.expected_log_k(eta_post, nu_post)
        e_r = family.expected_natural_param(eta_post, nu_post)
        eta0 = np.broadcast_to(np.asarray(prior.eta, dtype=float), eta_post.shape)
        nu0 = np.broadcast_to(np.asarray(prior.nu, dtype=float), nu_post.shape)
        value += family.log_prior_norm(eta0, nu0).sum()
        value += (eta0 * e_log_k).sum() + (nu0 * e_r).sum()
        value -= family.log_prior_norm(eta_post, nu_post).sum()
        value -= (eta_post * e_log_k).sum() + (nu_post * e_r).sum()

    if not np.isfinite(value):
        raise ValueError("non-finite lower bound; variational state is invalid")
    return float(value)


def _update_component_params(phi, X, mode, prior, family):
    if mode == "nuisance":
        return VBState(gamma=None, phi=None, theta_hat=update_theta_nuisance(phi, X, family))
    eta_post, nu_post = update_theta_bayes(phi, X, prior, family)
    return VBState(gamma=None, phi=None, eta_post=eta_post, nu_post=nu_post)


def coordinate_ascent(X, delta, family, mode, prior=None, phi_init=None,
                      max_iter=1000, tol=1e-7):
    """Run one coordinate-ascent pass from a given membership initialization.

    Cycles phi -> gamma -> component parameters until the relative change
    of the lower bound falls below `tol` or `max_iter` cycles elapse.

    Returns (state, elbo_trace, converged, n_iter); `elbo_trace[0]` is the
    bound of the initialized state and one entry is appended per cycle.
    """
    X = np.asarray(X, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if mode not in ("nuisance", "bayes"):
        raise ValueError(f"unknown inference mode {mode!r}")
    if mode == "bayes" and prior is None:
        raise ValueError("fully Bayesian mode requires a conjugate prior")

    phi = np.asarray(phi_init, dtype=float)
    if phi.shape != (X.shape[0], X.shape[1], delta.shape[0]):
        raise ValueError(
            f"phi_init shape {phi.shape} does not match data/profile shapes"
        )
    phi = phi / phi.sum(axis=-1, keepdims=True)

    gamma = update_gamma(phi, delta)
    comp = _update_component_params(phi, X, mode, prior, family)
    state = VBState(gamma=gamma, phi=phi, eta_post=comp.eta_post,
                    nu_post=comp.nu_post, theta_hat=comp.theta_hat)
    trace = [elbo(X, state, delta, family, prior)]

    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if mode == "nuisance":
            phi = update_phi_nuisance(gamma, state.theta_hat, X, family)
        else:
            phi = update_phi_bayes(gamma, state.eta_post, state.nu_post, X, family)
        gamma = update_gamma(phi, delta)
        comp = _update_component_params(phi, X, mode, prior, family)
        state = VBState(gamma=gamma, phi=phi, eta_post=comp.eta_post,
                        nu_post=comp.nu_post, theta_hat=comp.theta_hat)
        trace.append(elbo(X, state, delta, family, prior))
        rel_change = abs(trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-10)
        if rel_change < tol:
            converged = True
            break

    return state, np.asarray(trace), converged, n_iter


def _restart_rngs(random_state, n_restarts):
    if isinstance(random_state, np.random.Generator):
        return random_state.spawn(n_restarts)
    seq = np.random.SeedSequence(random_state)
    return [np.random.default_rng(child) for child in seq.spawn(n_restarts)]


def initial_phi(X, n_profiles, delta, rng, family, scheme="seed_rows"):
    """Seeded membership initialization for one restart.

    "seed_rows" picks `n_profiles` random observations as provisional
    component rates, assigns every cell by one density-weighted pass, and
    blends the result half-and-half with uniform memberships. The
    components start separated and observation-coherent while every
    profile keeps mass in every cell, which avoids both the symmetric
    stall and the early lock-out of low-evidence profiles; it finds far
    better optima than cell-wise noise. "random_cells" draws each cell's
    memberships from a flat Dirichlet instead.
    """
    n_obs, n_attr = X.shape
    if scheme == "random_cells":
        return rng.dirichlet(np.ones(n_profiles), size=(n_obs, n_attr))
    if scheme == "seed_rows":
        idx = rng.choice(n_obs, size=n_profiles, replace=n_obs < n_profiles)
        theta0 = family.mle(family.sufficient_stat(np.asarray(X, dtype=float)[idx]))
        gamma0 = np.tile(delta + n_attr / n_profiles, (n_obs, 1))
        phi0 = update_phi_nuisance(gamma0, theta0, X, family)
        return 0.5 * phi0 + 0.5 / n_profiles
    raise ValueError(f"unknown init scheme {scheme!r}")


def sample_mixed_membership(rates, delta, n_obs, random_state=None, family=None):
    """Draw a dataset from the generative process.

    For each observation a membership simplex is drawn from
    Dirichlet(delta); each attribute independently picks a profile from
    it and emits a count from that profile's component distribution.

    Parameters
    ----------
    rates : array of shape (G, M)
        Component parameters per profile and attribute.
    delta : array of shape (G,)
        Dirichlet hyperparameter.
    n_obs : int
        Number of observations to draw.
    random_state : seed or Generator
    family : ExponentialFamily, default PoissonGamma

    Returns
    -------
    X : int array (n_obs, M)
    tau : float array (n_obs, G), the latent membership weights
    z : int array (n_obs, M), the latent profile of each cell (0-based)
    """
    family = family if family is not None else PoissonGamma()
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 2:
        raise ValueError(f"rates must be a (G, M) matrix, got shape {rates.shape}")
    family.validate_param(rates)
    n_prof, n_attr = rates.shape
    delta = resolve_delta(delta, n_prof)
    rng = check_random_state(random_state)

    tau = rng.dirichlet(delta, size=n_obs)
    cum = np.cumsum(tau, axis=1)
    u = rng.random((n_obs, n_attr))
    z = (u[:, :, np.newaxis] > cum[:, np.newaxis, :]).sum(axis=-1)
    X = family.sample(rates[z, np.arange(n_attr)[np.newaxis, :]], rng)
    return X, tau, z


class MixedMembership(TransformerMixin, BaseEstimator):
    """Mixed membership model for count matrices, fitted by variational Bayes.

    Parameters
    ----------
    n_profiles : int, default=1
        Number of basis profiles G.
    delta : "1/G", float, or array of shape (G,), default="1/G"
        Dirichlet hyperparameter over memberships. The default resolves
        to a symmetric 1/G once G is known.
    mode : {"nuisance", "bayes"}, default="nuisance"
        "nuisance" gives the component rates maximum-likelihood point
        estimates; "bayes" keeps a full conjugate posterior over them.
    prior_shape, prior_rate : float, default=0.01
        Gamma prior hyperparameters for the component rates (used in
        "bayes" mode). The defaults keep the prior close to flat.
    family : ExponentialFamily, optional
        Component distribution; defaults to PoissonGamma. A custom family
        must provide a ``conjugate_prior(shape, rate)`` factory to be
        usable in "bayes" mode.
    tol : float, default=1e-7
        Relative lower-bound change that stops the ascent.
    max_iter : int, default=1000
        Maximum coordinate-ascent cycles per restart.
    n_restarts : int, default=10
        Number of seeded initializations; the best bound wins.
    init : {"seed_rows", "random_cells"}, default="seed_rows"
        Restart initialization scheme; see :func:`initial_phi`.
    random_state : int, Generator, or None

    Attributes
    ----------
    membership_ : array (N, G)
        Posterior mean membership weights (normalized gamma rows).
    rates_ : array (G, M)
        Point estimates in nuisance mode, posterior means in bayes mode.
    gamma_, phi_ : variational parameters of the winning restart.
    theta_hat_ or eta_post_/nu_post_ : mode-dependent component parameters.
    elbo_trace_, lower_bound_, converged_, n_iter_ : fit diagnostics.
    """

    def __init__(self, n_profiles=1, delta="1/G", mode="nuisance",
                 prior_shape=0.01, prior_rate=0.01, family=None,
                 tol=1e-7, max_iter=1000, n_restarts=10, init="seed_rows",
                 random_state=None):
        self.n_profiles = n_profiles
        self.delta = delta
        self.mode = mode
        self.prior_shape = prior_shape
        self.prior_rate = prior_rate
        self.family = family
        self.tol = tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.init = init
        self.random_state = random_state

    def _resolved(self):
        family = self.family if self.family is not None else PoissonGamma()
        prior = None
        if self.mode == "bayes":
            prior = family.conjugate_prior(self.prior_shape, self.prior_rate)
        return family, prior

    def fit(self, X, y=None):
        """Fit the model; keeps the best-bound restart."""
        X = check_count_matrix(X)
        if self.n_profiles < 1:
            raise ValueError("n_profiles must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        delta = resolve_delta(self.delta, self.n_profiles)
        family, prior = self._resolved()

        best = None
        for rng in _restart_rngs(self.random_state, self.n_restarts):
            phi0 = initial_phi(X, self.n_profiles, delta, rng, family,
                               scheme=self.init)
            result = coordinate_ascent(
                X, delta, family, self.mode, prior=prior, phi_init=phi0,
                max_iter=self.max_iter, tol=self.tol,
            )
            if best is None or result[1][-1] > best[1][-1]:
                best = result

        state, trace, converged, n_iter = best
        self.gamma_ = state.gamma
        self.phi_ = state.phi
        if self.mode == "nuisance":
            self.theta_hat_ = state.theta_hat
            self.rates_ = state.theta_hat
        else:
            self.eta_post_ = state.eta_post
            self.nu_post_ = state.nu_post
            self.rates_ = family.expected_param(state.eta_post, state.nu_post)
        self.membership_ = state.gamma / state.gamma.sum(axis=1, keepdims=True)
        self.delta_ = delta
        self.elbo_trace_ = trace
        self.lower_bound_ = float(trace[-1])
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.n_attributes_ = X.shape[1]
        return self

    def transform(self, X):
        """Membership weights for (possibly new) observations.

        Runs the membership block of the coordinate ascent with the
        fitted component parameters held fixed. Deterministic.
        """
        if not hasattr(self, "rates_"):
            raise ValueError("this estimator is not fitted yet; call fit first")
        X = check_count_matrix(X)
        if X.shape[1] != self.n_attributes_:
            raise ValueError(
                f"X has {X.shape[1]} attributes, the model was fitted with "
                f"{self.n_attributes_}"
            )
        family, _ = self._resolved()
        n_obs = X.shape[0]
        gamma = np.tile(self.delta_ + X.shape[1] / self.n_profiles, (n_obs, 1))
        for _ in range(self.max_iter):
            if self.mode == "nuisance":
                phi = update_phi_nuisance(gamma, self.theta_hat_, X, family)
            else:
                phi = update_phi_bayes(gamma, self.eta_post_, self.nu_post_, X, family)
            new_gamma = update_gamma(phi, self.delta_)
            shift = np.abs(new_gamma - gamma).max()
            gamma = new_gamma
            if shift < self.tol * max(1.0, np.abs(gamma).max()):
                break
        return gamma / gamma.sum(axis=1, keepdims=True)
