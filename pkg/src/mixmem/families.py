"""Conjugate exponential-family contract and the Poisson/Gamma instantiation.

Component densities have the form

    p(x | theta) = h(x) * k(theta) * exp(r(theta) . s(x)),

with a conjugate prior of matching shape,

    p(theta | eta, nu) = h(eta, nu) * k(theta)**eta * exp(r(theta) . nu),

so that posterior updating stays inside the (eta, nu) hyperparameter
family. The inference engines depend only on the abstract contract below;
:class:`PoissonGamma` is the shipped instantiation.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from mixmem.special import digamma

__all__ = [
    "ConjugatePrior",
    "ExponentialFamily",
    "PoissonGamma",
    "DegenerateWeightsError",
    "RATE_FLOOR",
    "DEGENERATE_WEIGHT_FLOOR",
]

# Rates are floored at this value before any log is taken; an estimated
# rate of exactly zero would otherwise give -inf weight to any count > 0.
RATE_FLOOR = 1e-10

# Below this total responsibility a weighted MLE is considered degenerate.
DEGENERATE_WEIGHT_FLOOR = 1e-12


class DegenerateWeightsError(ValueError):
    """Raised when a weighted MLE is requested with ~zero total weight."""


@dataclass(frozen=True)
class ConjugatePrior:
    """Hyperparameters (eta, nu) of a conjugate prior.

    `eta` is a scalar pseudo-count; `nu` has the dimension of the
    sufficient statistic. The same container holds the variational
    posterior counterparts, which then carry one (eta, nu) per component
    and attribute (shapes (G, M) and (G, M, d)).
    """

    eta: float
    nu: np.ndarray = field()

    def __post_init__(self):
        object.__setattr__(self, "nu", np.atleast_1d(np.asarray(self.nu, dtype=float)))


class ExponentialFamily(ABC):
    """Contract of pure evaluators the inference engines are written against.

    All evaluators are vectorized and broadcast over leading axes. The
    natural parameter r(theta) and sufficient statistic s(x) carry a
    trailing axis of length `stat_dim`.
    """

    stat_dim = 1

    # -- structural evaluators -------------------------------------------

    @abstractmethod
    def log_base_measure(self, x):
        """log h(x)."""

    @abstractmethod
    def log_k(self, theta):
        """log k(theta)."""

    @abstractmethod
    def natural_param(self, theta):
        """r(theta), shape theta.shape + (stat_dim,)."""

    @abstractmethod
    def sufficient_stat(self, x):
        """s(x), shape x.shape + (stat_dim,)."""

    # -- conjugate-posterior expectations --------------------------------

    @abstractmethod
    def expected_log_k(self, eta_p, nu_p):
        """E[log k(theta)] under the (eta_p, nu_p) posterior."""

    @abstractmethod
    def expected_natural_param(self, eta_p, nu_p):
        """E[r(theta)] under the posterior, trailing axis stat_dim."""

    @abstractmethod
    def expected_param(self, eta_p, nu_p):
        """Posterior mean of theta (used for reporting rates)."""

    @abstractmethod
    def log_prior_norm(self, eta, nu):
        """log h(eta, nu), the log normalizer of the conjugate density."""

    # -- estimation and sampling -----------------------------------------

    @abstractmethod
    def mle(self, stat_mean):
        """Solve the inverse-link equation for theta given mean s(x)."""

    @abstractmethod
    def sample(self, theta, rng):
        """Draw one observation per entry of theta."""

    # -- validation -------------------------------------------------------

    @abstractmethod
    def validate_param(self, theta):
        """Raise ValueError if theta is outside the parameter space."""

    @abstractmethod
    def validate_data(self, x):
        """Raise ValueError if x is outside the support."""

    @abstractmethod
    def validate_posterior(self, eta_p, nu_p):
        """Raise ValueError on invalid posterior hyperparameters."""

    # -- generic operations (valid for any conjugate member) --------------

    def log_density(self, x, theta):
        """log p(x | theta) = log h(x) + log k(theta) + r(theta) . s(x)."""
        self.validate_data(x)
        self.validate_param(theta)
        dot = (self.natural_param(theta) * self.sufficient_stat(x)).sum(axis=-1)
        return self.log_base_measure(x) + self.log_k(theta) + dot

    def expected_log_density(self, x, eta_p, nu_p, include_base_measure=True):
        """E_q[log p(x | theta)] under the (eta_p, nu_p) posterior.

        With ``include_base_measure=False`` the log h(x) term is dropped;
        that constant cancels when the result is normalized over
        components, which is how the engines use it.
        """
        self.validate_data(x)
        self.validate_posterior(eta_p, nu_p)
        dot = (self.expected_natural_param(eta_p, nu_p) * self.sufficient_stat(x)).sum(axis=-1)
        out = self.expected_log_k(eta_p, nu_p) + dot
        if include_base_measure:
            out = out + self.log_base_measure(x)
        return out

    def posterior_update(self, prior, weights, data):
        """Accumulate weighted evidence onto the prior.

        eta' = sum_n w_n + eta and nu' = sum_n w_n s(x_n) + nu, for one
        column of data with per-observation responsibilities `weights`.
        """
        weights = np.asarray(weights, dtype=float)
        data = np.asarray(data, dtype=float)
        if weights.shape != data.shape:
            raise ValueError(
                f"weights shape {weights.shape} does not match data shape {data.shape}"
            )
        self.validate_data(data)
        eta_p = weights.sum() + prior.eta
        nu_p = np.einsum("n,nd->d", weights, self.sufficient_stat(data)) + prior.nu
        return eta_p, nu_p

    def mle_from_weighted_stats(self, weights, data):
        """Weighted maximum-likelihood estimate of theta for one column.

        Solves -grad r^{-1}(theta) * grad k / k = sum w s(x) / sum w via
        the family's inverse link. Raises DegenerateWeightsError when the
        total weight is below DEGENERATE_WEIGHT_FLOOR.
        """
        weights = np.asarray(weights, dtype=float)
        data = np.asarray(data, dtype=float)
        if weights.shape != data.shape:
            raise ValueError(
                f"weights shape {weights.shape} does not match data shape {data.shape}"
            )
        self.validate_data(data)
        total = weights.sum()
        if total < DEGENERATE_WEIGHT_FLOOR:
            raise DegenerateWeightsError(
                f"total weight {total:g} is below {DEGENERATE_WEIGHT_FLOOR:g}"
            )
        stat_mean = np.einsum("n,nd->d", weights, self.sufficient_stat(data)) / total
        return self.mle(stat_mean)


class PoissonGamma(ExponentialFamily):
    """Poisson counts with a conjugate Gamma prior.

    h(x) = 1/x!, k(theta) = exp(-theta), s(x) = x, r(theta) = log(theta).
    A Gamma(shape=alpha, rate=beta) prior maps to eta = beta and
    nu = alpha - 1, with normalizer h(eta, nu) = eta**(nu+1) / Gamma(nu+1).
    The variational posterior is Gamma(shape=nu'+1, rate=eta'), so
    E[theta] = (nu'+1)/eta' and E[log theta] = psi(nu'+1) - log(eta').
    """

    stat_dim = 1

    @staticmethod
    def conjugate_prior(shape=0.01, rate=0.01):
        """Gamma(shape, rate) prior as a ConjugatePrior (eta=rate, nu=shape-1)."""
        if shape <= 0 or rate <= 0:
            raise ValueError("Gamma prior requires shape > 0 and rate > 0")
        return ConjugatePrior(eta=float(rate), nu=np.array([shape - 1.0]))

    def log_base_measure(self, x):
        x = np.asarray(x, dtype=float)
        return -gammaln(x + 1.0)

    def log_k(self, theta):
        return -np.asarray(theta, dtype=float)

    def natural_param(self, theta):
        return np.log(np.asarray(theta, dtype=float))[..., np.newaxis]

    def sufficient_stat(self, x):
        return np.asarray(x, dtype=float)[..., np.newaxis]

    def expected_log_k(self, eta_p, nu_p):
        eta_p = np.asarray(eta_p, dtype=float)
        nu_p = np.asarray(nu_p, dtype=float)
        return -(nu_p[..., 0] + 1.0) / eta_p

    def expected_natural_param(self, eta_p, nu_p):
        eta_p = np.asarray(eta_p, dtype=float)
        nu_p = np.asarray(nu_p, dtype=float)
        return (digamma(nu_p[..., 0] + 1.0) - np.log(eta_p))[..., np.newaxis]

    def expected_param(self, eta_p, nu_p):
        eta_p = np.asarray(eta_p, dtype=float)
        nu_p = np.asarray(nu_p, dtype=float)
        return (nu_p[..., 0] + 1.0) / eta_p

    def log_prior_norm(self, eta, nu):
        eta = np.asarray(eta, dtype=float)
        nu = np.asarray(nu, dtype=float)
        return (nu[..., 0] + 1.0) * np.log(eta) - gammaln(nu[..., 0] + 1.0)

    def mle(self, stat_mean):
        # Inverse link is the identity: the rate equals the weighted mean.
        return np.asarray(stat_mean, dtype=float)[..., 0]

    def sample(self, theta, rng):
        self.validate_param(theta)
        return rng.poisson(np.asarray(theta, dtype=float))

    def validate_param(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0.0) or not np.all(np.isfinite(theta)):
            raise ValueError("Poisson rate must be positive and finite")

    def validate_data(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x != np.floor(x)) or not np.all(np.isfinite(x)):
            raise ValueError("Poisson support is the non-negative integers")

    def validate_posterior(self, eta_p, nu_p):
        eta_p = np.asarray(eta_p, dtype=float)
        nu_p = np.asarray(nu_p, dtype=float)
        if np.any(eta_p <= 0.0) or np.any(nu_p[..., 0] <= -1.0):
            raise ValueError("Gamma hyperparameters require eta > 0 and nu > -1")
