"""Input validation helpers shared by the estimators."""

import numpy as np

__all__ = [
    "check_count_matrix",
    "check_simplex",
    "resolve_delta",
    "check_random_state",
]


def check_count_matrix(X):
    """Validate and return an N x M matrix of non-negative integer counts.

    Accepts any array-like whose entries are integer-valued (integer dtype
    or floats with no fractional part). Returns a float64 array, which is
    what the numerical routines operate on.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"count matrix must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"count matrix must be at least 1x1, got shape {X.shape}")
    X = X.astype(np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("count matrix contains non-finite entries")
    if np.any(X < 0):
        raise ValueError("count matrix contains negative entries")
    if np.any(X != np.floor(X)):
        raise ValueError("count matrix contains non-integer entries")
    return X


def check_simplex(p, axis=-1, atol=1e-8, name="probabilities"):
    """Validate that `p` is non-negative and sums to one along `axis`."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -atol):
        raise ValueError(f"{name} contain negative entries")
    sums = p.sum(axis=axis)
    if not np.allclose(sums, 1.0, atol=atol):
        raise ValueError(f"{name} do not sum to 1 along axis {axis}")
    return p


def resolve_delta(delta, n_profiles):
    """Resolve a membership-prior specification into a length-G vector.

    `delta` may be the literal string "1/G" (symmetric, resolved once the
    profile count is known), a positive scalar (symmetric), or an explicit
    length-G vector of positive reals.
    """
    if isinstance(delta, str):
        if delta.strip() == "1/G":
            return np.full(n_profiles, 1.0 / n_profiles)
        raise ValueError(f"unrecognized delta specification {delta!r}")
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 0:
        delta = np.full(n_profiles, float(delta))
    if delta.shape != (n_profiles,):
        raise ValueError(
            f"delta must be a scalar or length-{n_profiles} vector, got shape {delta.shape}"
        )
    if np.any(delta <= 0) or not np.all(np.isfinite(delta)):
        raise ValueError("delta entries must be positive and finite")
    return delta


def check_random_state(seed):
    """Return a numpy Generator from a seed, Generator, or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
