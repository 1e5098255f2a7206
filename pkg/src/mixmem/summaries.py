"""Post-fit summary statistics for fitted memberships and mixtures.

Profile and group labels in this module are 1-based, matching how the
report files present them; the latent arrays inside the estimators are
0-based.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from mixmem.validation import check_simplex

__all__ = [
    "extent_of_membership",
    "map_assignments",
    "assignment_uncertainty",
    "profile_set",
    "profile_sets",
    "mixture_assignments",
    "CrossTab",
    "cross_tabulate",
    "align_labels",
    "ternary_coordinates",
]


def extent_of_membership(tau):
    """exp of the entropy of each membership row, with 0 log 0 = 0.

    Lies in [1, G]: 1 for a point mass, G for a uniform row. Estimates
    how many profiles an observation draws on.
    """
    tau = check_simplex(np.atleast_2d(np.asarray(tau, dtype=float)),
                        name="membership weights")
    return np.exp(-xlogy(tau, tau).sum(axis=-1))


def map_assignments(phi):
    """Most probable profile per cell, as 1-based labels.

    Ties break to the lowest label. Accepts (..., G) membership
    probabilities; typically the fitted (N, M, G) cell memberships.
    """
    phi = np.asarray(phi, dtype=float)
    return np.argmax(phi, axis=-1) + 1


def assignment_uncertainty(phi):
    """1 minus the largest membership probability, in [0, 1 - 1/G]."""
    phi = np.asarray(phi, dtype=float)
    return 1.0 - phi.max(axis=-1)


def profile_set(assignments):
    """Sorted distinct profile labels of one observation's assignments."""
    return tuple(sorted(set(int(a) for a in np.asarray(assignments).ravel())))


def profile_sets(map_z):
    """Per-observation profile sets for an (N, M) assignment matrix."""
    map_z = np.atleast_2d(np.asarray(map_z))
    return [profile_set(row) for row in map_z]


def mixture_assignments(resp):
    """MAP group label (1-based) and uncertainty per observation.

    Unlike the per-cell mixed membership statistics, these assign a
    single value to each observation.
    """
    resp = check_simplex(np.atleast_2d(np.asarray(resp, dtype=float)),
                         name="responsibilities")
    return np.argmax(resp, axis=-1) + 1, 1.0 - resp.max(axis=-1)


@dataclass
class CrossTab:
    """Contingency table of mixture groups against mapped profile sets."""

    row_labels: list       # mixture group labels, ascending
    col_labels: list       # profile sets, by descending count then lexicographic
    counts: np.ndarray     # (rows, cols) integer counts


def cross_tabulate(mix_labels, sets):
    """Count observations per (mixture group, mapped profile set) cell.

    Rows are the observed mixture groups in ascending label order;
    columns are the observed distinct profile sets ordered by descending
    total count, ties broken lexicographically. Counts sum to N.
    """
    mix_labels = np.asarray(mix_labels)
    sets = list(sets)
    if mix_labels.shape[0] != len(sets):
        raise ValueError("one mixture label and one profile set per observation")

    row_labels = sorted(set(int(g) for g in mix_labels))
    set_counts = {}
    for s in sets:
        set_counts[s] = set_counts.get(s, 0) + 1
    col_labels = sorted(set_counts, key=lambda s: (-set_counts[s], s))

    row_index = {g: i for i, g in enumerate(row_labels)}
    col_index = {s: j for j, s in enumerate(col_labels)}
    counts = np.zeros((len(row_labels), len(col_labels)), dtype=int)
    for g, s in zip(mix_labels, sets):
        counts[row_index[int(g)], col_index[s]] += 1
    return CrossTab(row_labels=row_labels, col_labels=col_labels, counts=counts)


def align_labels(rates_est, rates_true):
    """Permutation matching estimated component rows to true ones.

    Returns the 0-based permutation `perm` (as an int array) minimizing
    the total absolute difference between ``rates_est[perm]`` and
    ``rates_true``, found by exhaustive search; intended for recovery
    tests with G <= 8.
    """
    rates_est = np.asarray(rates_est, dtype=float)
    rates_true = np.asarray(rates_true, dtype=float)
    if rates_est.shape != rates_true.shape:
        raise ValueError("rate matrices must have identical shapes")
    n_prof = rates_est.shape[0]
    if n_prof > 8:
        raise ValueError("exhaustive label alignment supports at most 8 components")
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(n_prof)):
        cost = np.abs(rates_est[list(perm)] - rates_true).sum()
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    return np.asarray(best_perm)


def ternary_coordinates(tau, profiles=(1, 2, 3)):
    """2-D simplex plot coordinates for one 3-profile face.

    The three selected membership masses (1-based `profiles`) are
    renormalized and mapped to the standard triangle via
    (x, y) = (v2 + v3/2, v3 sqrt(3)/2), so the vertices sit at (0, 0),
    (1, 0) and (1/2, sqrt(3)/2). Rows with no mass on the face give NaN.
    """
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    profiles = tuple(int(p) for p in profiles)
    if len(profiles) != 3 or len(set(profiles)) != 3:
        raise ValueError("exactly three distinct profiles are required")
    if min(profiles) < 1 or max(profiles) > tau.shape[1]:
        raise ValueError(f"profile labels must lie in 1..{tau.shape[1]}")
    face = tau[:, [p - 1 for p in profiles]]
    mass = face.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(mass > 0, face / mass, np.nan)
    x = v[:, 1] + 0.5 * v[:, 2]
    y = v[:, 2] * (np.sqrt(3.0) / 2.0)
    return np.column_stack([x, y])
