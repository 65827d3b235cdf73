"""Achievability of aggregate targets.

A target gamma is achievable by finite parameters exactly when gamma = A^T
alpha for some strictly positive probability vector alpha over the states,
i.e. when gamma lies in the relative interior of the convex hull of A's
rows.  Membership is decided by the max-min linear program

    maximize t  subject to  M alpha = gamma, 1^T alpha = 1, alpha_x >= t,

whose optimum t* is the interior margin and whose optimizer alpha is the
witness.  M is A^T, or B A^T when a composed target B A^T pi = gamma' is
being checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exact import NotAchievableError
from .model import ProductFormModel

TOL_INTERIOR = 1e-9

_HIGHS_OPTS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class MembershipResult:
    """Verdict of the interior-membership LP.

    margin is the optimal max-min weight t*: positive strictly inside the
    region, <= 0 on the boundary or outside, -inf when gamma is not even in
    the affine hull of the rows.  Targets with 0 < margin <= tol are
    boundary-indeterminate and reported not achievable.
    """

    achievable: bool
    margin: float
    witness_alpha: np.ndarray | None


def _hull_points(a: np.ndarray, transform) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("A must be a matrix with one row per state")
    if transform is None:
        return a
    b = np.asarray(transform, dtype=float)
    if b.ndim != 2 or b.shape[1] != a.shape[1]:
        raise ValueError(f"transform must have shape (n, {a.shape[1]}), got {b.shape}")
    if b.shape[0] > a.shape[1]:
        raise ValueError("transform must map to at most d dimensions")
    return a @ b.T


def check_membership(a, gamma, transform=None, tol_int: float = TOL_INTERIOR) -> MembershipResult:
    """Decide whether gamma is an achievable aggregate target.

    Args:
        a: (S, d) exponent matrix of the model.
        gamma: length-d target (length-n when transform is given).
        transform: optional (n, d) matrix composing the aggregates.
        tol_int: positive margin below which the verdict stays negative.

    Returns:
        MembershipResult with margin and the witness alpha (the LP optimizer,
        corrected onto the equality constraints to machine precision).
    """
    points = _hull_points(a, transform)
    s, dim = points.shape
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (dim,):
        raise ValueError(f"gamma must have shape ({dim},), got {gamma.shape}")
    if not np.isfinite(gamma).all():
        raise ValueError("gamma must be finite")

    if np.ptp(points, axis=0).max() == 0.0:
        # All rows identical: the region degenerates to that single point,
        # which is never an interior point, so the verdict stays negative
        # ("boundary" when gamma hits the point exactly).
        if np.abs(points[0] - gamma).max() <= tol_int:
            return MembershipResult(achievable=False, margin=0.0, witness_alpha=np.full(s, 1.0 / s))
        return MembershipResult(achievable=False, margin=-np.inf, witness_alpha=None)

    m = points.T  # (dim, s)
    c = np.zeros(s + 1)
    c[-1] = -1.0  # maximize t
    a_eq = np.zeros((dim + 1, s + 1))
    a_eq[:dim, :s] = m
    a_eq[dim, :s] = 1.0
    b_eq = np.concatenate([gamma, [1.0]])
    a_ub = np.zeros((s, s + 1))
    a_ub[:, :s] = -np.eye(s)
    a_ub[:, s] = 1.0  # t - alpha_x <= 0
    b_ub = np.zeros(s)
    bounds = [(None, None)] * s + [(None, 1.0)]

    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options=_HIGHS_OPTS)
    if res.status == 2:  # infeasible: gamma outside the affine hull
        return MembershipResult(achievable=False, margin=-np.inf, witness_alpha=None)
    if res.status != 0:
        raise RuntimeError(f"membership LP failed: {res.message}")

    alpha = np.asarray(res.x[:s], dtype=float)
    # Re-project the witness exactly onto {M alpha = gamma, 1 alpha = 1}; the
    # LP solves these only to its feasibility tolerance.
    j = np.vstack([m, np.ones(s)])
    resid = j @ alpha - np.concatenate([gamma, [1.0]])
    if np.abs(resid).max() > 0.0:
        correction, *_ = np.linalg.lstsq(j, resid, rcond=None)
        alpha = alpha - correction
    margin = float(alpha.min())
    return MembershipResult(achievable=margin > tol_int, margin=margin, witness_alpha=alpha)


def target_from_transform(model: ProductFormModel, transform, gamma_prime,
                          tol_int: float = TOL_INTERIOR) -> np.ndarray:
    """Lift a composed target gamma' = B A^T pi back to a plain target gamma.

    Returns gamma = A^T alpha for the membership witness alpha; solving for
    gamma with :func:`prodform.exact.solve_dual` then yields parameters r*
    with B A^T pi(r*) = gamma'.

    Raises:
        NotAchievableError: gamma' is outside the composed region.
    """
    res = check_membership(model.A, gamma_prime, transform=transform, tol_int=tol_int)
    if not res.achievable:
        raise NotAchievableError(
            f"composed target {np.asarray(gamma_prime)} not achievable (margin {res.margin})"
        )
    return model.A.T @ res.witness_alpha


def region_extremes(a) -> np.ndarray:
    """Rows of A that are vertices of the convex hull of all rows.

    Each distinct row is tested by an LP asking whether it is a convex
    combination of the remaining distinct rows; infeasibility certifies a
    vertex.  Returned in order of first occurrence.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("A must be a matrix")
    _, first = np.unique(a, axis=0, return_index=True)
    unique_rows = a[np.sort(first)]
    k = unique_rows.shape[0]
    if k == 1:
        return unique_rows.copy()

    vertices = []
    for i in range(k):
        p = unique_rows[i]
        others = np.delete(unique_rows, i, axis=0)
        a_eq = np.vstack([others.T, np.ones(k - 1)])
        b_eq = np.concatenate([p, [1.0]])
        res = linprog(np.zeros(k - 1), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * (k - 1),
                      method="highs", options=_HIGHS_OPTS)
        if res.status == 2:
            vertices.append(p)
        elif res.status != 0:
            raise RuntimeError(f"vertex LP failed: {res.message}")
    return np.array(vertices)
