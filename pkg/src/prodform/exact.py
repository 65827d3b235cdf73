"""Exact stationary computations and the deterministic target solver.

Everything here works directly on the product form pi(r) = exp(A r + b)/Z(r).
The central objects are

* the aggregate map  r -> A^T pi(r)  (the controlled performance measures),
* the convex objective  u(r) = ln Z(r) - alpha^T (A r + b)  whose gradient is
  A^T pi(r) - A^T alpha, so minimizing u drives the aggregates to the target
  gamma = A^T alpha,
* :func:`solve_dual`, gradient descent with Armijo backtracking on u, which
  returns the parameter vector achieving an interior target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ProductFormModel, build_generator, check_params


class NotAchievableError(RuntimeError):
    """The requested aggregate target is not reachable by finite parameters."""


class MaxIterationsError(RuntimeError):
    """Iteration budget exhausted before reaching the requested tolerance."""

    def __init__(self, message, r, grad_norm):
        super().__init__(message)
        self.r = r
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    log_z: float


@dataclass(frozen=True)
class DualSolution:
    r_star: np.ndarray
    iterations: int
    final_grad_norm: float


def stationary(model: ProductFormModel, r) -> StationaryDistribution:
    """Stationary distribution exp(A r + b - log Z), log Z via shifted log-sum-exp."""
    r = check_params(model, r)
    logits = model.A @ r + model.b
    shift = logits.max()
    log_z = shift + np.log(np.exp(logits - shift).sum())
    return StationaryDistribution(pi=np.exp(logits - log_z), log_z=float(log_z))


def stationary_from_generator(q: np.ndarray) -> np.ndarray:
    """Stationary distribution from the generator null space (pi Q = 0).

    Independent linear-algebra route used to cross-check the product form.
    """
    s = q.shape[0]
    m = np.vstack([q.T, np.ones(s)])
    rhs = np.zeros(s + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    return pi


def aggregates(model: ProductFormModel, r) -> np.ndarray:
    """Controlled aggregates A^T pi(r)."""
    return model.A.T @ stationary(model, r).pi


def _check_open_simplex(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or not np.isfinite(p).all():
        raise ValueError(f"{name} must be a finite vector")
    if (p <= 0).any() or (p >= 1).any():
        raise ValueError(f"{name} must lie in the open simplex (all entries in (0, 1))")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1, got {p.sum()!r}")
    return p


def log_likelihood(model: ProductFormModel, alpha, r) -> float:
    """u(r) = ln Z(r) - alpha^T (A r + b); nonnegative, convex in r."""
    alpha = _check_open_simplex(alpha, "alpha")
    r = check_params(model, r)
    log_z = stationary(model, r).log_z
    return float(log_z - alpha @ (model.A @ r + model.b))


def dual_objective(model: ProductFormModel, gamma, r) -> float:
    """ln Z(r) - gamma . r: equals u(r) up to the r-independent constant -alpha.b.

    Any alpha with A^T alpha = gamma yields the same descent problem, so the
    solver never needs alpha explicitly.
    """
    r = check_params(model, r)
    return float(stationary(model, r).log_z - np.dot(gamma, r))


def gradient(model: ProductFormModel, gamma, r) -> np.ndarray:
    """Gradient of u at r: A^T pi(r) - gamma."""
    gamma = np.asarray(gamma, dtype=float)
    return aggregates(model, r) - gamma


def primal_objective(model: ProductFormModel, alpha, beta) -> float:
    """Entropy program objective -beta^T ln(beta) + (beta - alpha)^T b.

    Maximized over distributions beta with A^T beta = A^T alpha; its optimal
    value equals min_r u(r) (zero duality gap), which the tests use as an
    independent check of :func:`solve_dual`.
    """
    alpha = _check_open_simplex(alpha, "alpha")
    beta = np.asarray(beta, dtype=float)
    if (beta <= 0).any():
        raise ValueError("beta must be strictly positive (ln 0 undefined)")
    return float(-(beta @ np.log(beta)) + (beta - alpha) @ model.b)


def solve_dual(
    model: ProductFormModel,
    gamma,
    tol: float = 1e-8,
    max_iters: int = 200_000,
    init_r=None,
    divergence_bound: float = 50.0,
) -> DualSolution:
    """Minimize u(r) by gradient descent with Armijo backtracking.

    Stops when ||A^T pi(r) - gamma||_inf <= tol.  The objective is convex, so
    any interior target is reached from any starting point.  For targets
    outside the achievable set no finite minimizer exists; the observable
    symptom is a runaway iterate with a stalling gradient norm, reported as
    :class:`NotAchievableError` once ||r||_inf exceeds divergence_bound.

    Armijo parameters: sufficient-decrease 1e-4, shrink factor 0.5, first
    trial step 1.  Later trial steps use the secant curvature estimate
    (s.y)/(y.y) from the previous accepted move, which keeps badly
    conditioned problems moving; once decreases of u fall below double
    precision the search accepts on strict gradient-norm decrease instead.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (model.num_params,):
        raise ValueError(f"gamma must have shape ({model.num_params},), got {gamma.shape}")
    if not np.isfinite(gamma).all():
        raise ValueError("gamma must be finite")
    r = np.zeros(model.num_params) if init_r is None else check_params(model, init_r).copy()

    f = dual_objective(model, gamma, r)
    g = gradient(model, gamma, r)
    step = 1.0
    move = None  # (s, y) of the last accepted step, for the secant trial size
    stall_window = 100
    eps = float(np.finfo(float).eps)
    norms = []
    for it in range(max_iters):
        gnorm = float(np.abs(g).max())
        if gnorm <= tol:
            return DualSolution(r_star=r, iterations=it, final_grad_norm=gnorm)

        norms.append(gnorm)
        if np.abs(r).max() > divergence_bound and len(norms) > stall_window:
            if gnorm > 0.99 * norms[-stall_window]:
                raise NotAchievableError(
                    f"iterate escaped ||r||_inf > {divergence_bound} with gradient norm "
                    f"stalled at {gnorm:.3e}; target looks unachievable"
                )

        gsq = float(g @ g)
        t = 1.0
        if move is not None:
            s, y = move
            sy = float(s @ y)
            yy = float(y @ y)
            if sy > 0.0 and yy > 0.0:
                t = min(max(sy / yy, 1e-12), 1e8)
            else:
                t = min(step * 2.0, 1.0)

        if t * gsq < 8.0 * eps * (1.0 + abs(f)):
            # Terminal phase: the achievable decrease is below the
            # floating-point resolution of u, so accept steps on strict
            # decrease of ||g||_2 instead (monotone under small gradient
            # steps where u is locally quadratic; the max-norm is not).
            while True:
                r_new = r - t * g
                g_new = gradient(model, gamma, r_new)
                if float(g_new @ g_new) < gsq:
                    break
                t *= 0.5
                if t < 1e-20:
                    raise MaxIterationsError(
                        f"gradient norm floor {gnorm:.3e} reached (tol {tol:.1e} unattainable "
                        f"in double precision)", r, gnorm)
            f = dual_objective(model, gamma, r_new)
        else:
            while True:
                r_new = r - t * g
                f_new = dual_objective(model, gamma, r_new)
                if f_new <= f - 1e-4 * t * gsq:
                    break
                t *= 0.5
                if t < 1e-20:
                    raise MaxIterationsError(
                        f"line search stalled at gradient norm {gnorm:.3e}", r, gnorm
                    )
            g_new = gradient(model, gamma, r_new)
            f = f_new
        move = (r_new - r, g_new - g)
        step = t
        r, g = r_new, g_new

    gnorm = float(np.abs(g).max())
    raise MaxIterationsError(
        f"no convergence within {max_iters} iterations (gradient norm {gnorm:.3e})", r, gnorm
    )


def stationary_agreement_tv(model: ProductFormModel, r) -> float:
    """Total-variation gap between the product form and the null-space solve."""
    pi_exp = stationary(model, r).pi
    pi_lin = stationary_from_generator(build_generator(model, r))
    return 0.5 * float(np.abs(pi_exp - pi_lin).sum())
