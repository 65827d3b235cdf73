"""Builders for three reference networks with known product forms.

Each builder returns a :class:`~prodform.model.ProductFormModel` whose
exponent matrix A and offset b are written down explicitly, so
:func:`prodform.model.validate` can confirm the generator and the claimed
product form agree.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import ProductFormModel, StateSpace, TransitionTemplate

CSMA_SINGLE_PARAM = "single_param"
CSMA_PER_CLASS = "per_class"


def _unit(d, i):
    e = [0.0] * d
    e[i] = 1.0
    return tuple(e)


def build_birth_death(n: int, mu) -> ProductFormModel:
    """Birth-death chain on {0, ..., n} with configurable up-rates.

    State x moves up at rate exp(r_{x+1}) and down at the fixed rate mu_x.
    Product form: A[x, i] = 1{x >= i+1} (tail indicators, one column per
    up-rate), b[x] = -sum_{i<=x} ln mu_i.  The aggregates A^T pi are the tail
    probabilities P(X >= 1), ..., P(X >= n).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,):
        raise ValueError(f"mu must have shape ({n},), got {mu.shape}")
    if not ((mu > 0).all() and np.isfinite(mu).all()):
        raise ValueError("mu must be positive and finite")

    space = StateSpace(tuple(range(n + 1)))
    transitions = []
    for x in range(n):
        transitions.append(TransitionTemplate(x, x + 1, 1.0, _unit(n, x)))
        transitions.append(TransitionTemplate(x + 1, x, float(mu[x]), (0.0,) * n))
    a = np.zeros((n + 1, n))
    for x in range(n + 1):
        a[x, :x] = 1.0
    b = np.concatenate([[0.0], -np.cumsum(np.log(mu))]) + 0.0  # +0.0 clears -0.0
    return ProductFormModel(space=space, transitions=tuple(transitions), A=a, b=b)


def birth_death_mass_transform(n: int) -> np.ndarray:
    """Matrix turning tail probabilities into point masses.

    B[r, c] = 1{r == c} - 1{r == c + 1}, so B maps (P(X>=1), ..., P(X>=n))
    to (P(X=1), ..., P(X=n)).  Feeding such a composed target through the
    region check and the dual solve controls the stationary distribution
    itself.
    """
    b = np.eye(n)
    for r in range(n - 1):
        b[r, r + 1] = -1.0
    return b


def jackson_traffic_solution(routing: np.ndarray) -> np.ndarray:
    """Positive solution of lam = lam P, normalized to lam_1 = 1."""
    p = np.asarray(routing, dtype=float)
    d = p.shape[0]
    m = p.T - np.eye(d)
    m[-1, :] = 0.0
    m[-1, 0] = 1.0
    rhs = np.zeros(d)
    rhs[-1] = 1.0
    lam = np.linalg.solve(m, rhs)
    if not (lam > 0).all():
        raise ValueError("traffic equation has no strictly positive solution")
    return lam


def build_jackson(d: int, n: int, routing) -> ProductFormModel:
    """Closed network of d queues sharing n permanent customers.

    A customer finishing service at queue i (rate exp(r_i)) joins queue j
    with probability routing[i, j].  States are the customer allocations,
    ordered descending-lexicographically.  Product form: A[x, i] = -x_i
    (so the aggregates are the negative mean queue lengths) and
    b[x] = sum_i x_i ln lam_i with lam the traffic solution of lam = lam P.
    """
    if d < 2:
        raise ValueError("need at least 2 queues")
    if n < 1:
        raise ValueError("need at least 1 customer")
    p = np.asarray(routing, dtype=float)
    if p.shape != (d, d):
        raise ValueError(f"routing matrix must have shape ({d}, {d}), got {p.shape}")
    if (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > 1e-12:
        raise ValueError("routing matrix rows must be nonnegative and sum to 1")
    adj = csr_matrix(p > 0)
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp != 1:
        raise ValueError("routing matrix must be irreducible")
    lam = jackson_traffic_solution(p)

    # All allocations of n customers over d queues, descending lex order.
    states = []
    for picks in combinations_with_replacement(range(d), n):
        x = [0] * d
        for q in picks:
            x[q] += 1
        states.append(tuple(x))
    states.sort(reverse=True)
    space = StateSpace(tuple(states))

    transitions = []
    for x in states:
        xi = space.index_of(x)
        for i in range(d):
            if x[i] == 0:
                continue
            for j in range(d):
                if j == i or p[i, j] == 0.0:
                    continue
                y = list(x)
                y[i] -= 1
                y[j] += 1
                transitions.append(TransitionTemplate(xi, space.index_of(tuple(y)), float(p[i, j]), _unit(d, i)))

    a = -np.array(states, dtype=float)
    b = np.array(states, dtype=float) @ np.log(lam)
    return ProductFormModel(space=space, transitions=tuple(transitions), A=a, b=b)


def build_csma(class_sizes, scheme: str = CSMA_PER_CLASS) -> ProductFormModel:
    """Partite-interference CSMA network: only one class transmits at a time.

    class_sizes[k-1] nodes form class k; an idle class-k node activates at
    rate exp(r_k) (one shared rate under scheme "single_param") whenever no
    other class is active, and an active node deactivates at rate 1.  States
    are 0 (all idle) and (k, l) = l class-k nodes active.  Product form:
    b[(k, l)] = ln C(n_k, l), and A[(k, l)] counts active nodes: a single
    column l under "single_param", or per-class columns l * 1{k == i} under
    "per_class" (so the aggregates are the mean number of active nodes,
    total or per class).
    """
    sizes = [int(v) for v in class_sizes]
    k_classes = len(sizes)
    if k_classes < 2:
        raise ValueError("need at least 2 classes")
    if any(v < 1 for v in sizes):
        raise ValueError("class sizes must be positive")
    if scheme not in (CSMA_SINGLE_PARAM, CSMA_PER_CLASS):
        raise ValueError(f"scheme must be {CSMA_SINGLE_PARAM!r} or {CSMA_PER_CLASS!r}")
    d = 1 if scheme == CSMA_SINGLE_PARAM else k_classes

    labels = [0]
    for k in range(1, k_classes + 1):
        labels.extend((k, l) for l in range(1, sizes[k - 1] + 1))
    space = StateSpace(tuple(labels))

    def coeff(k):
        return _unit(d, 0 if scheme == CSMA_SINGLE_PARAM else k - 1)

    transitions = []
    for k in range(1, k_classes + 1):
        n_k = sizes[k - 1]
        transitions.append(TransitionTemplate(space.index_of(0), space.index_of((k, 1)), float(n_k), coeff(k)))
        transitions.append(TransitionTemplate(space.index_of((k, 1)), space.index_of(0), 1.0, (0.0,) * d))
        for l in range(1, n_k):
            up = TransitionTemplate(space.index_of((k, l)), space.index_of((k, l + 1)), float(n_k - l), coeff(k))
            down = TransitionTemplate(space.index_of((k, l + 1)), space.index_of((k, l)), float(l + 1), (0.0,) * d)
            transitions.extend([up, down])

    s = len(labels)
    a = np.zeros((s, d))
    b = np.zeros(s)
    for k in range(1, k_classes + 1):
        for l in range(1, sizes[k - 1] + 1):
            i = space.index_of((k, l))
            a[i, 0 if scheme == CSMA_SINGLE_PARAM else k - 1] = float(l)
            b[i] = math.log(math.comb(sizes[k - 1], l))
    return ProductFormModel(space=space, transitions=tuple(transitions), A=a, b=b)


def csma_per_class_achievable(class_sizes, gamma) -> bool:
    """Closed form of the per-class region: gamma_k > 0 and sum gamma_k/n_k < 1.

    The region is the set of convex mixtures sum_k beta_k n_k e_k with all
    beta_k > 0 and sum beta_k < 1 (the idle state always keeps positive
    mass), which reduces to this simplex condition.
    """
    sizes = np.asarray(class_sizes, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != sizes.shape:
        raise ValueError("gamma must have one entry per class")
    return bool((gamma > 0).all() and (gamma / sizes).sum() < 1.0)
