"""Parameterized reversible Markov processes with product-form stationary laws.

A :class:`ProductFormModel` bundles a finite state space, a list of
transition templates whose rates depend exponentially on a parameter vector
``r``, and a claimed product form for the stationary distribution,

    pi(r) = exp(A r + b) / Z(r).

The model is the single source of truth for the pair ``(A, b)``;
:func:`validate` checks that the generator built from the templates and the
claimed product form actually satisfy detailed balance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

TOL_DETAILED_BALANCE = 1e-10

_MODEL_FIELDS = {"states", "transitions", "A", "b"}
_TRANSITION_FIELDS = {"source", "target", "base_rate", "exponent_coeffs"}


class ReducibleModelError(ValueError):
    """The transition graph is not strongly connected."""


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Ordered finite state space with a fixed label <-> index bijection."""

    states: tuple
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        states = tuple(self.states)
        if len(states) < 2:
            raise ValueError("state space needs at least 2 states")
        index = {label: i for i, label in enumerate(states)}
        if len(index) != len(states):
            raise ValueError("state labels must be unique")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.states)

    def index_of(self, label) -> int:
        return self.index[label]

    def label_of(self, i: int):
        return self.states[i]


@dataclass(frozen=True)
class TransitionTemplate:
    """One directed transition with rate base_rate * exp(exponent_coeffs . r).

    ``exponent_coeffs`` is typically a unit vector (the transition is scaled
    by one configurable log-rate) or zero (a fixed rate), but any real vector
    is allowed so that a single parameter can scale many transitions.
    """

    source: int
    target: int
    base_rate: float
    exponent_coeffs: tuple

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("self-loop transitions are not allowed")
        if not (self.base_rate > 0 and np.isfinite(self.base_rate)):
            raise ValueError(f"base_rate must be positive and finite, got {self.base_rate}")
        coeffs = tuple(float(c) for c in self.exponent_coeffs)
        if not all(np.isfinite(coeffs)):
            raise ValueError("exponent_coeffs must be finite")
        object.__setattr__(self, "base_rate", float(self.base_rate))
        object.__setattr__(self, "exponent_coeffs", coeffs)

    def rate(self, r: np.ndarray) -> float:
        return self.base_rate * float(np.exp(np.dot(self.exponent_coeffs, r)))


@dataclass(frozen=True, eq=False)
class ProductFormModel:
    """Reversible Markov process whose stationary law is exp(A r + b)/Z(r).

    Attributes:
        space: the ordered state space (size S).
        transitions: transition templates defining the generator.
        A: (S, d) exponent matrix of the product form.
        b: length-S offset vector (stored exactly as supplied; adding a
           constant to b does not change pi).
    """

    space: StateSpace
    transitions: tuple
    A: np.ndarray
    b: np.ndarray
    # Flat template arrays, derived once for fast generator/simulation assembly.
    src: np.ndarray = field(init=False, repr=False)
    dst: np.ndarray = field(init=False, repr=False)
    base: np.ndarray = field(init=False, repr=False)
    coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = len(self.space)
        a = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != s:
            raise ValueError(f"A must have shape ({s}, d), got {a.shape}")
        d = a.shape[1]
        if d < 1:
            raise ValueError("need at least one configurable parameter (d >= 1)")
        if b.shape != (s,):
            raise ValueError(f"b must have shape ({s},), got {b.shape}")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("A and b must be finite")
        transitions = tuple(self.transitions)
        if not transitions:
            raise ValueError("model has no transitions")
        for t in transitions:
            if not (0 <= t.source < s and 0 <= t.target < s):
                raise ValueError(f"transition ({t.source}, {t.target}) out of range")
            if len(t.exponent_coeffs) != d:
                raise ValueError(
                    f"transition exponent_coeffs has length {len(t.exponent_coeffs)}, expected {d}"
                )
        src = np.array([t.source for t in transitions], dtype=np.int64)
        dst = np.array([t.target for t in transitions], dtype=np.int64)
        base = np.array([t.base_rate for t in transitions], dtype=float)
        coeffs = np.array([t.exponent_coeffs for t in transitions], dtype=float)
        for arr in (a, b, src, dst, base, coeffs):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def num_states(self) -> int:
        return len(self.space)

    @property
    def num_params(self) -> int:
        return self.A.shape[1]


def check_params(model: ProductFormModel, r) -> np.ndarray:
    """Coerce r to a finite float vector of length d."""
    r = np.asarray(r, dtype=float)
    if r.shape != (model.num_params,):
        raise ValueError(f"parameter vector must have shape ({model.num_params},), got {r.shape}")
    if not np.isfinite(r).all():
        raise ValueError("parameter vector must be finite")
    return r


def realized_rates(model: ProductFormModel, r) -> np.ndarray:
    """Per-template rates base * exp(coeffs . r), in template order."""
    r = check_params(model, r)
    return model.base * np.exp(model.coeffs @ r)


def build_generator(model: ProductFormModel, r) -> np.ndarray:
    """Dense generator matrix at parameters r (rows sum to zero).

    Parallel templates between the same ordered state pair are summed.
    """
    rates = realized_rates(model, r)
    s = model.num_states
    q = np.zeros((s, s))
    np.add.at(q, (model.src, model.dst), rates)
    q[np.diag_indices(s)] = -q.sum(axis=1)
    return q


def is_irreducible(model: ProductFormModel) -> bool:
    """Strong connectivity of the transition graph.

    Rates are strictly positive for every finite r, so irreducibility is a
    structural property of the template graph.
    """
    s = model.num_states
    adj = csr_matrix((np.ones(len(model.src)), (model.src, model.dst)), shape=(s, s))
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


@dataclass
class ProbeResult:
    r: np.ndarray
    max_residual: float
    worst_edge: tuple
    pi_positive: bool


@dataclass
class ValidationReport:
    ok: bool
    irreducible: bool
    tol: float
    max_residual: float
    worst_edge: tuple
    probes: list

    def __str__(self):
        verdict = "PASS" if self.ok else "FAIL"
        return (
            f"{verdict}: irreducible={self.irreducible}, "
            f"max detailed-balance residual {self.max_residual:.3e} (tol {self.tol:.1e}), "
            f"worst edge {self.worst_edge}"
        )


def validate(model: ProductFormModel, probe_points, tol_db: float = TOL_DETAILED_BALANCE) -> ValidationReport:
    """Check generator/product-form consistency at the given parameter points.

    For each probe r the stationary law pi = exp(A r + b)/Z is evaluated and
    the detailed-balance residual max |pi_x Q_xy - pi_y Q_yx|, relative to the
    largest probability flow, is computed.  Passes iff the residual is within
    tol_db at every probe.

    Raises:
        ReducibleModelError: the transition graph is not strongly connected.
        ValueError: no probe points given.
    """
    from .exact import stationary

    probe_points = [check_params(model, r) for r in probe_points]
    if not probe_points:
        raise ValueError("need at least one probe point")
    if not is_irreducible(model):
        raise ReducibleModelError("transition graph is not strongly connected")

    probes = []
    worst = (0.0, (None, None))
    for r in probe_points:
        pi = stationary(model, r).pi
        q = build_generator(model, r)
        flow = pi[:, None] * q
        np.fill_diagonal(flow, 0.0)
        resid = np.abs(flow - flow.T)
        scale = flow.max()
        rel = resid / scale if scale > 0 else resid
        x, y = np.unravel_index(np.argmax(rel), rel.shape)
        edge = (model.space.label_of(int(x)), model.space.label_of(int(y)))
        max_rel = float(rel[x, y])
        probes.append(ProbeResult(r=r, max_residual=max_rel, worst_edge=edge, pi_positive=bool((pi > 0).all())))
        if max_rel > worst[0]:
            worst = (max_rel, edge)

    ok = all(p.max_residual <= tol_db and p.pi_positive for p in probes)
    return ValidationReport(
        ok=ok,
        irreducible=True,
        tol=tol_db,
        max_residual=worst[0],
        worst_edge=worst[1],
        probes=probes,
    )


# ---------------------------------------------------------------------------
# Model file format (JSON).  Field names are fixed; anything else is rejected.
#
#   {
#     "states":      [<label>, ...],            # labels stored as strings
#     "transitions": [{"source": <label>, "target": <label>,
#                      "base_rate": <float>, "exponent_coeffs": [<float>, ...]}, ...],
#     "A":           [[<float>, ...], ...],     # one row per state
#     "b":           [<float>, ...]
#   }
# ---------------------------------------------------------------------------


def model_to_dict(model: ProductFormModel) -> dict:
    labels = [str(x) for x in model.space.states]
    return {
        "states": labels,
        "transitions": [
            {
                "source": labels[t.source],
                "target": labels[t.target],
                "base_rate": t.base_rate,
                "exponent_coeffs": list(t.exponent_coeffs),
            }
            for t in model.transitions
        ],
        "A": [[float(v) for v in row] for row in model.A],
        "b": [float(v) for v in model.b],
    }


def model_from_dict(data: dict) -> ProductFormModel:
    if not isinstance(data, dict):
        raise ValueError("model document must be a JSON object")
    unknown = set(data) - _MODEL_FIELDS
    if unknown:
        raise ValueError(f"unknown model fields: {sorted(unknown)}")
    missing = _MODEL_FIELDS - set(data)
    if missing:
        raise ValueError(f"missing model fields: {sorted(missing)}")
    space = StateSpace(tuple(data["states"]))
    transitions = []
    for i, t in enumerate(data["transitions"]):
        unknown = set(t) - _TRANSITION_FIELDS
        if unknown:
            raise ValueError(f"transition {i}: unknown fields {sorted(unknown)}")
        missing = _TRANSITION_FIELDS - set(t)
        if missing:
            raise ValueError(f"transition {i}: missing fields {sorted(missing)}")
        transitions.append(
            TransitionTemplate(
                source=space.index_of(t["source"]),
                target=space.index_of(t["target"]),
                base_rate=t["base_rate"],
                exponent_coeffs=tuple(t["exponent_coeffs"]),
            )
        )
    return ProductFormModel(space=space, transitions=tuple(transitions), A=data["A"], b=data["b"])


def dumps_model(model: ProductFormModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"


def save_model(model: ProductFormModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> ProductFormModel:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return model_from_dict(data)


def model_digest(model: ProductFormModel) -> str:
    """sha256 of the canonical serialized form; used in run manifests."""
    return hashlib.sha256(dumps_model(model).encode("utf-8")).hexdigest()
