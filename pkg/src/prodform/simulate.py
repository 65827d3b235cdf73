"""Event-driven simulation of the process at fixed parameters.

One :func:`simulate_window` call runs the chain for a fixed stretch of
simulated time and returns the occupancy measure (the empirical fraction of
time spent in each state, with the final partial holding interval credited
to the state occupied at the window boundary).  The chain state carries over
between windows, as the online algorithm requires.

Two interchangeable inner loops exist: a compiled extension and a
pure-Python fallback, selected at import (override with the
PRODFORM_SIM_BACKEND environment variable or the ``backend=`` argument).
Both consume the seeded random stream identically, so trajectories are
bit-identical across backends.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _pyloop
from .model import ProductFormModel, check_params

try:
    from . import _simkernel
except ImportError:  # extension not built; pure-Python loop takes over
    _simkernel = None

_BACKEND_ENV = "PRODFORM_SIM_BACKEND"
BACKENDS = ("compiled", "python")


def have_compiled_backend() -> bool:
    return _simkernel is not None


def default_backend() -> str:
    forced = os.environ.get(_BACKEND_ENV)
    if forced:
        if forced not in BACKENDS:
            raise ValueError(f"{_BACKEND_ENV} must be one of {BACKENDS}, got {forced!r}")
        if forced == "compiled" and _simkernel is None:
            raise ValueError("compiled simulation backend requested but not built")
        return forced
    return "compiled" if _simkernel is not None else "python"


@dataclass
class SimState:
    """Current chain state, simulated clock, and the seeded random stream."""

    state: int
    clock: float
    rng: np.random.Generator


@dataclass(frozen=True)
class OccupancyMeasure:
    """Empirical time-average distribution over one observation window."""

    pi_hat: np.ndarray
    window_length: float


def new_sim_state(seed, start_state: int = 0) -> SimState:
    return SimState(state=start_state, clock=0.0, rng=np.random.default_rng(seed))


@lru_cache(maxsize=64)
def _jump_tables(model: ProductFormModel):
    """Templates grouped by source state (CSR-style), cached per model."""
    s = model.num_states
    order = np.argsort(model.src, kind="stable")
    src = model.src[order]
    counts = np.bincount(src, minlength=s)
    if (counts == 0).any():
        dead = int(np.argmin(counts))
        raise ValueError(f"state {model.space.label_of(dead)!r} has no outgoing transitions")
    indptr = np.zeros(s + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    targets = model.dst[order].astype(np.int64)
    base = model.base[order].copy()
    coeffs = model.coeffs[order].copy()
    for arr in (indptr, targets, base, coeffs):
        arr.setflags(write=False)
    return indptr, targets, base, coeffs, counts


def _window_rates(model: ProductFormModel, r):
    """Per-row cumulative jump rates and exit rates at parameters r.

    Computed once per window in numpy so both backends scan identical
    floating-point arrays.
    """
    indptr, targets, base, coeffs, counts = _jump_tables(model)
    rates = base * np.exp(coeffs @ r)
    cum = np.cumsum(rates)
    starts = indptr[:-1]
    offsets = np.where(starts > 0, cum[starts - 1], 0.0)
    local = cum - np.repeat(offsets, counts)
    exit_rate = local[indptr[1:] - 1]
    return indptr, targets, local, exit_rate


def simulate_window(model: ProductFormModel, r, sim: SimState, duration: float,
                    backend: str | None = None, trajectory: list | None = None):
    """Run one observation window of the given length.

    Args:
        model: validated model.
        r: parameter vector held fixed for the whole window.
        sim: simulation state; advanced in place and also returned.
        duration: window length in simulated time (> 0).
        backend: "compiled" or "python"; default picked at import.
        trajectory: optional list collecting (time, state_label) jump events
            for debugging; forces the python loop.

    Returns:
        (OccupancyMeasure, SimState)
    """
    r = check_params(model, r)
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    backend = default_backend() if backend is None else backend
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if backend == "compiled" and _simkernel is None:
        raise ValueError("compiled simulation backend requested but not built")

    indptr, targets, cumrate, exit_rate = _window_rates(model, r)
    occupancy = np.zeros(model.num_states)
    if trajectory is not None or backend == "python":
        raw = [] if trajectory is not None else None
        final_state, _ = _pyloop.run_window(
            occupancy, sim.state, duration, indptr, targets, cumrate, exit_rate,
            sim.rng, clock0=sim.clock, trajectory=raw)
        if trajectory is not None:
            trajectory.extend((t, model.space.label_of(ix)) for t, ix in raw)
    else:
        final_state, _ = _simkernel.run_window(
            occupancy, sim.state, duration, indptr, targets, cumrate, exit_rate,
            sim.rng.bit_generator)

    sim.state = int(final_state)
    sim.clock += duration
    total = occupancy.sum()
    return OccupancyMeasure(pi_hat=occupancy / total, window_length=duration), sim


def estimate_aggregates(model: ProductFormModel, occ: OccupancyMeasure) -> np.ndarray:
    """Plug-in aggregate estimate A^T pi_hat."""
    return model.A.T @ occ.pi_hat


def write_trajectory_csv(trajectory, path, initial=None) -> None:
    """Dump a recorded trajectory as CSV with columns (time, state)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time,state\n")
        if initial is not None:
            t0, label = initial
            fh.write(f"{float(t0)!r},{label}\n")
        for t, label in trajectory:
            fh.write(f"{float(t)!r},{label}\n")
