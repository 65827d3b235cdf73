"""Pure-Python fallback for the window event loop.

Mirrors _simkernel.pyx draw-for-draw: one uniform for the holding time, one
for the jump target, identical comparison order.  Given the same
BitGenerator state both backends produce bit-identical trajectories.
"""

from __future__ import annotations

import math


def run_window(occupancy, start_state, duration, indptr, targets, cumrate,
               exit_rate, generator, clock0=0.0, trajectory=None):
    """Advance one observation window; accumulates holding times in-place.

    trajectory, when given, collects (event_time, new_state_index) tuples.
    Returns (final_state, event_count).
    """
    indptr = indptr.tolist()
    targets = targets.tolist()
    cumrate = cumrate.tolist()
    exit_rate = exit_rate.tolist()
    occ = occupancy.tolist()
    random = generator.random
    log = math.log

    x = start_state
    remaining = duration
    events = 0
    while remaining > 0.0:
        rate = exit_rate[x]
        u = random()
        dt = math.inf if u <= 0.0 else -log(u) / rate
        if dt >= remaining:
            occ[x] += remaining
            break
        occ[x] += dt
        remaining -= dt
        threshold = random() * rate
        k0 = indptr[x]
        k1 = indptr[x + 1]
        k = k1 - 1
        while k0 < k1 - 1:
            if cumrate[k0] > threshold:
                k = k0
                break
            k0 += 1
        x = targets[k]
        events += 1
        if trajectory is not None:
            trajectory.append((clock0 + (duration - remaining), x))

    occupancy[:] = occ
    return x, events
