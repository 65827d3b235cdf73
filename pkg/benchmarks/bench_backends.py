"""Compare the compiled and pure-Python simulation backends.

Runs identical seeded windows through both inner loops, checks they produce
bit-identical occupancy measures, and reports events/second and speedup.

Usage: python benchmarks/bench_backends.py [--duration 2e5]
"""

import argparse
import time

import numpy as np

import prodform as pf
from prodform.simulate import _jump_tables, _window_rates, have_compiled_backend


def _count_events(model, r, seed, duration, backend):
    sim = pf.new_sim_state(seed)
    indptr, targets, cumrate, exit_rate = _window_rates(model, np.asarray(r, float))
    occupancy = np.zeros(model.num_states)
    if backend == "compiled":
        from prodform import _simkernel

        t0 = time.perf_counter()
        _, events = _simkernel.run_window(occupancy, sim.state, duration, indptr,
                                          targets, cumrate, exit_rate, sim.rng.bit_generator)
    else:
        from prodform import _pyloop

        t0 = time.perf_counter()
        _, events = _pyloop.run_window(occupancy, sim.state, duration, indptr,
                                       targets, cumrate, exit_rate, sim.rng)
    elapsed = time.perf_counter() - t0
    return occupancy, int(events), elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--duration", type=float, default=2e5, help="window length in simulated time")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    cases = [
        ("two-state", pf.ProductFormModel(
            space=pf.StateSpace((0, 1)),
            transitions=(pf.TransitionTemplate(0, 1, 1.0, (1.0,)),
                         pf.TransitionTemplate(1, 0, 1.0, (0.0,))),
            A=[[0.0], [1.0]], b=[0.0, 0.0]), [0.4]),
        ("birth-death n=4", pf.build_birth_death(4, [1.0, 2.0, 1.5, 0.5]), [0.2, -0.3, 0.1, 0.0]),
        ("csma (2,5,3)", pf.build_csma([2, 5, 3]), [-0.3, -0.8, 0.2]),
        ("jackson d=3 n=4", pf.build_jackson(3, 4, [[0, 0.5, 0.5], [1, 0, 0], [0.3, 0.7, 0]]),
         [0.1, -0.2, 0.4]),
    ]

    if not have_compiled_backend():
        print("compiled backend not built; benchmarking pure Python only")

    print(f"{'model':<18} {'backend':<9} {'events':>10} {'seconds':>9} {'events/s':>12}")
    for name, model, r in cases:
        _jump_tables.cache_clear()
        rows = {}
        for backend in (("compiled", "python") if have_compiled_backend() else ("python",)):
            occ, events, elapsed = _count_events(model, r, args.seed, args.duration, backend)
            rows[backend] = (occ, events, elapsed)
            print(f"{name:<18} {backend:<9} {events:>10} {elapsed:>9.3f} {events / elapsed:>12.0f}")
        if len(rows) == 2:
            occ_c, ev_c, t_c = rows["compiled"]
            occ_p, ev_p, t_p = rows["python"]
            identical = np.array_equal(occ_c, occ_p) and ev_c == ev_p
            print(f"{'':<18} bit-identical: {identical}, speedup: x{t_p / t_c:.1f}")


if __name__ == "__main__":
    main()
