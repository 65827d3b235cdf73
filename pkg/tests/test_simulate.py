import numpy as np
import pytest

import prodform as pf
from prodform.simulate import (
    BACKENDS,
    default_backend,
    have_compiled_backend,
    new_sim_state,
    simulate_window,
    write_trajectory_csv,
)

needs_compiled = pytest.mark.skipif(not have_compiled_backend(),
                                    reason="compiled kernel not built")


def test_reproducibility(two_state):
    runs = []
    for _ in range(2):
        sim = new_sim_state(12345)
        occ, _ = simulate_window(two_state, [0.2], sim, 1000.0)
        runs.append((occ.pi_hat.copy(), sim.state))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_distinct_seeds_differ(two_state):
    occ1, _ = simulate_window(two_state, [0.2], new_sim_state(1), 100.0)
    occ2, _ = simulate_window(two_state, [0.2], new_sim_state(2), 100.0)
    assert not np.array_equal(occ1.pi_hat, occ2.pi_hat)


def test_occupancy_normalization(example_models):
    rng = np.random.default_rng(30)
    for m in example_models.values():
        sim = new_sim_state(7)
        for _ in range(5):
            occ, _ = simulate_window(m, rng.uniform(-1, 1, m.num_params), sim, 13.7)
            assert abs(occ.pi_hat.sum() - 1.0) <= 1e-12
            assert (occ.pi_hat >= 0).all()


def test_long_window_converges_to_stationary(two_state):
    sim = new_sim_state(99)
    occ, _ = simulate_window(two_state, [0.0], sim, 1e5)
    assert np.abs(occ.pi_hat - 0.5).max() < 0.01


def test_short_window_single_state(two_state):
    # window far below the expected holding time: the start state keeps
    # (almost) all occupancy
    sim = new_sim_state(3, start_state=1)
    occ, _ = simulate_window(two_state, [0.0], sim, 1e-9)
    assert occ.pi_hat[1] > 0.999


def test_state_carries_over(two_state):
    sim = new_sim_state(5)
    simulate_window(two_state, [3.0], sim, 50.0)
    carried = sim.state
    occ, _ = simulate_window(two_state, [3.0], sim, 1e-9)
    assert occ.pi_hat[carried] > 0.999
    assert sim.clock == pytest.approx(50.0 + 1e-9)


def test_consistency_tv_decreases_with_window(bd2):
    r = np.array([0.4, -0.3])
    pi = pf.stationary(bd2, r).pi
    mean_tv = {}
    for t_len in (1e2, 1e3, 1e4):
        tvs = []
        for seed in range(30):
            occ, _ = simulate_window(bd2, r, new_sim_state(seed), t_len)
            tvs.append(0.5 * np.abs(occ.pi_hat - pi).sum())
        mean_tv[t_len] = np.mean(tvs)
    assert mean_tv[1e2] > mean_tv[1e3] > mean_tv[1e4]


def test_batched_windows_match_stationary(two_state):
    # aggregate many short windows; the pooled occupancy is a consistent
    # estimator, so the error should sit within a few standard errors
    r = np.array([0.5])
    pi1 = pf.stationary(two_state, r).pi[1]
    sim = new_sim_state(11)
    simulate_window(two_state, r, sim, 100.0)  # burn-in
    estimates = []
    for _ in range(40):
        occ, _ = simulate_window(two_state, r, sim, 50.0)
        estimates.append(occ.pi_hat[1])
    mean = np.mean(estimates)
    se = np.std(estimates, ddof=1) / np.sqrt(len(estimates))
    assert abs(mean - pi1) <= 3 * se + 1e-12


def test_estimate_aggregates_exact_pi(bd2):
    r = np.array([0.3, 0.1])
    pi = pf.stationary(bd2, r).pi
    occ = pf.OccupancyMeasure(pi_hat=pi, window_length=1.0)
    assert np.allclose(pf.estimate_aggregates(bd2, occ), pf.aggregates(bd2, r), atol=1e-14)


def test_estimate_aggregates_point_mass(bd2):
    e1 = np.zeros(3)
    e1[1] = 1.0
    occ = pf.OccupancyMeasure(pi_hat=e1, window_length=1.0)
    assert np.array_equal(pf.estimate_aggregates(bd2, occ), bd2.A[1])


def test_estimate_aggregates_by_hand(bd2):
    occ = pf.OccupancyMeasure(pi_hat=np.array([0.5, 0.3, 0.2]), window_length=1.0)
    assert np.allclose(pf.estimate_aggregates(bd2, occ), [0.5, 0.2], atol=1e-15)


def test_duration_validation(two_state):
    with pytest.raises(ValueError):
        simulate_window(two_state, [0.0], new_sim_state(0), 0.0)
    with pytest.raises(ValueError):
        simulate_window(two_state, [0.0], new_sim_state(0), -1.0)


def test_absorbing_state_rejected():
    m = pf.ProductFormModel(
        space=pf.StateSpace((0, 1)),
        transitions=(pf.TransitionTemplate(0, 1, 1.0, (1.0,)),),
        A=[[0.0], [1.0]],
        b=[0.0, 0.0],
    )
    with pytest.raises(ValueError, match="no outgoing"):
        simulate_window(m, [0.0], new_sim_state(0), 1.0)


def test_backend_selection_validation(two_state):
    with pytest.raises(ValueError):
        simulate_window(two_state, [0.0], new_sim_state(0), 1.0, backend="fortran")
    assert default_backend() in BACKENDS


@needs_compiled
def test_backends_bit_identical(example_models):
    rng = np.random.default_rng(31)
    for m in example_models.values():
        r = rng.uniform(-1, 1, m.num_params)
        sims = {b: new_sim_state(77) for b in BACKENDS}
        for _ in range(3):  # several consecutive windows
            occs = {b: simulate_window(m, r, sims[b], 200.0, backend=b)[0] for b in BACKENDS}
            assert np.array_equal(occs["compiled"].pi_hat, occs["python"].pi_hat)
            assert sims["compiled"].state == sims["python"].state


def test_trajectory_recording(two_state, tmp_path):
    sim = new_sim_state(8)
    traj = []
    occ, _ = simulate_window(two_state, [0.0], sim, 50.0, trajectory=traj)
    assert len(traj) > 0
    times = [t for t, _ in traj]
    assert all(t2 >= t1 for t1, t2 in zip(times, times[1:]))
    assert all(state in (0, 1) for _, state in traj)
    # consecutive states alternate on a two-state chain
    states = [s for _, s in traj]
    assert all(a != b for a, b in zip(states, states[1:]))

    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path, initial=(0.0, 0))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "time,state"
    assert len(lines) == len(traj) + 2


def test_trajectory_does_not_change_stream(two_state):
    sim_a = new_sim_state(9)
    occ_a, _ = simulate_window(two_state, [0.1], sim_a, 80.0, trajectory=[])
    sim_b = new_sim_state(9)
    occ_b, _ = simulate_window(two_state, [0.1], sim_b, 80.0, backend="python")
    assert np.array_equal(occ_a.pi_hat, occ_b.pi_hat)
