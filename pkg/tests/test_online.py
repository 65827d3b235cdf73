import json
import math

import numpy as np
import pytest

import prodform as pf
from prodform.online import (
    RunConfig,
    ScheduleError,
    check_schedule_conditions,
    clamp,
    constants,
    custom_schedule,
    deviation_bound,
    make_schedule,
    parameter_growth_bound,
    run_online,
    write_run_manifest,
    write_trace_csv,
)


# --- clamp -------------------------------------------------------------------


def test_clamp_inside_box_is_identity():
    box = np.array([[-1.0, 1.0], [-2.0, 2.0]])
    r = np.array([0.5, -1.5])
    assert np.array_equal(clamp(r, box), r)


def test_clamp_truncates():
    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    assert np.array_equal(clamp([2.0, -3.0], box), [1.0, -1.0])


def test_clamp_idempotent():
    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    once = clamp([2.0, 0.3], box)
    assert np.array_equal(clamp(once, box), once)


# --- constants ---------------------------------------------------------------


def test_constants_two_state(two_state):
    c = constants(two_state)
    assert (c.c_g, c.c_l, c.c_4, c.max_abs_row_sum) == (2.0, 2.0, 6.0, 1.0)


def test_constants_jackson(jackson22):
    c = constants(jackson22)
    assert c.c_g == 12.0  # 3 states * 2 params * max|A| = 2
    assert c.max_abs_row_sum == 2.0
    assert c.c_4 == 60.0  # c_g * (1 + 2 * 2)


def test_constants_scale_homogeneity(bd3):
    doubled = pf.ProductFormModel(space=bd3.space, transitions=bd3.transitions,
                                  A=2.0 * bd3.A, b=bd3.b)
    c1, c2 = constants(bd3), constants(doubled)
    assert c2.c_g == 2.0 * c1.c_g
    assert c2.c_l == 2.0 * c1.c_l


# --- schedules ---------------------------------------------------------------


def test_make_schedule_variant_a_values(two_state):
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    assert sched.step(2) == pytest.approx(1.0 / (2.0 * math.log(3.0)))
    assert sched.period(2) == pytest.approx(2.0**2.5)
    assert sched.c_g == 2.0 and sched.c_4 == 6.0


def test_make_schedule_variant_a_rejects(two_state):
    with pytest.raises(ScheduleError) as exc:
        make_schedule("variant_a", 1.0, 1.5, two_state)
    assert exc.value.min_delta == 2.0
    assert "2" in str(exc.value)


def test_make_schedule_variant_b_threshold(two_state):
    # minimal admissible delta is 1 + alpha + c_4 = 8 on the two-state chain
    with pytest.raises(ScheduleError) as exc:
        make_schedule("variant_b", 1.0, 7.9, two_state)
    assert exc.value.min_delta == 8.0
    sched = make_schedule("variant_b", 1.0, 8.0, two_state)
    assert sched.step(4) == pytest.approx(0.25)
    assert sched.period(1) == pytest.approx(1.0)  # (ln 1 + 1)^2 * 1
    assert sched.period(2) == pytest.approx((math.log(2) + 1.0) ** 2 * 2.0**8)


def test_make_schedule_rejects_nonpositive_alpha(two_state):
    with pytest.raises(ScheduleError):
        make_schedule("variant_a", 0.0, 2.0, two_state)


# --- run_online --------------------------------------------------------------


def test_oracle_fixed_point(bd2):
    sched = make_schedule("variant_a", 0.1, 1.2, bd2)
    gamma = pf.aggregates(bd2, np.zeros(2))
    cfg = RunConfig(target=gamma, schedule=sched, num_iterations=50, seed=0, oracle=True)
    trace = run_online(bd2, cfg)
    assert np.abs(trace.r).max() < 1e-14
    assert np.abs(trace.grad).max() < 1e-14


def test_oracle_descent(example_models):
    # noise-free runs: the dual objective is eventually non-increasing and
    # the aggregate error keeps shrinking with the iteration count
    targets = {"birth_death": [0.55, 0.3, 0.1], "jackson": [-1.2, -1.8], "csma": [0.5, 1.0, 0.3]}
    for name, m in example_models.items():
        sched = make_schedule("variant_a", 0.1, 1.2, m)
        cfg = RunConfig(target=np.array(targets[name]), schedule=sched,
                        num_iterations=2000, seed=0, oracle=True)
        trace = run_online(m, cfg)
        err = np.abs(trace.grad).max(axis=1)
        assert err[-1] < err[199] < err[19]
        tail = trace.dual_value[1000:]
        assert np.all(np.diff(tail) <= 1e-12)


def test_oracle_jackson_reaches_tight_error(jackson23):
    sched = make_schedule("variant_a", 0.1, 1.2, jackson23)
    cfg = RunConfig(target=np.array([-1.2, -1.8]), schedule=sched,
                    num_iterations=10_000, seed=0, oracle=True)
    trace = run_online(jackson23, cfg)
    assert trace.final_error() <= 1e-3


def test_stochastic_run_seed7(two_state):
    sched = make_schedule("variant_a", 0.1, 1.2, two_state)
    cfg = RunConfig(target=np.array([0.75]), schedule=sched, num_iterations=200, seed=7)
    trace = run_online(two_state, cfg)
    assert trace.final_error() <= 0.1
    assert len(trace) == 200
    assert trace.sim_time[-1] == pytest.approx(sum(sched.period(n) for n in range(1, 201)))


def test_determinism(bd2):
    sched = make_schedule("variant_a", 0.1, 1.2, bd2)
    cfg = RunConfig(target=np.array([0.6, 0.3]), schedule=sched, num_iterations=60, seed=21)
    t1 = run_online(bd2, cfg)
    t2 = run_online(bd2, cfg)
    assert np.array_equal(t1.r, t2.r)
    assert np.array_equal(t1.pi_hat, t2.pi_hat)


def test_iterates_reproducible_from_records(bd2):
    sched = make_schedule("variant_a", 0.1, 1.2, bd2)
    cfg = RunConfig(target=np.array([0.6, 0.3]), schedule=sched, num_iterations=40, seed=5)
    tr = run_online(bd2, cfg)
    r_prev = np.zeros(2)
    for k in range(len(tr)):
        expected = r_prev - tr.step[k] * tr.grad[k]
        assert np.allclose(tr.r[k], expected, atol=1e-15)
        r_prev = tr.r[k]


def test_truncated_run_pins_at_box(two_state):
    # target needs r* = ln 3 ~ 1.0986, outside the configured box
    sched = make_schedule("variant_a", 0.1, 1.2, two_state)
    cfg = RunConfig(target=np.array([0.75]), schedule=sched, num_iterations=300, seed=4,
                    truncation_box=np.array([[-0.5, 0.5]]))
    trace = run_online(two_state, cfg)
    assert trace.r.max() == 0.5
    assert (trace.r[-100:, 0] == 0.5).mean() > 0.5


def test_clamp_invariance_when_box_never_binds(two_state):
    sched = make_schedule("variant_a", 0.1, 1.2, two_state)
    free = RunConfig(target=np.array([0.75]), schedule=sched, num_iterations=100, seed=3)
    boxed = RunConfig(target=np.array([0.75]), schedule=sched, num_iterations=100, seed=3,
                      truncation_box=np.array([[-50.0, 50.0]]))
    t_free = run_online(two_state, free)
    t_boxed = run_online(two_state, boxed)
    assert np.abs(t_free.r).max() < 50.0
    assert np.array_equal(t_free.r, t_boxed.r)


def test_run_config_validation(two_state):
    sched = make_schedule("variant_a", 0.1, 1.2, two_state)
    with pytest.raises(ValueError, match="min < max"):
        run_online(two_state, RunConfig(target=np.array([0.5]), schedule=sched,
                                        num_iterations=1, seed=0,
                                        truncation_box=np.array([[1.0, -1.0]])))
    with pytest.raises(ValueError, match="inside the truncation box"):
        run_online(two_state, RunConfig(target=np.array([0.5]), schedule=sched,
                                        num_iterations=1, seed=0,
                                        init_r=np.array([2.0]),
                                        truncation_box=np.array([[-1.0, 1.0]])))


def test_nonfinite_update_aborts(two_state):
    sched = custom_schedule(step=lambda n: 1e308, period=lambda n: 1.0)
    cfg = RunConfig(target=np.array([5.0]), schedule=sched, num_iterations=10, seed=0, oracle=True)
    trace = run_online(two_state, cfg)
    assert trace.aborted
    assert len(trace) < 10


# --- growth bound ------------------------------------------------------------


def test_growth_bound_holds_on_runs(example_models):
    targets = {"birth_death": [0.55, 0.3, 0.1], "jackson": [-1.2, -1.8], "csma": [0.5, 1.0, 0.3]}
    for name, m in example_models.items():
        sched = make_schedule("variant_a", 0.1, 1.2, m)
        for seed in range(3):
            cfg = RunConfig(target=np.array(targets[name]), schedule=sched,
                            num_iterations=100, seed=seed)
            report = parameter_growth_bound(run_online(m, cfg), m)
            assert report.passed
            assert report.worst_slack >= 0.0


def test_growth_bound_negative_control(two_state):
    sched = make_schedule("variant_a", 0.1, 1.2, two_state)
    cfg = RunConfig(target=np.array([0.75]), schedule=sched, num_iterations=10, seed=0)
    trace = run_online(two_state, cfg)
    trace.r = trace.r.copy()
    trace.r[5, 0] = 100.0  # way beyond |r0| + c_g * sum of steps
    report = parameter_growth_bound(trace, two_state)
    assert not report.passed
    assert report.worst_slack < 0.0


def test_growth_bound_vacuous_on_empty_trace(two_state):
    sched = make_schedule("variant_a", 0.1, 1.2, two_state)
    cfg = RunConfig(target=np.array([0.75]), schedule=sched, num_iterations=0, seed=0)
    report = parameter_growth_bound(run_online(two_state, cfg), two_state)
    assert report.passed and report.worst_slack == math.inf


# --- schedule condition probes ------------------------------------------------


def test_conditions_variant_a(two_state):
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    report = check_schedule_conditions(sched, horizon=50_000)
    assert report.condition_i_ok
    assert report.passed
    assert not any(c.status == "failed" for c in report.combos)


def test_conditions_variant_b(two_state):
    sched = make_schedule("variant_b", 1.0, 8.0, two_state)
    report = check_schedule_conditions(sched, horizon=1_000_000)
    assert report.condition_i_ok
    assert report.passed
    # samples beyond the certified c4 range are skipped
    assert all(c.c4 <= 7.0 for c in report.combos)


def test_conditions_reject_convergent_steps():
    sched = custom_schedule(step=lambda n: n**-2.0, period=lambda n: float(n), alpha=1.0)
    report = check_schedule_conditions(sched, horizon=10_000)
    assert not report.condition_i_diverges
    assert not report.passed


def test_conditions_custom_without_alpha_skips_ii():
    sched = custom_schedule(step=lambda n: 1.0 / n, period=lambda n: float(n) ** 3)
    report = check_schedule_conditions(sched, horizon=1_000_000)
    assert report.combos == []
    assert any("skipped" in note for note in report.notes)


def test_conditions_horizon_validation(two_state):
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    with pytest.raises(ValueError):
        check_schedule_conditions(sched, horizon=100)


# --- deviation bound ----------------------------------------------------------


def test_deviation_bound_vacuous_at_zero_epsilon(two_state):
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    assert deviation_bound(two_state, sched, 10, 0.0) >= 1.0


def test_deviation_bound_monotone_in_epsilon(two_state):
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    values = [deviation_bound(two_state, sched, 50, e) for e in (0.0, 0.1, 0.3, 0.7, 1.0)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_deviation_bound_arithmetic_oracle(two_state):
    # independent recomputation of the bound for the two-state chain:
    # c_g = 2, c_2 = 2, c_4 = 6, |E| = 1, |G| = 2, b-range = 0 so c_1 = sqrt(2),
    # c_Q = 1 (the fixed unit-rate transition), c_3 = (2/(2*2*4*1))/(1+1)
    n, eps_dev = 100, 0.1
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    s_n = sum(1.0 / (m * math.log(m + 1.0)) for m in range(1, n + 1))
    c_1, c_2, c_3, c_4 = math.sqrt(2.0), 2.0, (2.0 / 16.0) / 2.0, 6.0
    period = float(n) ** 2.5
    expected = c_1 * math.exp(c_2 * s_n - c_3 * eps_dev**2 * period * math.exp(-c_4 * s_n))
    got = deviation_bound(two_state, sched, n, eps_dev)
    assert got == pytest.approx(expected, rel=1e-12)
    assert 0.0 < got < math.inf


def test_deviation_bound_epsilon_range(two_state):
    sched = make_schedule("variant_a", 1.0, 2.5, two_state)
    with pytest.raises(ValueError):
        deviation_bound(two_state, sched, 10, 1.5)


# --- trace output --------------------------------------------------------------


def test_trace_csv_format(bd2, tmp_path):
    sched = make_schedule("variant_a", 0.1, 1.2, bd2)
    cfg = RunConfig(target=np.array([0.6, 0.3]), schedule=sched, num_iterations=5, seed=1)
    trace = run_online(bd2, cfg)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,r_1,r_2,agg_1,agg_2,grad_norm,step,period,sim_time"
    assert len(lines) == 6
    path_pi = tmp_path / "trace_pi.csv"
    write_trace_csv(trace, path_pi, include_pihat=True)
    header = path_pi.read_text().splitlines()[0]
    assert "pihat_1,pihat_2,pihat_3" in header


def test_trace_csv_deterministic_bytes(bd2, tmp_path):
    sched = make_schedule("variant_a", 0.1, 1.2, bd2)
    cfg = RunConfig(target=np.array([0.6, 0.3]), schedule=sched, num_iterations=20, seed=9)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(run_online(bd2, cfg), p1)
    write_trace_csv(run_online(bd2, cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_manifest_contents(bd2, tmp_path):
    sched = make_schedule("variant_a", 0.1, 1.2, bd2)
    cfg = RunConfig(target=np.array([0.6, 0.3]), schedule=sched, num_iterations=5, seed=11)
    path = tmp_path / "manifest.json"
    write_run_manifest(bd2, cfg, path)
    doc = json.loads(path.read_text())
    assert doc["seed"] == 11
    assert doc["model_hash"] == pf.model_digest(bd2)
    assert doc["constants"]["c_g"] == 6.0  # 3 states * 2 params * 1
    assert doc["config"]["schedule"] == {"kind": "variant_a", "alpha": 0.1, "delta": 1.2}
    assert doc["config"]["target"] == [0.6, 0.3]
