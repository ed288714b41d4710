import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from inertial_dr.checks import lyapunov_suite, schedule_region_suite
from inertial_dr.fixpoint import (DivergenceError, InertialSchedule, KMState, ResidualTrace,
                                  ScheduleError, StopRule, best_delta, constant_schedule,
                                  delta_threshold, km_solve, km_step, lyapunov_values,
                                  validate_schedule)


def test_lambda_max_examples():
    assert validate_schedule(0.0, 0.3, 1.0) == pytest.approx(1 / 1.3, abs=1e-15)
    assert validate_schedule(0.1, 0.01, 1.0) == pytest.approx(0.978 / 1.22, abs=1e-12)
    with pytest.raises(ScheduleError, match="12.83"):
        validate_schedule(0.9, 1.0, 0.1)
    assert delta_threshold(0.9, 1.0) == pytest.approx((0.81 * 1.9 + 0.9) / 0.19)


@pytest.mark.parametrize("bad", [(1.0, 0.1, 1.0), (-0.1, 0.1, 1.0), (0.1, 0.0, 1.0), (0.1, 0.1, -1.0)])
def test_validate_rejects(bad):
    with pytest.raises(ScheduleError):
        validate_schedule(*bad)


@given(st.floats(0.0, 0.95), st.floats(1e-6, 2.0))
def test_best_delta_maximizes(alpha, sigma):
    d = best_delta(alpha, sigma)
    lam = validate_schedule(alpha, sigma, d)
    for f in (0.9, 1.1):
        dd = d * f
        if dd > delta_threshold(alpha, sigma):
            assert validate_schedule(alpha, sigma, dd) <= lam * (1 + 1e-12)


def test_schedule_rules_enforced():
    s = constant_schedule(0.2)
    assert s.coefficients(1)[0] == 0.0
    assert s.coefficients(5)[0] == 0.2
    bad = InertialSchedule(0.2, 1e-6, best_delta(0.2, 1e-6), lambda n: 0.1, lambda n: 0.5, 0.5)
    with pytest.raises(ScheduleError):
        bad.coefficients(1)  # a_1 must vanish
    dec = InertialSchedule(0.2, 1e-6, best_delta(0.2, 1e-6), lambda n: 0.0 if n in (1, 3) else 0.1,
                           lambda n: 0.5, 0.5)
    with pytest.raises(ScheduleError):
        dec.coefficients(3)
    with pytest.raises(ScheduleError):
        constant_schedule(0.2, lam=0.99)


def test_dr_default_relaxation():
    assert constant_schedule(0.0, relaxation=2.0).coefficients(2)[1] == 1.0
    s = constant_schedule(0.3, relaxation=2.0)
    assert s.coefficients(2)[1] < 1.0 < 2 * s.lambda_max + 1
    assert s.coefficients(2)[1] < s.lambda_upper


def test_km_step_hand_value():
    sched = constant_schedule(0.0, lam=0.5, sigma=0.5)
    out = km_step(lambda x: 0.5 * x + 1, KMState(np.ones(1), np.ones(1), 1), sched)
    assert out.x_cur[0] == 1.25


def test_identity_is_stationary():
    sched = constant_schedule(0.3)
    st_ = KMState(np.array([2.0, -1.0]), np.array([2.0, -1.0]), 1)
    for _ in range(5):
        st_ = km_step(lambda x: x, st_, sched)
    np.testing.assert_array_equal(st_.x_cur, [2.0, -1.0])
    res = km_solve(lambda x: x, [3.0], stop=StopRule.residual(1e-12))
    assert res.iterations == 1 and res.converged


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.3])
def test_km_solve_examples(alpha):
    sched = constant_schedule(alpha, lam=min(0.5, constant_schedule(alpha).lambda_max))
    r = km_solve(lambda x: 0.5 * x + 1, [0.0], sched=sched, stop=StopRule.residual(1e-12))
    assert abs(r.x[0] - 2.0) <= 1e-8
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    r = km_solve(lambda x: rot @ x, [1.0, 1.0], sched=sched, stop=StopRule.residual(1e-12))
    assert np.linalg.norm(r.x) <= 1e-8


def test_km_not_converged_flag():
    r = km_solve(lambda x: 0.5 * x + 1, [0.0], stop=StopRule.residual(1e-15, max_iter=3))
    assert not r.converged and r.iterations == 3


def test_km_divergence():
    with pytest.raises(DivergenceError):
        km_solve(lambda x: x * np.inf, [1.0], stop=StopRule.iterations(2))


def test_rmse_stop():
    r = km_solve(lambda x: 0.5 * x + 1, [0.0], stop=StopRule.rmse([2.0], 1e-6))
    assert r.converged and r.trace.rmse[-1] <= 1e-6


def test_lyapunov_special_cases():
    sched = constant_schedule(0.2)
    y = np.array([1.0, 2.0])
    assert lyapunov_values(y, y, y, y, sched, 1) == (0.0, 0.0)
    x0, x1, x2 = np.array([3.0, 0.0]), np.array([2.0, 1.0]), np.array([1.5, 1.5])
    mu1, _ = lyapunov_values(x0, x1, x2, y, sched, 1)
    assert mu1 == pytest.approx(float((x1 - y) @ (x1 - y)))
    with pytest.raises(ValueError):
        lyapunov_values(x0, x1, x2, np.ones(3), sched, 2)


def test_mu_descent_on_affine_run():
    sched = constant_schedule(0.3, sigma=0.01)
    xs = [np.zeros(1), np.zeros(1)]
    st_ = KMState(xs[0], xs[1], 1)
    for _ in range(50):
        st_ = km_step(lambda x: 0.5 * x + 1, st_, sched)
        xs.append(st_.x_cur)
    for n in range(1, 50):
        mu_n, mu_n1 = lyapunov_values(xs[n - 1], xs[n], xs[n + 1], np.array([2.0]), sched, n)
        assert mu_n1 <= mu_n + 1e-12


@given(st.integers(0, 10_000))
def test_suites_seed_independent(seed):
    assert schedule_region_suite(seed, samples=20).passed
    assert lyapunov_suite((0.0, 0.2), (0.01,), iters=30, seed=seed).passed


def test_trace_entries_nonnegative():
    tr = ResidualTrace()
    st_ = KMState(np.zeros(2), np.ones(2), 1)
    for _ in range(10):
        st_ = km_step(lambda x: np.array([[0, -1], [1, 0]]) @ x, st_, constant_schedule(0.1), tr)
    assert min(tr.step_sq) >= 0 and min(tr.fp_residual) >= 0 and len(tr) == 10
    assert all(math.isfinite(v) for v in tr.step_sq)
