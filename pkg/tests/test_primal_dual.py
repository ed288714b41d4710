import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inertial_dr.checks import HAND_SWEEP, hand_sweep_problem, hand_sweep_suite, metric_suite
from inertial_dr.fixpoint import DivergenceError, KMState, StopRule, constant_schedule
from inertial_dr.primal_dual import (DualBlock, PDSolution, PDState, PrimalDualProblem,
                                     StepSizeError, default_stepsizes, metric_operator,
                                     optimality_residual, pd_solve, pd_step, recover_solution,
                                     validate_stepsizes)
from inertial_dr.prox import Proximable, half_sq_norm, indicator_zero, norm2, sq_dist, zero_function
from inertial_dr.splitting import DRConfig, dr_step
from inertial_dr.vecspace import BlockVector, LinearMap, identity_map, matrix_map, scalar_map


def scalar_problem():
    return hand_sweep_problem()


def test_problem_validation():
    with pytest.raises(ValueError):
        PrimalDualProblem(zero_function(), [])
    with pytest.raises(ValueError):
        PrimalDualProblem(zero_function(), [DualBlock(norm2(), scalar_map(2, 0.0))])
    with pytest.raises(ValueError):
        PrimalDualProblem(zero_function(), [DualBlock(norm2(), identity_map(2)),
                                            DualBlock(norm2(), identity_map(3))])


def test_stepsize_examples():
    p = scalar_problem()
    s = validate_stepsizes(p, 1.0, [1.0])
    assert s.rho == pytest.approx(0.5)
    with pytest.raises(StepSizeError):
        validate_stepsizes(p, 2.0, [2.0])
    two = PrimalDualProblem(zero_function(), [DualBlock(norm2(), identity_map(1)),
                                              DualBlock(norm2(), identity_map(1))])
    s = validate_stepsizes(two, 1.0, [0.5, 0.5], norm_bounds=[np.sqrt(2), np.sqrt(2)])
    assert s.coupling == pytest.approx(2.0)


def test_default_steps_fill():
    p = PrimalDualProblem(zero_function(), [DualBlock(norm2(), matrix_map(np.diag([3.0, 1.0])))])
    s = default_stepsizes(p)
    assert s.coupling == pytest.approx(3.96, rel=1e-6)
    assert s.norm_bounds[0] >= 3.0


def test_hand_sweep_exact():
    assert hand_sweep_suite().passed
    assert HAND_SWEEP["x2"] == 0.75


def test_zero_state_stationary():
    p = PrimalDualProblem(zero_function(), [DualBlock(norm2(), identity_map(2))])
    steps = default_stepsizes(p)
    st_ = PDState.initial(p)
    for _ in range(3):
        st_, it = pd_step(p, st_, steps, constant_schedule(0.2, relaxation=2.0))
    assert not np.any(st_.x_cur) and not np.any(it.p1)


def test_scalar_solve_and_residual():
    p = scalar_problem()
    steps = validate_stepsizes(p, 1.0, [1.0])
    for alpha in (0.0, 0.2):
        r = pd_solve(p, steps, constant_schedule(alpha, relaxation=2.0), StopRule.residual(1e-12))
        assert r.converged and abs(r.x[0]) <= 1e-10
        assert optimality_residual(p, r.solution, steps) <= 1e-10
    exact = recover_solution(p, np.zeros(1), (np.zeros(1),), steps)
    assert optimality_residual(p, exact, steps) <= 1e-12
    bumped = recover_solution(p, np.array([0.1]), (np.zeros(1),), steps)
    assert optimality_residual(p, bumped, steps) > 0


def test_residual_trend_decreasing():
    p = scalar_problem()
    steps = validate_stepsizes(p, 1.0, [1.0])
    sched = constant_schedule(0.0, relaxation=2.0)
    st_ = PDState(np.array([5.0]), np.array([5.0]), (np.ones(1),), (np.ones(1),), 1)
    vals = []
    for _ in range(40):
        st_, _ = pd_step(p, st_, steps, sched)
        vals.append(optimality_residual(p, PDSolution(st_.x_cur, st_.v_cur,
                                                      *_p(p, st_, steps)), steps))
    assert vals[-1] < vals[10] < vals[0]


def _p(p, st_, steps):
    sol = recover_solution(p, st_.x_cur, st_.v_cur, steps)
    return sol.p1, sol.p2


def test_metric_examples():
    p = scalar_problem()
    V = metric_operator(p, validate_stepsizes(p, 1.0, [1.0]))
    out = V(BlockVector([np.array([2.0]), np.array([4.0])]))
    np.testing.assert_allclose(out.flatten(), [2.0 - 2.0, 4.0 - 1.0])
    np.testing.assert_allclose(V.to_dense(), [[1.0, -0.5], [-0.5, 1.0]])


def test_metric_suite_small():
    assert metric_suite(draws=4, samples=100, seed=9).passed


def test_divergence_flagged():
    bad = Proximable(lambda g, x: x * np.inf)
    p = PrimalDualProblem(bad, [DualBlock(norm2(), identity_map(1))])
    with np.errstate(invalid="ignore"), pytest.raises(DivergenceError):
        pd_step(p, PDState.initial(p, [1.0]), default_stepsizes(p), constant_schedule(0.0, relaxation=2.0))


def test_not_converged_flag():
    p = scalar_problem()
    r = pd_solve(p, None, None, StopRule.residual(1e-300, max_iter=3), x0=[4.0])
    assert not r.converged and r.iterations == 3


@pytest.mark.parametrize("alpha", [0.0, 0.2])
def test_equivalence_with_abstract_dr(alpha):
    """The sweep is Douglas-Rachford on the product space with the step-size metric."""
    rng = np.random.default_rng(0)
    n = 2
    Lm = rng.normal(size=(n, n))
    a, z, r = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    # f = 1/2||x - a||^2, g = 1/2||.||^2, l = indicator of 0: A x = x - a, B^{-1} = id, D^{-1} = 0
    prob = PrimalDualProblem(sq_dist(a), [DualBlock(half_sq_norm(), matrix_map(Lm), indicator_zero(), r)], z=z)
    steps = default_stepsizes(prob)
    V = metric_operator(prob, steps).to_dense()
    I, O = np.eye(n), np.zeros((n, n))
    S = np.block([[O, Lm.T], [-Lm, O]])
    M_lin, M_off = np.eye(2 * n), np.concatenate([-z - a, r])

    def resolvent(lin, off):
        # y + V^{-1}(S/2 y + lin y + off) = w
        K = V + 0.5 * S + lin
        return lambda w: np.linalg.solve(K, V @ w - off)

    JB = resolvent(M_lin, M_off)
    JA = resolvent(np.zeros((2 * n, 2 * n)), np.zeros(2 * n))
    sched = constant_schedule(alpha, relaxation=2.0)
    pd_state, km = PDState.initial(prob), KMState(np.zeros(2 * n), np.zeros(2 * n), 1)
    for _ in range(40):
        pd_state, _ = pd_step(prob, pd_state, steps, sched)
        km, _ = dr_step(JA, JB, km, DRConfig(1.0, sched))
        got = np.concatenate([pd_state.x_cur, *pd_state.v_cur])
        assert np.max(np.abs(got - km.x_cur)) <= 1e-10


def test_summable_and_residuals_vanish():
    rng = np.random.default_rng(2)
    Lm = rng.normal(size=(3, 2))
    prob = PrimalDualProblem(sq_dist([1.0, -2.0]), [DualBlock(norm2(0.5), matrix_map(Lm))])
    r = pd_solve(prob, None, constant_schedule(0.2, relaxation=2.0), StopRule.residual(1e-10))
    assert r.converged and r.trace.fp_residual[-1] <= 1e-10
    assert np.all(np.diff(np.cumsum(r.trace.step_sq)) >= 0)


@settings(max_examples=20)
@given(st.floats(0.05, 3.0), st.integers(0, 1000))
def test_p1_recomputable(scale, seed):
    rng = np.random.default_rng(seed)
    prob = PrimalDualProblem(sq_dist(rng.normal(size=2)), [DualBlock(norm2(scale), identity_map(2))])
    steps = default_stepsizes(prob)
    r = pd_solve(prob, steps, constant_schedule(0.1, relaxation=2.0), StopRule.residual(1e-12))
    again = recover_solution(prob, r.solution.xbar, r.solution.vbar, steps)
    assert np.linalg.norm(again.p1 - r.x) <= 1e-9


def test_linear_map_nonzero_probe_uses_forward():
    L = LinearMap(1, 1, lambda x: 2 * x, lambda y: 2 * y, norm_bound=2.0)
    PrimalDualProblem(zero_function(), [DualBlock(norm2(), L)])
