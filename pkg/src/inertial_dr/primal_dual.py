"""Inertial primal-dual Douglas-Rachford splitting for structured convex problems.

Solves

    min_x  f(x) + sum_i (g_i [] l_i)(L_i x - r_i) - <x, z>

together with its conjugate dual, where ``[]`` is infimal convolution. Each
function is touched only through a prox: ``prox_{tau f}`` for the primal
block and ``prox_{sigma_i g_i*}``, ``prox_{sigma_i l_i*}`` for the dual
blocks. The sweep is a Douglas-Rachford step in the product space equipped
with the metric of :func:`metric_operator`, so it inherits the inertial
schedule (relaxation factor 2) unchanged.

Step sizes must satisfy ``tau * sum_i sigma_i ||L_i||^2 < 4``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fixpoint import (DivergenceError, InertialSchedule, ResidualTrace, ScheduleError,
                       StopRule, constant_schedule)
from .prox import Proximable, indicator_zero
from .vecspace import BlockVector, LinearMap, as_vector, op_norm_estimate

__all__ = [
    "StepSizeError",
    "DualBlock",
    "PrimalDualProblem",
    "StepSizes",
    "validate_stepsizes",
    "default_stepsizes",
    "certified_norm",
    "PDState",
    "PDIterates",
    "PDSolution",
    "PDTrace",
    "PDResult",
    "pd_step",
    "pd_solve",
    "recover_solution",
    "optimality_residual",
    "MetricOperator",
    "metric_operator",
]

NORM_SAFETY = 1.01


class StepSizeError(ValueError):
    """Primal/dual step sizes violate ``tau * sum sigma_i ||L_i||^2 < 4``."""


@dataclass(frozen=True)
class DualBlock:
    """One term ``(g [] l)(L x - r)`` of the primal objective.

    ``l`` defaults to the indicator of the origin, for which ``g [] l = g``.
    """

    g: Proximable
    L: LinearMap
    l: Proximable = field(default_factory=indicator_zero)
    r: np.ndarray | None = None

    def __post_init__(self):
        r = np.zeros(self.L.out_dim) if self.r is None else as_vector(self.r, self.L.out_dim, name="r")
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class PrimalDualProblem:
    """``f``, linear term ``z`` and the dual blocks; ``objective`` is optional.

    ``objective`` (``x -> primal objective value``) is only used for
    reporting; the solver never needs it.
    """

    f: Proximable
    blocks: Sequence[DualBlock]
    z: np.ndarray | None = None
    objective: Callable[[np.ndarray], float] | None = field(default=None, repr=False)
    g_conj: tuple = field(init=False, repr=False)
    l_conj: tuple = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("a primal-dual problem needs at least one dual block")
        dim = blocks[0].L.in_dim
        probe = np.random.default_rng(12345).standard_normal(dim)
        for i, b in enumerate(blocks):
            if b.L.in_dim != dim:
                raise ValueError(f"block {i}: L maps from dimension {b.L.in_dim}, expected {dim}")
            if not np.any(b.L.forward(probe)):
                raise ValueError(f"block {i}: L must be nonzero")
        z = np.zeros(dim) if self.z is None else as_vector(self.z, dim, name="z")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "g_conj", tuple(b.g.conjugate for b in blocks))
        object.__setattr__(self, "l_conj", tuple(b.l.conjugate for b in blocks))

    @property
    def dim(self) -> int:
        return self.blocks[0].L.in_dim

    @property
    def dual_dims(self) -> tuple[int, ...]:
        return tuple(b.L.out_dim for b in self.blocks)

    @property
    def m(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class StepSizes:
    tau: float
    sigmas: tuple
    rho: float            # strong-positivity constant of the metric
    coupling: float       # tau * sum sigma_i ||L_i||^2, always < 4
    norm_bounds: tuple


def certified_norm(L: LinearMap, seed: int = 0) -> float:
    """An upper bound for ``||L||``: ``L.norm_bound`` if set, else power iteration times 1.01."""
    if L.norm_bound is not None:
        return float(L.norm_bound)
    return NORM_SAFETY * op_norm_estimate(L, seed=seed).value


def validate_stepsizes(problem: PrimalDualProblem, tau: float, sigmas,
                       norm_bounds=None) -> StepSizes:
    """Check the step-size condition and compute the metric constant ``rho``.

    ``rho = (1 - sqrt(tau sum sigma_i ||L_i||^2) / 2) * min(1/tau, 1/sigma_1, ...)``.
    """
    sigmas = tuple(float(s) for s in np.broadcast_to(np.asarray(sigmas, float), (problem.m,)))
    tau = float(tau)
    if not (tau > 0 and all(s > 0 for s in sigmas)):
        raise StepSizeError("tau and all sigma_i must be positive")
    if norm_bounds is None:
        norm_bounds = [certified_norm(b.L) for b in problem.blocks]
    norm_bounds = tuple(float(v) for v in norm_bounds)
    if len(norm_bounds) != problem.m:
        raise ValueError("need one norm bound per block")
    coupling = tau * sum(s * nb * nb for s, nb in zip(sigmas, norm_bounds))
    if not coupling < 4.0:
        raise StepSizeError(f"tau * sum sigma_i ||L_i||^2 = {coupling} must be < 4")
    rho = (1.0 - 0.5 * math.sqrt(coupling)) * min(1.0 / tau, *(1.0 / s for s in sigmas))
    return StepSizes(tau, sigmas, rho, coupling, norm_bounds)


def default_stepsizes(problem: PrimalDualProblem, norm_bounds=None,
                      fill: float = 0.99) -> StepSizes:
    """Equal primal and dual steps ``c`` with ``c^2 sum ||L_i||^2 = 4 * fill``."""
    if norm_bounds is None:
        norm_bounds = [certified_norm(b.L) for b in problem.blocks]
    total = sum(nb * nb for nb in norm_bounds)
    c = math.sqrt(4.0 * fill / total)
    return validate_stepsizes(problem, c, [c] * problem.m, norm_bounds)


@dataclass(frozen=True)
class PDState:
    x_prev: np.ndarray
    x_cur: np.ndarray
    v_prev: tuple
    v_cur: tuple
    n: int = 1

    @classmethod
    def initial(cls, problem: PrimalDualProblem, x0=None, v0=None) -> "PDState":
        """``x_0 = x_1 = x0`` (default 0) and ``v_{i,0} = v_{i,1} = v0_i`` (default 0)."""
        x = np.zeros(problem.dim) if x0 is None else as_vector(x0, problem.dim, name="x0")
        if v0 is None:
            v = tuple(np.zeros(d) for d in problem.dual_dims)
        else:
            v = tuple(as_vector(vi, d, name="v0") for vi, d in zip(v0, problem.dual_dims))
        return cls(x, x.copy(), v, tuple(vi.copy() for vi in v), 1)


@dataclass(frozen=True)
class PDIterates:
    p1: np.ndarray
    w1: np.ndarray
    p2: tuple
    w2: tuple
    z1: np.ndarray
    z2: tuple


@dataclass(frozen=True)
class PDSolution:
    xbar: np.ndarray
    vbar: tuple
    p1: np.ndarray
    p2: tuple


@dataclass
class PDTrace(ResidualTrace):
    """Adds the objective at ``p_1`` (when the problem defines one)."""

    objective: list = field(default_factory=list)


@dataclass
class PDResult:
    solution: PDSolution
    trace: PDTrace
    converged: bool
    iterations: int
    state: PDState

    @property
    def x(self) -> np.ndarray:
        """Primal solution estimate ``p_1``."""
        return self.solution.p1


def pd_step(problem: PrimalDualProblem, state: PDState, steps: StepSizes,
            sched: InertialSchedule) -> tuple[PDState, PDIterates]:
    """One full inertial primal-dual sweep.

    Order: ``p1, w1``, then ``(p2_i, w2_i)`` for every block, ``z1``, the
    primal update, then ``(z2_i, v_i)`` for every block. The extrapolated
    points are formed once and reused.
    """
    if sched.relaxation != 2.0:
        raise ScheduleError("the primal-dual sweep needs a schedule built with relaxation=2")
    a, lam = sched.coefficients(state.n)
    tau, sig = steps.tau, steps.sigmas
    blocks = problem.blocks
    x, xp = state.x_cur, state.x_prev
    xw = x + a * (x - xp)
    vw = [v + a * (v - vp) for v, vp in zip(state.v_cur, state.v_prev)]

    acc = np.zeros_like(x)
    for b, v in zip(blocks, vw):
        acc = acc + b.L.adjoint(v)
    p1 = problem.f.prox_fn(tau, xw - (0.5 * tau) * acc + tau * problem.z)
    w1 = 2.0 * p1 - xw

    p2, w2 = [], []
    for b, gc, s, v in zip(blocks, problem.g_conj, sig, vw):
        p = gc.prox_fn(s, v + (0.5 * s) * b.L.forward(w1) - s * b.r)
        p2.append(p)
        w2.append(2.0 * p - v)

    acc = np.zeros_like(x)
    for b, w in zip(blocks, w2):
        acc = acc + b.L.adjoint(w)
    z1 = w1 - (0.5 * tau) * acc
    x_next = xw + lam * (z1 - p1)

    shift = 2.0 * z1 - w1
    z2, v_next = [], []
    for b, lc, s, w, v, p in zip(blocks, problem.l_conj, sig, w2, vw, p2):
        zz = lc.prox_fn(s, w + (0.5 * s) * b.L.forward(shift))
        z2.append(zz)
        v_next.append(v + lam * (zz - p))

    if not (np.all(np.isfinite(x_next)) and all(np.all(np.isfinite(v)) for v in v_next)):
        raise DivergenceError(f"non-finite iterate at n={state.n}")
    new_state = PDState(x, x_next, tuple(state.v_cur), tuple(v_next), state.n + 1)
    return new_state, PDIterates(p1, w1, tuple(p2), tuple(w2), z1, tuple(z2))


def pd_solve(problem: PrimalDualProblem, steps: StepSizes | None = None,
             sched: InertialSchedule | None = None, stop: StopRule | None = None,
             x0=None, v0=None, record_objective: bool = False,
             time_limit: float | None = None) -> PDResult:
    """Run :func:`pd_step` until ``stop`` fires.

    Stop rules act on the primal estimate ``p_1``: ``residual`` uses
    ``||(p1 - z1, p2_i - z2_i)||``, ``rmse`` the distance of ``p1`` to the
    reference and ``step`` the change of the governing pair ``(x, v)``.
    With ``time_limit`` (seconds) the loop also ends, unconverged, once the
    wall clock runs out.
    """
    steps = steps or default_stepsizes(problem)
    sched = sched or constant_schedule(0.0, relaxation=2.0)
    stop = stop or StopRule.residual()
    if stop.kind == "rmse" and stop.reference.size != problem.dim:
        raise ValueError("rmse reference has the wrong dimension")
    state = PDState.initial(problem, x0, v0)
    trace = PDTrace()
    converged = stop.kind == "max_iter"
    it = None
    t0 = time.perf_counter()
    for _ in range(stop.max_iter):
        old = state
        state, it = pd_step(problem, old, steps, sched)
        dx = state.x_cur - old.x_cur
        step_sq = float(dx @ dx) + sum(float((v1 - v0) @ (v1 - v0))
                                       for v1, v0 in zip(state.v_cur, old.v_cur))
        res_sq = float((it.p1 - it.z1) @ (it.p1 - it.z1)) + sum(
            float((p - zz) @ (p - zz)) for p, zz in zip(it.p2, it.z2))
        trace.step_sq.append(step_sq)
        trace.fp_residual.append(math.sqrt(res_sq))
        if record_objective and problem.objective is not None:
            trace.objective.append(float(problem.objective(it.p1)))
        if stop.kind == "rmse":
            d = it.p1 - stop.reference
            err = math.sqrt(float(d @ d) / d.size)
            trace.rmse.append(err)
            if err <= stop.eps:
                converged = True
                break
        elif stop.done(trace):
            converged = True
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
    sol = PDSolution(state.x_cur, state.v_cur, it.p1, it.p2)
    return PDResult(sol, trace, converged, len(trace), state)


def recover_solution(problem: PrimalDualProblem, xbar, vbar, steps: StepSizes) -> PDSolution:
    """Primal-dual pair ``(p1, p2)`` generated by a limit ``(xbar, vbar)`` of the sweep."""
    xbar = as_vector(xbar, problem.dim, name="xbar")
    vbar = tuple(as_vector(v, d, name="vbar") for v, d in zip(vbar, problem.dual_dims))
    tau = steps.tau
    acc = np.zeros(problem.dim)
    for b, v in zip(problem.blocks, vbar):
        acc = acc + b.L.adjoint(v)
    p1 = problem.f.prox_fn(tau, xbar - (0.5 * tau) * acc + tau * problem.z)
    p2 = tuple(gc.prox_fn(s, v + (0.5 * s) * b.L.forward(2.0 * p1 - xbar) - s * b.r)
               for b, gc, s, v in zip(problem.blocks, problem.g_conj, steps.sigmas, vbar))
    return PDSolution(xbar, vbar, p1, p2)


def optimality_residual(problem: PrimalDualProblem, candidate: PDSolution,
                        steps: StepSizes) -> float:
    """Distance of ``candidate`` from the fixed-point characterization of a solution.

    Returns the largest of

    * ``||p1 - prox_{tau f}(xbar - tau/2 sum L_i* vbar_i + tau z)||`` and the
      matching dual terms for ``p2_i``;
    * the defect ``||z1 - p1||``, ``||z2_i - p2_i||`` of one non-inertial
      sweep started at ``(xbar, vbar)``, which vanishes exactly when
      ``(xbar, vbar)`` is a fixed point.

    It is zero at exact solutions.
    """
    ref = recover_solution(problem, candidate.xbar, candidate.vbar, steps)
    terms = [np.linalg.norm(as_vector(candidate.p1, problem.dim) - ref.p1)]
    terms += [np.linalg.norm(as_vector(p, d) - q)
              for p, q, d in zip(candidate.p2, ref.p2, problem.dual_dims)]
    state = PDState(ref.xbar, ref.xbar, ref.vbar, ref.vbar, 2)
    probe = constant_schedule(0.0, lam=1.0, relaxation=2.0)
    _, it = pd_step(problem, state, steps, probe)
    terms.append(np.linalg.norm(it.z1 - it.p1))
    terms += [np.linalg.norm(zz - p) for zz, p in zip(it.z2, it.p2)]
    return float(max(terms))


@dataclass(frozen=True)
class MetricOperator:
    """``V(x, v_1..v_m) = (x/tau - 1/2 sum L_i* v_i, v_i/sigma_i - 1/2 L_i x)``.

    Self-adjoint and ``rho``-strongly positive under the step-size condition.
    Used for diagnostics and tests; the solver never forms or inverts it.
    """

    problem: PrimalDualProblem = field(repr=False)
    steps: StepSizes

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.problem.dim,) + self.problem.dual_dims

    @property
    def rho(self) -> float:
        return self.steps.rho

    def __call__(self, w: BlockVector) -> BlockVector:
        if w.shape != self.shape:
            raise ValueError(f"expected block shape {self.shape}, got {w.shape}")
        x, vs = w[0], w.blocks[1:]
        acc = np.zeros_like(x)
        for b, v in zip(self.problem.blocks, vs):
            acc = acc + b.L.adjoint(v)
        head = x / self.steps.tau - 0.5 * acc
        tail = [v / s - 0.5 * b.L.forward(x)
                for b, s, v in zip(self.problem.blocks, self.steps.sigmas, vs)]
        return BlockVector([head, *tail])

    def to_dense(self) -> np.ndarray:
        shape = self.shape
        total = sum(shape)
        cols = [self(BlockVector.from_flat(e, shape)).flatten() for e in np.eye(total)]
        return np.column_stack(cols)


def metric_operator(problem: PrimalDualProblem, steps: StepSizes) -> MetricOperator:
    return MetricOperator(problem, steps)
