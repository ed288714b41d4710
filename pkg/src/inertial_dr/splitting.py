"""Inertial Douglas-Rachford splitting for ``0 in A x + B x``.

Each step reads

    w_n     = x_n + a_n (x_n - x_{n-1})
    y_n     = J_{gB}(w_n)
    z_n     = J_{gA}(2 y_n - w_n)
    x_{n+1} = w_n + l_n (z_n - y_n)

which is the inertial fixed-point iteration applied to ``R_{gA} o R_{gB}``
with relaxation ``l_n / 2``. The shadow point ``J_{gB}(x)`` of the limit
``x`` solves the inclusion; the governing sequence itself does not.

Operators are passed either as :class:`~inertial_dr.prox.Proximable`
(``A = subdifferential of f``, resolvent ``prox_{g f}``) or as plain
callables that already implement ``J_{gA}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .fixpoint import (DivergenceError, InertialSchedule, KMState, ResidualTrace,
                       ScheduleError, StopRule, constant_schedule)
from .prox import Proximable, zero_function
from .vecspace import as_vector

__all__ = [
    "DRConfig",
    "DRIterates",
    "DRResult",
    "dr_step",
    "dr_solve",
    "classical_dr",
    "inertial_proximal_point",
    "reflected_composition",
    "strong_convergence_check",
]

Operator = Union[Proximable, Callable[[np.ndarray], np.ndarray]]


def _resolvent(op: Operator, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(op, Proximable):
        return lambda x: op.prox_fn(gamma, x)
    if callable(op):
        return op
    raise TypeError(f"expected a Proximable or a resolvent callable, got {type(op).__name__}")


@dataclass(frozen=True)
class DRConfig:
    """Resolvent step ``gamma`` and a Douglas-Rachford schedule (relaxation 2)."""

    gamma: float = 1.0
    sched: InertialSchedule = field(default_factory=lambda: constant_schedule(0.0, relaxation=2.0))

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.sched.relaxation != 2.0:
            raise ScheduleError("Douglas-Rachford needs a schedule built with relaxation=2")


@dataclass(frozen=True)
class DRIterates:
    x: np.ndarray   # next governing point x_{n+1}
    y: np.ndarray   # shadow point J_{gB}(w_n)
    z: np.ndarray   # J_{gA}(2 y_n - w_n)


@dataclass
class DRResult:
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    trace: ResidualTrace
    converged: bool
    iterations: int
    state: KMState


def dr_step(A: Operator, B: Operator, state: KMState, cfg: DRConfig,
            trace: ResidualTrace | None = None) -> tuple[KMState, DRIterates]:
    """One inertial Douglas-Rachford sweep. ``trace`` records ``||z - y||``."""
    a, lam = cfg.sched.coefficients(state.n)
    JA, JB = _resolvent(A, cfg.gamma), _resolvent(B, cfg.gamma)
    x, xp = state.x_cur, state.x_prev
    w = x + a * (x - xp)
    y = np.asarray(JB(w), dtype=np.float64)
    z = np.asarray(JA(2.0 * y - w), dtype=np.float64)
    x_next = w + lam * (z - y)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(f"non-finite iterate at n={state.n}")
    if trace is not None:
        d = x_next - x
        trace.step_sq.append(float(d @ d))
        trace.fp_residual.append(float(np.linalg.norm(z - y)))
    return KMState(x, x_next, state.n + 1), DRIterates(x_next, y, z)


def dr_solve(A: Operator, B: Operator, x0, x1=None, cfg: DRConfig | None = None,
             stop: StopRule | None = None) -> DRResult:
    """Iterate :func:`dr_step` until ``stop`` fires.

    The ``residual`` rule stops on ``||z_n - y_n|| <= eps``; the ``rmse`` rule
    compares the shadow point ``y_n`` with the reference. The returned ``y``
    is ``J_{gB}`` of the final governing point.
    """
    cfg = cfg or DRConfig()
    stop = stop or StopRule.residual()
    x0 = as_vector(x0, name="x0")
    x1 = x0.copy() if x1 is None else as_vector(x1, x0.size, name="x1")
    state = KMState(x0, x1, 1)
    trace = ResidualTrace()
    converged = stop.kind == "max_iter"
    it = None
    for _ in range(stop.max_iter):
        state, it = dr_step(A, B, state, cfg, trace)
        if stop.kind == "rmse":
            d = it.y - stop.reference
            err = float(np.sqrt(d @ d / d.size))
            trace.rmse.append(err)
            if err <= stop.eps:
                converged = True
                break
        elif stop.done(trace):
            converged = True
            break
    y = np.asarray(_resolvent(B, cfg.gamma)(state.x_cur), dtype=np.float64)
    return DRResult(y, state.x_cur, it.z, trace, converged, len(trace), state)


def classical_dr(A: Operator, B: Operator, x0, gamma: float = 1.0, lam: float | None = None,
                 stop: StopRule | None = None) -> DRResult:
    """Non-inertial Douglas-Rachford: :func:`dr_solve` with every ``a_n = 0``."""
    cfg = DRConfig(gamma, constant_schedule(0.0, lam=lam, relaxation=2.0))
    return dr_solve(A, B, x0, None, cfg, stop)


def inertial_proximal_point(A: Operator, x0, cfg: DRConfig | None = None,
                            stop: StopRule | None = None) -> DRResult:
    """Inertial proximal-point method for ``0 in A x``.

    This is Douglas-Rachford with ``B = 0``, i.e.
    ``x_{n+1} = l_n J_{gA}(w_n) + (1 - l_n) w_n``.
    """
    return dr_solve(A, zero_function(), x0, None, cfg, stop)


def reflected_composition(A: Operator, B: Operator, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """``R_{gA} o R_{gB}``, the nonexpansive map whose fixed points DR tracks."""
    JA, JB = _resolvent(A, gamma), _resolvent(B, gamma)

    def T(x):
        rb = 2.0 * np.asarray(JB(x), dtype=np.float64) - x
        return 2.0 * np.asarray(JA(rb), dtype=np.float64) - rb

    return T


def strong_convergence_check(result: DRResult, expected, tol: float) -> bool:
    """True iff both the shadow point and the last ``z`` are within ``tol`` of ``expected``."""
    expected = as_vector(expected, name="expected")
    return bool(np.linalg.norm(result.y - expected) <= tol
                and np.linalg.norm(result.z - expected) <= tol)
