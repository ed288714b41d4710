"""Inertial Krasnosel'skii-Mann iteration for nonexpansive maps.

The scheme is

    w_n     = x_n + a_n (x_n - x_{n-1})
    x_{n+1} = w_n + l_n (T w_n - w_n)

with a nondecreasing inertial sequence ``a_n`` (``a_1 = 0``, ``a_n <= alpha``)
and relaxations ``l_n`` kept inside the admissible region determined by
``(alpha, sigma, delta)``. :class:`InertialSchedule` owns those rules and
checks them at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .vecspace import as_vector

__all__ = [
    "ScheduleError",
    "DivergenceError",
    "delta_threshold",
    "validate_schedule",
    "best_delta",
    "InertialSchedule",
    "constant_schedule",
    "StopRule",
    "KMState",
    "ResidualTrace",
    "KMResult",
    "km_step",
    "km_solve",
    "lyapunov_values",
    "step_sum_bound",
]


class ScheduleError(ValueError):
    """Inertial/relaxation parameters outside the admissible region."""


class DivergenceError(ArithmeticError):
    """An iterate or operator output became non-finite."""


def delta_threshold(alpha: float, sigma: float) -> float:
    """Smallest (excluded) admissible ``delta`` for the given ``alpha, sigma``."""
    return (alpha * alpha * (1.0 + alpha) + alpha * sigma) / (1.0 - alpha * alpha)


def _lambda_formula(alpha: float, sigma: float, delta: float) -> float:
    c = alpha * (1.0 + alpha) + alpha * delta + sigma
    return (delta - alpha * c) / (delta * (1.0 + c))


def validate_schedule(alpha: float, sigma: float, delta: float) -> float:
    """Check ``(alpha, sigma, delta)`` and return the relaxation bound ``lambda_max``.

    Raises
    ------
    ScheduleError
        If ``alpha`` is outside ``[0, 1)``, ``sigma`` or ``delta`` is not
        positive, or ``delta`` does not exceed :func:`delta_threshold`. The
        message names the minimal admissible ``delta``.
    """
    for name, v in (("alpha", alpha), ("sigma", sigma), ("delta", delta)):
        if not math.isfinite(v):
            raise ScheduleError(f"{name} must be finite, got {v}")
    if not 0.0 <= alpha < 1.0:
        raise ScheduleError(f"alpha must lie in [0, 1), got {alpha}")
    if sigma <= 0:
        raise ScheduleError(f"sigma must be positive, got {sigma}")
    if delta <= 0:
        raise ScheduleError(f"delta must be positive, got {delta}")
    thr = delta_threshold(alpha, sigma)
    if not delta > thr:
        raise ScheduleError(
            f"delta={delta} violates delta > (alpha^2(1+alpha) + alpha*sigma)/(1-alpha^2) = {thr}; "
            f"choose delta > {thr}")
    lam = _lambda_formula(alpha, sigma, delta)
    if not 0.0 < lam < 1.0:  # guarded by the delta condition; kept as a hard check
        raise ScheduleError(f"lambda_max={lam} outside (0, 1)")
    return lam


def best_delta(alpha: float, sigma: float) -> float:
    """The ``delta`` that maximizes ``lambda_max`` for fixed ``alpha, sigma``.

    ``lambda_max(delta)`` vanishes at the threshold and decays like
    ``1/delta``; setting its derivative to zero gives a quadratic in
    ``delta`` whose positive root is returned. For ``alpha = 0`` the bound
    does not depend on ``delta`` and 1 is returned.
    """
    if alpha == 0.0:
        return 1.0
    # positive root of a q d^2 - 2 b q d - b p = 0 with q = alpha, divided through by q
    a = 1.0 - alpha * alpha
    c = alpha * (1.0 + alpha) + sigma
    b = alpha * c
    p = 1.0 + c
    return (b + math.sqrt(b * b + a * p * c)) / a


@dataclass(frozen=True)
class InertialSchedule:
    """Inertial and relaxation sequences with their admissibility bounds.

    Parameters
    ----------
    alpha : float
        Upper bound on the inertial coefficients, in ``[0, 1)``.
    sigma, delta : float
        Positive auxiliary constants defining the relaxation bound.
    alpha_rule : callable
        ``n -> a_n`` for ``n >= 1``; nondecreasing, ``a_1 = 0``, ``a_n <= alpha``.
    lambda_rule : callable
        ``n -> l_n``; must stay in ``[lambda_lo, relaxation * lambda_max]``.
    lambda_lo : float
        Positive lower bound on the relaxations.
    relaxation : float
        1 for the plain fixed-point iteration, 2 for Douglas-Rachford type
        schemes, whose relaxation is twice the one handed to the
        underlying fixed-point iteration.
    """

    alpha: float
    sigma: float
    delta: float
    alpha_rule: Callable[[int], float] = field(repr=False)
    lambda_rule: Callable[[int], float] = field(repr=False)
    lambda_lo: float = 0.0
    relaxation: float = 1.0
    lambda_max: float = field(init=False)

    def __post_init__(self):
        lam = validate_schedule(self.alpha, self.sigma, self.delta)
        object.__setattr__(self, "lambda_max", lam)
        if self.relaxation not in (1.0, 2.0):
            raise ScheduleError("relaxation must be 1 (fixed-point) or 2 (Douglas-Rachford)")
        if not 0.0 < self.lambda_lo <= self.lambda_upper:
            raise ScheduleError(
                f"lambda_lo={self.lambda_lo} must lie in (0, {self.lambda_upper}]")

    @property
    def lambda_upper(self) -> float:
        return self.relaxation * self.lambda_max

    def coefficients(self, n: int) -> tuple[float, float]:
        """Return ``(a_n, l_n)`` after checking them against the bounds."""
        a = float(self.alpha_rule(n))
        lam = float(self.lambda_rule(n))
        if n == 1 and a != 0.0:
            raise ScheduleError(f"the first inertial coefficient must be 0, got {a}")
        if not 0.0 <= a <= self.alpha:
            raise ScheduleError(f"a_{n}={a} outside [0, {self.alpha}]")
        if n > 1 and a < float(self.alpha_rule(n - 1)):
            raise ScheduleError(f"inertial sequence decreases at n={n}")
        if not self.lambda_lo <= lam <= self.lambda_upper * (1.0 + 1e-12):
            raise ScheduleError(
                f"l_{n}={lam} outside [{self.lambda_lo}, {self.lambda_upper}]")
        return a, lam


def constant_schedule(alpha: float = 0.0, sigma: float = 1e-6, delta: float | None = None,
                      lam: float | None = None, relaxation: float = 1.0) -> InertialSchedule:
    """Constant ``a_n = alpha`` for ``n >= 2`` (``a_1 = 0``) and constant ``l_n``.

    ``delta`` defaults to :func:`best_delta`. ``lam`` defaults to
    ``lambda_max`` for the fixed-point iteration. Douglas-Rachford type
    schemes (``relaxation=2``) admit ``lam`` up to ``2 lambda_max``; there
    the default is the plain Douglas-Rachford step ``lam = 1`` whenever it
    is admissible, else just below the bound. Values near 2 approach the
    Peaceman-Rachford scheme, which stalls without strong monotonicity.
    """
    alpha, sigma = float(alpha), float(sigma)
    if delta is None:
        delta = best_delta(alpha, sigma) if 0.0 <= alpha < 1.0 else 1.0
    lam_max = validate_schedule(alpha, sigma, float(delta))
    if lam is None:
        lam = lam_max if relaxation == 1.0 else min(1.0, relaxation * lam_max * (1.0 - 1e-9))
    lam = float(lam)

    def alpha_rule(n, _a=alpha):
        return 0.0 if n <= 1 else _a

    return InertialSchedule(alpha, sigma, float(delta), alpha_rule, lambda n, _l=lam: _l,
                            lambda_lo=lam, relaxation=relaxation)


@dataclass(frozen=True)
class StopRule:
    """When to stop an iteration.

    ``kind`` is ``"residual"`` (fixed-point residual <= eps), ``"rmse"``
    (root-mean-square distance to ``reference`` <= eps), ``"step"``
    (``||x_{n+1} - x_n|| <= eps``) or ``"max_iter"``.
    ``max_iter`` always applies as a hard cap.
    """

    kind: str = "residual"
    eps: float = 1e-8
    max_iter: int = 1_000_000
    reference: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("residual", "rmse", "step", "max_iter"):
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.kind == "rmse" and self.reference is None:
            raise ValueError("rmse stop rule needs a reference")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def done(self, trace: "ResidualTrace") -> bool:
        """Residual/step test on the latest trace entry (rmse is handled by the solvers)."""
        if self.kind == "residual":
            return trace.fp_residual[-1] <= self.eps
        if self.kind == "step":
            return trace.step_sq[-1] <= self.eps * self.eps
        return False

    @classmethod
    def residual(cls, eps: float = 1e-8, max_iter: int = 1_000_000) -> "StopRule":
        return cls("residual", eps, max_iter)

    @classmethod
    def rmse(cls, reference, eps: float, max_iter: int = 1_000_000) -> "StopRule":
        return cls("rmse", eps, max_iter, as_vector(reference, name="reference"))

    @classmethod
    def step(cls, eps: float, max_iter: int = 1_000_000) -> "StopRule":
        return cls("step", eps, max_iter)

    @classmethod
    def iterations(cls, n: int) -> "StopRule":
        return cls("max_iter", 0.0, n)


@dataclass(frozen=True)
class KMState:
    x_prev: np.ndarray
    x_cur: np.ndarray
    n: int = 1

    def __post_init__(self):
        if self.x_prev.shape != self.x_cur.shape:
            raise ValueError("x_prev and x_cur must have the same dimension")
        if self.n < 1:
            raise ValueError("iteration counter starts at 1")


@dataclass
class ResidualTrace:
    """Per-iteration diagnostics: ``||x_{n+1} - x_n||^2``, residuals and RMSE."""

    step_sq: list = field(default_factory=list)
    fp_residual: list = field(default_factory=list)
    rmse: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.step_sq)


@dataclass
class KMResult:
    x: np.ndarray
    trace: ResidualTrace
    converged: bool
    iterations: int
    state: KMState


def km_step(T: Callable[[np.ndarray], np.ndarray], state: KMState, sched: InertialSchedule,
            trace: ResidualTrace | None = None) -> KMState:
    """Advance the inertial fixed-point iteration by one step.

    ``T`` must be nonexpansive on an affine subspace containing the
    iterates; that is the caller's contract. The relaxation used is
    ``l_n / sched.relaxation``, so a Douglas-Rachford schedule drives the
    iteration with half its nominal relaxation.
    """
    a, lam = sched.coefficients(state.n)
    lam = lam / sched.relaxation
    x, xp = state.x_cur, state.x_prev
    w = x + a * (x - xp)
    tw = np.asarray(T(w), dtype=np.float64)
    if not np.all(np.isfinite(tw)):
        raise DivergenceError(f"operator returned non-finite values at n={state.n}")
    r = tw - w
    x_next = w + lam * r
    if trace is not None:
        d = x_next - x
        trace.step_sq.append(float(d @ d))
        trace.fp_residual.append(float(np.linalg.norm(r)))
    return KMState(x, x_next, state.n + 1)


def km_solve(T: Callable[[np.ndarray], np.ndarray], x0, x1=None,
             sched: InertialSchedule | None = None, stop: StopRule | None = None) -> KMResult:
    """Run :func:`km_step` from ``(x0, x1)`` until ``stop`` fires.

    ``x1`` defaults to ``x0``. With the default residual rule the iteration
    stops once ``||T w_n - w_n|| <= eps``; if ``max_iter`` is reached first the
    result is returned with ``converged=False``.
    """
    x0 = as_vector(x0, name="x0")
    x1 = x0.copy() if x1 is None else as_vector(x1, x0.size, name="x1")
    sched = sched or constant_schedule()
    stop = stop or StopRule.residual()
    state = KMState(x0, x1, 1)
    trace = ResidualTrace()
    converged = False
    for _ in range(stop.max_iter):
        state = km_step(T, state, sched, trace)
        if stop.kind == "rmse":
            err = _rmse(state.x_cur, stop.reference)
            trace.rmse.append(err)
            if err <= stop.eps:
                converged = True
                break
        elif stop.done(trace):
            converged = True
            break
    if stop.kind == "max_iter":
        converged = True
    return KMResult(state.x_cur, trace, converged, len(trace), state)


def _rmse(x, ref):
    d = x - ref
    return float(np.sqrt(d @ d / d.size))


def lyapunov_values(x_prev, x_cur, x_next, y, sched: InertialSchedule, n: int) -> tuple[float, float]:
    """Return ``(mu_n, mu_{n+1})`` for the energy used in the convergence proof.

    ``mu_n = phi_n - a_n phi_{n-1} + g_n ||x_n - x_{n-1}||^2`` with
    ``phi_n = ||x_n - y||^2`` and ``g_n = a_n (1 + a_n) + a_n (1 - l_n) delta``,
    where ``l_n`` is the fixed-point relaxation. For admissible schedules and
    ``y`` a fixed point, ``mu_{n+1} - mu_n <= -sigma ||x_{n+1} - x_n||^2``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x_prev, x_cur, x_next, y = (as_vector(v, name=nm) for v, nm in
                                ((x_prev, "x_prev"), (x_cur, "x_cur"), (x_next, "x_next"), (y, "y")))
    if not (x_prev.shape == x_cur.shape == x_next.shape == y.shape):
        raise ValueError("dimension mismatch")

    def coeff(k):
        a, lam = sched.coefficients(k)
        lam = lam / sched.relaxation
        return a, a * (1.0 + a) + a * (1.0 - lam) * sched.delta

    def sq(v):
        return float(v @ v)

    phi_prev, phi_cur, phi_next = sq(x_prev - y), sq(x_cur - y), sq(x_next - y)
    a_n, g_n = coeff(n)
    a_n1, g_n1 = coeff(n + 1)
    mu_n = phi_cur - a_n * phi_prev + g_n * sq(x_cur - x_prev)
    mu_n1 = phi_next - a_n1 * phi_cur + g_n1 * sq(x_next - x_cur)
    return mu_n, mu_n1


def step_sum_bound(phi0: float, mu1: float, alpha: float, sigma: float, n: int) -> float:
    """Upper bound on ``sum_{k=1..n} ||x_{k+1} - x_k||^2`` from the descent argument."""
    return (alpha ** (n + 1) * phi0 + mu1 / (1.0 - alpha)) / sigma
