"""Proximal operators, projections, resolvents and a little prox calculus.

A :class:`Proximable` bundles ``prox(gamma, x)`` (the minimizer of
``f(y) + ||y - x||^2 / (2 gamma)``) with an optional evaluation of ``f``.
The step ``gamma`` is always a call argument, never baked in, because the
primal-dual sweep uses a different step per block.

Where the convex conjugate has its own closed-form prox it is attached to
the function and returned by :attr:`Proximable.conjugate`; otherwise the
conjugate falls back to Moreau's decomposition (:func:`moreau_conjugate`).
Keeping both routes lets the test-suite check one against the other.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .vecspace import as_vector

__all__ = [
    "Proximable",
    "ReflectedResolvent",
    "zero_function",
    "indicator_zero",
    "sq_dist",
    "half_sq_norm",
    "norm2",
    "norm1",
    "box",
    "ball",
    "group_norm",
    "separable_sum",
    "translate",
    "moreau_conjugate",
    "resolvent",
    "reflected",
]

ProxFn = Callable[[float, np.ndarray], np.ndarray]
EvalFn = Callable[[np.ndarray], float]

# slack used when evaluating indicator functions at projected points
_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class Proximable:
    """A convex function accessed through its proximal operator.

    Parameters
    ----------
    prox_fn : callable
        ``(gamma, x) -> prox_{gamma f}(x)``; receives a validated array.
    eval_fn : callable, optional
        ``x -> f(x)``, may return ``inf``.
    conj : callable, optional
        Zero-argument factory for the conjugate ``f*`` in closed form.
    conj_eval : callable, optional
        ``y -> f*(y)``, used when the conjugate is obtained through Moreau.
    name : str
        Label used in reprs and error messages.
    """

    prox_fn: ProxFn = field(repr=False)
    eval_fn: EvalFn | None = field(default=None, repr=False)
    conj: Callable[[], "Proximable"] | None = field(default=None, repr=False)
    conj_eval: EvalFn | None = field(default=None, repr=False)
    name: str = "f"

    def prox(self, gamma: float, x) -> np.ndarray:
        if not gamma > 0:
            raise ValueError(f"prox step must be positive, got {gamma}")
        return self.prox_fn(float(gamma), as_vector(x))

    def __call__(self, x) -> float:
        if self.eval_fn is None:
            raise NotImplementedError(f"{self.name} has no evaluation")
        return float(self.eval_fn(as_vector(x)))

    @property
    def has_eval(self) -> bool:
        return self.eval_fn is not None

    @property
    def has_closed_conjugate(self) -> bool:
        return self.conj is not None

    @property
    def conjugate(self) -> "Proximable":
        if self.conj is not None:
            return self.conj()
        return moreau_conjugate(self)


def moreau_conjugate(base: Proximable) -> Proximable:
    """Conjugate of ``base`` via ``prox_{g f*}(x) = x - g prox_{f/g}(x/g)``."""

    def prox_fn(gamma, x):
        return x - gamma * base.prox_fn(1.0 / gamma, x / gamma)

    def back():
        return base

    return Proximable(prox_fn, eval_fn=base.conj_eval, conj=back,
                      conj_eval=base.eval_fn, name=f"({base.name})*")


def _indicator(inside: Callable[[np.ndarray], bool]) -> EvalFn:
    return lambda x: 0.0 if inside(x) else np.inf


def zero_function() -> Proximable:
    """``f = 0``; prox is the identity and ``f*`` is the indicator of ``{0}``."""
    return Proximable(lambda g, x: x.copy(), lambda x: 0.0, conj=indicator_zero, name="0")


def indicator_zero() -> Proximable:
    """Indicator of the origin; prox is the constant-zero map and ``f* = 0``."""
    return Proximable(lambda g, x: np.zeros_like(x),
                      _indicator(lambda x: bool(np.all(np.abs(x) <= _FEAS_TOL))),
                      conj=zero_function, name="delta_0")


def sq_dist(u) -> Proximable:
    """``f(y) = 0.5 ||y - u||^2``; prox is ``(x + gamma u) / (1 + gamma)``."""
    u = as_vector(u, name="u")

    def prox_fn(gamma, x):
        _check_dim(x, u.size)
        return (x + gamma * u) / (1.0 + gamma)

    def conj():
        # f*(y) = 0.5 ||y||^2 + <y, u>
        def cprox(gamma, x):
            _check_dim(x, u.size)
            return (x - gamma * u) / (1.0 + gamma)

        return Proximable(cprox, lambda y: 0.5 * float(y @ y) + float(y @ u),
                          conj=lambda: sq_dist(u), name="sq_dist*")

    return Proximable(prox_fn, lambda y: 0.5 * float((y - u) @ (y - u)), conj=conj,
                      name="sq_dist")


def half_sq_norm() -> Proximable:
    """``f(y) = 0.5 ||y||^2``, which is its own conjugate."""
    return Proximable(lambda g, x: x / (1.0 + g), lambda y: 0.5 * float(y @ y),
                      conj=half_sq_norm, name="half_sq_norm")


def norm2(w: float = 1.0) -> Proximable:
    """``f = w ||.||_2``; prox is block soft-thresholding at ``gamma w``.

    The conjugate is the indicator of the closed Euclidean ball of radius ``w``.
    """
    w = _positive(w, "w")

    def prox_fn(gamma, x):
        nx = np.linalg.norm(x)
        t = gamma * w
        if nx <= t:
            return np.zeros_like(x)
        return (1.0 - t / nx) * x

    def conj():
        return Proximable(lambda g, x: _proj_ball(x, 0.0, w),
                          _indicator(lambda y: np.linalg.norm(y) <= w * (1 + _FEAS_TOL)),
                          conj=lambda: norm2(w), name=f"ball(0,{w})")

    return Proximable(prox_fn, lambda y: w * float(np.linalg.norm(y)), conj=conj,
                      name=f"{w}*norm2")


def norm1(w: float = 1.0) -> Proximable:
    """``f = w ||.||_1``; prox is componentwise soft-thresholding at ``gamma w``."""
    w = _positive(w, "w")

    def prox_fn(gamma, x):
        return np.sign(x) * np.maximum(np.abs(x) - gamma * w, 0.0)

    def conj():
        return Proximable(lambda g, x: np.clip(x, -w, w),
                          _indicator(lambda y: np.max(np.abs(y)) <= w * (1 + _FEAS_TOL)),
                          conj=lambda: norm1(w), name=f"linf_ball({w})")

    return Proximable(prox_fn, lambda y: w * float(np.abs(y).sum()), conj=conj,
                      name=f"{w}*norm1")


def box(lo, hi) -> Proximable:
    """Indicator of the box ``[lo, hi]``; prox is the componentwise clamp.

    The conjugate (support function of the box) is reached through Moreau.
    """
    lo, hi = as_vector(lo, name="lo"), as_vector(hi, name="hi")
    if lo.shape != hi.shape:
        raise ValueError("lo and hi must have the same dimension")
    if np.any(lo > hi):
        raise ValueError("box requires lo <= hi componentwise")
    slack = _FEAS_TOL * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))

    def prox_fn(gamma, x):
        _check_dim(x, lo.size)
        return np.minimum(np.maximum(x, lo), hi)

    def inside(x):
        _check_dim(x, lo.size)
        return bool(np.all(x >= lo - slack) and np.all(x <= hi + slack))

    def support(y):
        return float(np.maximum(lo * y, hi * y).sum())

    return Proximable(prox_fn, _indicator(inside), conj_eval=support, name="box")


def _proj_ball(x, center, radius):
    d = x - center
    nd = np.linalg.norm(d)
    if nd <= radius:
        return x.copy()
    return center + (radius / nd) * d


def ball(center, radius: float = 1.0) -> Proximable:
    """Indicator of the closed ball ``B(center, radius)``; prox is the projection.

    The conjugate is the support function ``<center, y> + radius ||y||``, whose
    prox is soft-thresholding of ``x - gamma center``.
    """
    center = as_vector(center, name="center")
    radius = _positive(radius, "radius")

    def prox_fn(gamma, x):
        _check_dim(x, center.size)
        return _proj_ball(x, center, radius)

    def inside(x):
        return np.linalg.norm(x - center) <= radius * (1 + _FEAS_TOL)

    def support(y):
        return float(center @ y) + radius * float(np.linalg.norm(y))

    def conj():
        shrink = norm2(radius)

        def cprox(gamma, x):
            _check_dim(x, center.size)
            return shrink.prox_fn(gamma, x - gamma * center)

        return Proximable(cprox, support, conj=lambda: ball(center, radius),
                          conj_eval=_indicator(inside), name="support(ball)")

    return Proximable(prox_fn, _indicator(inside), conj=conj, conj_eval=support, name="ball")


def group_norm(weights, group_size: int, p: int = 2) -> Proximable:
    """Weighted sum of group norms ``sum_e w_e ||x_e||_p`` over consecutive groups.

    ``x`` is read as ``len(weights)`` consecutive groups of ``group_size``
    entries. Supports ``p`` in ``{1, 2}``; the conjugate is the indicator of
    the product of dual-norm balls of radii ``w_e``.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be a non-empty array of finite nonnegative values")
    if p not in (1, 2):
        raise ValueError("group_norm supports p in {1, 2}")
    k, n = w.size, int(group_size)
    dim = k * n
    wcol = w[:, None]

    def rows(x):
        _check_dim(x, dim)
        return x.reshape(k, n)

    if p == 2:
        def prox_fn(gamma, x):
            X = rows(x)
            nrm = np.linalg.norm(X, axis=1, keepdims=True)
            scale = np.maximum(1.0 - gamma * wcol / np.where(nrm > 0, nrm, 1.0), 0.0)
            return (scale * X).ravel()

        def ev(x):
            return float(w @ np.linalg.norm(rows(x), axis=1))

        def cprox(gamma, x):
            X = rows(x)
            nrm = np.linalg.norm(X, axis=1, keepdims=True)
            scale = np.where(nrm > wcol, wcol / np.where(nrm > 0, nrm, 1.0), 1.0)
            return (scale * X).ravel()

        def cinside(y):
            return bool(np.all(np.linalg.norm(rows(y), axis=1) <= w * (1 + _FEAS_TOL) + 1e-300))
    else:
        def prox_fn(gamma, x):
            X = rows(x)
            return (np.sign(X) * np.maximum(np.abs(X) - gamma * wcol, 0.0)).ravel()

        def ev(x):
            return float(w @ np.abs(rows(x)).sum(axis=1))

        def cprox(gamma, x):
            X = rows(x)
            return np.clip(X, -wcol, wcol).ravel()

        def cinside(y):
            return bool(np.all(np.abs(rows(y)) <= wcol * (1 + _FEAS_TOL) + 1e-300))

    def conj():
        return Proximable(lambda g, x: cprox(g, x), _indicator(cinside),
                          conj=lambda: group_norm(w, n, p), name=f"group_ball_l{p}")

    return Proximable(prox_fn, ev, conj=conj, name=f"group_norm_l{p}")


def separable_sum(parts: Sequence[Proximable], sizes: Sequence[int]) -> Proximable:
    """``f(x) = sum_k f_k(x_k)`` over consecutive slices of the given sizes."""
    parts, sizes = list(parts), [int(s) for s in sizes]
    if len(parts) != len(sizes) or not parts:
        raise ValueError("need one size per part")
    cuts = np.cumsum(sizes)[:-1]
    dim = sum(sizes)

    def split(x):
        _check_dim(x, dim)
        return np.split(x, cuts)

    def prox_fn(gamma, x):
        return np.concatenate([f.prox_fn(gamma, xi) for f, xi in zip(parts, split(x))])

    ev = None
    if all(f.has_eval for f in parts):
        def ev(x):
            return float(sum(f.eval_fn(xi) for f, xi in zip(parts, split(x))))

    def conj():
        return separable_sum([f.conjugate for f in parts], sizes)

    return Proximable(prox_fn, ev, conj=conj, name="separable_sum")


def translate(base: Proximable, r) -> Proximable:
    """``y -> base(y - r)``; prox is ``r + base.prox(gamma, x - r)``."""
    r = as_vector(r, name="r")

    def prox_fn(gamma, x):
        _check_dim(x, r.size)
        return r + base.prox_fn(gamma, x - r)

    ev = None if base.eval_fn is None else (lambda y: base.eval_fn(y - r))

    def conj():
        # (base(. - r))* = base* + <., r>
        bc = base.conjugate

        def cprox(gamma, x):
            _check_dim(x, r.size)
            return bc.prox_fn(gamma, x - gamma * r)

        cev = None if bc.eval_fn is None else (lambda y: bc.eval_fn(y) + float(y @ r))
        return Proximable(cprox, cev, conj=lambda: translate(base, r), name=f"({base.name}-r)*")

    return Proximable(prox_fn, ev, conj=conj, name=f"{base.name}(.-r)")


def resolvent(base: Proximable, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """``J_{gamma A}`` for ``A = subdifferential of base``, i.e. ``prox_{gamma base}``."""
    gamma = _positive(gamma, "gamma")
    return lambda x: base.prox(gamma, x)


@dataclass(frozen=True)
class ReflectedResolvent:
    """``x -> 2 prox_{gamma base}(x) - x``."""

    base: Proximable
    gamma: float

    def __post_init__(self):
        _positive(self.gamma, "gamma")

    def __call__(self, x) -> np.ndarray:
        x = as_vector(x)
        return 2.0 * self.base.prox_fn(self.gamma, x) - x


def reflected(base: Proximable, gamma: float) -> ReflectedResolvent:
    return ReflectedResolvent(base, float(gamma))


def _positive(v, name):
    v = float(v)
    if not (v > 0 and np.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {v}")
    return v


def _check_dim(x, dim):
    if x.size != dim:
        raise ValueError(f"dimension mismatch: got {x.size}, expected {dim}")
