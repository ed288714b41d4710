"""Seeded property suites for the solvers.

Each suite samples inputs, checks an invariant and returns a
:class:`SuiteResult` listing any violations instead of raising. The
``toy`` command and the acceptance tests both run them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fixpoint import (KMState, ResidualTrace, ScheduleError, StopRule, constant_schedule, delta_threshold,
                       km_solve, km_step, lyapunov_values, step_sum_bound, validate_schedule)
from .primal_dual import (DualBlock, PDState, PrimalDualProblem, metric_operator, pd_step,
                          validate_stepsizes)
from .prox import (Proximable, ball, box, group_norm, half_sq_norm, indicator_zero,
                   moreau_conjugate, norm1, norm2, separable_sum, sq_dist, translate,
                   zero_function)
from .splitting import DRConfig, dr_solve, dr_step, reflected_composition
from .vecspace import BlockVector, identity_map, matrix_map

__all__ = [
    "SuiteResult",
    "schedule_region_suite",
    "lyapunov_suite",
    "dr_oracle_suite",
    "km_embedding_suite",
    "prox_suite",
    "prox_optimality_suite",
    "metric_suite",
    "hand_sweep_suite",
    "alpha_zero_suite",
    "closed_form_suite",
    "run_all",
    "shipped_proximables",
]


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    worst: float = 0.0   # largest violation margin seen (suite-specific units)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, msg: str) -> None:
        if len(self.failures) < 20:
            self.failures.append(msg)
        elif len(self.failures) == 20:
            self.failures.append("... (further failures suppressed)")

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: {self.checked} checks, worst={self.worst:.3g}"
        if self.failures:
            text += "; " + self.failures[0]
        return text


# --------------------------------------------------------------------------- schedules

def _gamma_coeff(a, lam, delta):
    return a * (1.0 + a) + a * (1.0 - lam) * delta


def schedule_region_suite(seed: int = 0, samples: int = 200) -> SuiteResult:
    """``lambda_max`` in ``(0, 1)`` with the proof inequality tight; inadmissible triples rejected."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("schedule-region")
    for _ in range(samples):
        alpha = rng.uniform(0.0, 0.95)
        sigma = 10.0 ** rng.uniform(-4, 0.5)
        thr = delta_threshold(alpha, sigma)
        delta = thr * (1.0 + 10.0 ** rng.uniform(-6, 1.5)) + 1e-9
        try:
            lam = validate_schedule(alpha, sigma, delta)
        except ScheduleError as exc:
            res.fail(f"admissible ({alpha}, {sigma}, {delta}) rejected: {exc}")
            continue
        res.checked += 1
        if not 0.0 < lam < 1.0:
            res.fail(f"lambda_max={lam} outside (0,1) at ({alpha}, {sigma}, {delta})")
        # with a_n = a_{n+1} = alpha and l_n = lambda_max
        g1 = _gamma_coeff(alpha, lam, delta)
        lhs = (alpha + delta * lam) * (g1 + sigma) + delta * lam
        excess = (lhs - delta) / max(1.0, delta)
        res.worst = max(res.worst, excess)
        if excess > 1e-12:
            res.fail(f"proof inequality off by {excess:.3g} at ({alpha}, {sigma}, {delta})")
    for k in range(samples):
        kind = k % 4
        alpha = rng.uniform(0.0, 0.95)
        sigma = 10.0 ** rng.uniform(-4, 0.5)
        delta = delta_threshold(alpha, sigma) * rng.uniform(0.0, 1.0)
        if kind == 1:
            alpha = rng.uniform(1.0, 3.0)
            delta = rng.uniform(0.1, 10.0)
        elif kind == 2:
            sigma = -sigma
            delta = rng.uniform(0.1, 10.0)
        elif kind == 3:
            alpha = -rng.uniform(0.01, 1.0)
            delta = rng.uniform(0.1, 10.0)
        elif delta == 0.0:
            delta = -1.0
        res.checked += 1
        try:
            validate_schedule(alpha, sigma, delta)
        except ScheduleError:
            continue
        res.fail(f"inadmissible ({alpha}, {sigma}, {delta}) accepted")
    return res


def _affine_half(x):
    return 0.5 * x + 1.0


_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def _rotate(x):
    return _ROT @ x


def lyapunov_suite(alphas=(0.0, 0.1, 0.3), sigmas=(1e-6, 0.05), iters: int = 200,
                   seed: int = 0) -> SuiteResult:
    """Energy descent, step summability and residual bound on two toy maps."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("mu-descent")
    problems = [("x/2+1", _affine_half, np.array([2.0]), 1),
                ("rot90", _rotate, np.zeros(2), 2)]
    for name, T, fixed, dim in problems:
        for alpha in alphas:
            for sigma in sigmas:
                sched = constant_schedule(alpha, sigma=sigma)
                x0 = rng.normal(0.0, 3.0, dim)
                x1 = x0 + rng.normal(0.0, 1.0, dim)
                xs = [x0, x1]
                state = KMState(x0, x1, 1)
                trace = ResidualTrace()
                for _ in range(iters):
                    state = km_step(T, state, sched, trace)
                    xs.append(state.x_cur)
                phi0 = float((x0 - fixed) @ (x0 - fixed))
                mu1 = None
                partial = 0.0
                for n in range(1, iters + 1):
                    mu_n, mu_n1 = lyapunov_values(xs[n - 1], xs[n], xs[n + 1], fixed, sched, n)
                    if n == 1:
                        mu1 = mu_n
                    step = trace.step_sq[n - 1]
                    gap = mu_n1 - mu_n + sigma * step
                    res.worst = max(res.worst, gap)
                    res.checked += 1
                    if gap > 1e-10:
                        res.fail(f"{name} alpha={alpha} sigma={sigma} n={n}: descent gap {gap:.3g}")
                    partial += step
                    bound = step_sum_bound(phi0, mu1, alpha, sigma, n)
                    if partial > bound * (1 + 1e-12):
                        res.fail(f"{name} alpha={alpha} n={n}: step sum {partial:.6g} > bound {bound:.6g}")
                    a, lam = sched.coefficients(n)
                    d_next = math.sqrt(step)
                    d_prev = float(np.linalg.norm(xs[n] - xs[n - 1]))
                    rb = (d_next + a * d_prev) / lam
                    if trace.fp_residual[n - 1] > rb * (1 + 1e-12) + 1e-15:
                        res.fail(f"{name} alpha={alpha} n={n}: residual {trace.fp_residual[n - 1]:.3g} > {rb:.3g}")
    return res


# --------------------------------------------------------------------------- splitting

def scalar_dr_pair() -> tuple[Proximable, Proximable]:
    """``A = d|. - 1|`` and ``B = d(x^2/2)``; the zero of ``A + B`` is 1."""
    return translate(norm1(1.0), np.ones(1)), half_sq_norm()


def dr_oracle_suite(gammas=(0.5, 1.0, 2.0), alphas=(0.0, 0.2), tol: float = 1e-8) -> SuiteResult:
    res = SuiteResult("dr-scalar-oracle")
    A, B = scalar_dr_pair()
    for g in gammas:
        for a in alphas:
            cfg = DRConfig(g, constant_schedule(a, relaxation=2.0))
            out = dr_solve(A, B, np.zeros(1), cfg=cfg, stop=StopRule.residual(1e-12, 100_000))
            err = abs(float(out.y[0]) - 1.0)
            res.worst = max(res.worst, err)
            res.checked += 1
            if not out.converged or err > tol:
                res.fail(f"gamma={g} alpha={a}: y={out.y[0]!r}, converged={out.converged}")
    return res


def km_embedding_suite(samples: int = 100, seed: int = 0, alpha: float = 0.2,
                       tol: float = 1e-14) -> SuiteResult:
    """DR sweep equals the fixed-point step on ``R_A R_B`` at half relaxation."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("dr-km-embedding")
    dim = 3
    A = box(-np.ones(dim), np.ones(dim))
    for k in range(samples):
        B = sq_dist(rng.normal(size=dim))
        gamma = float(rng.uniform(0.2, 3.0))
        sched = constant_schedule(alpha, relaxation=2.0)
        cfg = DRConfig(gamma, sched)
        T = reflected_composition(A, B, gamma)
        state = KMState(rng.normal(size=dim), rng.normal(size=dim), int(rng.integers(1, 50)))
        s_dr, _ = dr_step(A, B, state, cfg)
        s_km = km_step(T, state, sched)
        err = float(np.max(np.abs(s_dr.x_cur - s_km.x_cur)))
        res.worst = max(res.worst, err)
        res.checked += 1
        if err > tol:
            res.fail(f"sample {k}: |dr - km| = {err:.3g}")
    return res


# --------------------------------------------------------------------------- prox

def shipped_proximables(dim: int = 4, seed: int = 0) -> list[tuple[str, Proximable, bool]]:
    """``(name, function, is_projection)`` for every shipped prox family."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=dim)
    lo = -rng.uniform(0.1, 1.0, dim)
    hi = rng.uniform(0.1, 1.0, dim)
    half = dim // 2
    items = [
        ("zero", zero_function(), False),
        ("indicator_zero", indicator_zero(), True),
        ("sq_dist", sq_dist(u), False),
        ("half_sq_norm", half_sq_norm(), False),
        ("norm2", norm2(0.7), False),
        ("norm1", norm1(0.7), False),
        ("box", box(lo, hi), True),
        ("ball", ball(u, 0.8), True),
        ("group_l2", group_norm([0.5, 1.5], half, 2), False),
        ("group_l1", group_norm([0.5, 1.5], half, 1), False),
        ("separable", separable_sum([norm2(1.0), box(lo[half:], hi[half:])], [half, dim - half]), False),
        ("translate", translate(norm2(1.0), u), False),
    ]
    out = []
    for name, f, proj in items:
        out.append((name, f, proj))
        out.append((name + "*", f.conjugate, False))
    return out


def prox_suite(samples: int = 1000, seed: int = 0, dim: int = 4,
               gammas=(0.1, 1.0, 10.0), moreau_tol: float = 1e-10) -> SuiteResult:
    """Nonexpansiveness, Moreau decomposition and projection properties."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("prox-properties")
    for name, f, is_proj in shipped_proximables(dim, seed):
        routes = [("closed", f.conjugate), ("moreau", moreau_conjugate(f))]
        for k in range(samples):
            x = rng.normal(0.0, 2.0, dim)
            y = rng.normal(0.0, 2.0, dim)
            g = gammas[k % len(gammas)]
            px, py = f.prox(g, x), f.prox(g, y)
            dxy = float(np.linalg.norm(x - y))
            ne = float(np.linalg.norm(px - py)) - dxy
            res.checked += 1
            if ne > 1e-12 * (1 + dxy):
                res.fail(f"{name}: nonexpansiveness violated by {ne:.3g} (gamma={g})")
            for route, fc in routes:
                r = float(np.linalg.norm(px + g * fc.prox(1.0 / g, x / g) - x))
                res.worst = max(res.worst, r)
                res.checked += 1
                if r > moreau_tol:
                    res.fail(f"{name}: Moreau residual {r:.3g} via {route} conjugate (gamma={g})")
            if is_proj:
                idem = float(np.linalg.norm(f.prox(g, px) - px))
                firm = float((px - py) @ (x - y)) - float((px - py) @ (px - py))
                res.checked += 2
                if idem > 1e-12:
                    res.fail(f"{name}: projection not idempotent ({idem:.3g})")
                if firm < -1e-12 * (1 + dxy * dxy):
                    res.fail(f"{name}: firm nonexpansiveness violated ({firm:.3g})")
    return res


def prox_optimality_suite(samples: int = 100, perturb: int = 100, seed: int = 0,
                          dim: int = 4, gammas=(0.1, 1.0, 10.0)) -> SuiteResult:
    """``prox`` output beats random perturbations on the prox objective."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("prox-optimality")
    for name, f, _ in shipped_proximables(dim, seed):
        if not f.has_eval:
            continue
        for k in range(samples):
            g = gammas[k % len(gammas)]
            x = rng.normal(0.0, 2.0, dim)
            p = f.prox(g, x)
            best = f(p) + float((p - x) @ (p - x)) / (2 * g)
            if not math.isfinite(best):
                res.fail(f"{name}: prox point has infinite value")
                continue
            for _ in range(perturb):
                y = p + rng.normal(0.0, 10.0 ** rng.uniform(-4, 0), dim)
                val = f(y) + float((y - x) @ (y - x)) / (2 * g)
                res.checked += 1
                if val < best - 1e-10 * (1 + abs(best)):
                    res.fail(f"{name}: perturbation improves prox objective by {best - val:.3g}")
    return res


# --------------------------------------------------------------------------- primal-dual

def _random_problem(rng, max_blocks: int = 3, max_dim: int = 4) -> PrimalDualProblem:
    n = int(rng.integers(1, max_dim + 1))
    blocks = []
    for _ in range(int(rng.integers(1, max_blocks + 1))):
        k = int(rng.integers(1, max_dim + 1))
        mat = rng.normal(size=(k, n))
        blocks.append(DualBlock(norm2(1.0), matrix_map(mat), indicator_zero()))
    return PrimalDualProblem(zero_function(), blocks)


def metric_suite(draws: int = 20, samples: int = 1000, seed: int = 0,
                 sym_tol: float = 1e-12, pos_tol: float = 1e-9) -> SuiteResult:
    """Self-adjointness and strong positivity of the step-size metric."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("metric-V")
    for d in range(draws):
        prob = _random_problem(rng)
        norms = [b.L.norm_bound for b in prob.blocks]
        sig = rng.uniform(0.1, 2.0, prob.m)
        total = float(sum(s * nb * nb for s, nb in zip(sig, norms)))
        tau = rng.uniform(0.05, 0.99) * 4.0 / total
        steps = validate_stepsizes(prob, tau, sig, norms)
        V = metric_operator(prob, steps)
        shape = V.shape
        # V is linear, so its matrix (assembled through the operator itself) covers every sample
        M = V.to_dense()
        W = rng.normal(size=(samples, sum(shape)))
        U = rng.normal(size=(samples, sum(shape)))
        for w in W[:10]:
            direct = V(BlockVector.from_flat(w, shape)).flatten()
            if not np.allclose(direct, M @ w, rtol=1e-13, atol=1e-13):
                res.fail(f"draw {d}: operator and assembled matrix disagree")
        MW, MU = W @ M.T, U @ M.T
        sym = np.abs(np.einsum("ij,ij->i", MW, U) - np.einsum("ij,ij->i", W, MU))
        pos = np.einsum("ij,ij->i", MW, W) - steps.rho * np.einsum("ij,ij->i", W, W)
        res.worst = max(res.worst, float(sym.max()))
        res.checked += 2 * samples
        for i in np.flatnonzero(sym > sym_tol):
            res.fail(f"draw {d}: symmetry residual {sym[i]:.3g}")
        for i in np.flatnonzero(pos < -pos_tol):
            res.fail(f"draw {d}: <w,Vw> - rho||w||^2 = {pos[i]:.3g}")
    return res


HAND_SWEEP = dict(p1=1.0, w1=1.0, p2=0.25, w2=0.5, z1=0.75, x2=0.75, z2=0.75, v2=0.5)


def hand_sweep_problem() -> PrimalDualProblem:
    """Scalar instance: ``f = 0``, ``g = x^2/2``, ``l`` = indicator of 0, ``L = id``."""
    return PrimalDualProblem(zero_function(), [DualBlock(half_sq_norm(), identity_map(1), indicator_zero())])


def hand_sweep_suite() -> SuiteResult:
    res = SuiteResult("pd-hand-sweep")
    prob = hand_sweep_problem()
    steps = validate_stepsizes(prob, 1.0, [1.0])
    state = PDState(np.ones(1), np.ones(1), (np.zeros(1),), (np.zeros(1),), 1)
    new, it = pd_step(prob, state, steps, constant_schedule(0.0, lam=1.0, relaxation=2.0))
    got = dict(p1=it.p1[0], w1=it.w1[0], p2=it.p2[0][0], w2=it.w2[0][0], z1=it.z1[0],
               x2=new.x_cur[0], z2=it.z2[0][0], v2=new.v_cur[0][0])
    for key, want in HAND_SWEEP.items():
        res.checked += 1
        if got[key] != want:
            res.fail(f"{key}: got {got[key]!r}, want {want!r}")
    return res


# --------------------------------------------------------------------------- alpha = 0

def classical_km_loop(T: Callable, x0, lam: float, iters: int):
    """Textbook relaxed fixed-point loop, written without the inertial machinery."""
    x = np.array(x0, dtype=np.float64)
    xs, steps = [], []
    for _ in range(iters):
        x_new = x + lam * (T(x) - x)
        d = x_new - x
        steps.append(float(d @ d))
        x = x_new
        xs.append(x)
    return xs, steps


def classical_dr_loop(JA: Callable, JB: Callable, x0, lam: float, iters: int):
    x = np.array(x0, dtype=np.float64)
    xs, res = [], []
    for _ in range(iters):
        y = JB(x)
        z = JA(2.0 * y - x)
        x = x + lam * (z - y)
        xs.append(x)
        res.append(float(np.linalg.norm(z - y)))
    return xs, res


def classical_pd_loop(prob: PrimalDualProblem, tau: float, sigmas, lam: float, iters: int):
    """Non-inertial primal-dual Douglas-Rachford sweep, coded directly."""
    x = np.zeros(prob.dim)
    v = [np.zeros(d) for d in prob.dual_dims]
    xs = []
    for _ in range(iters):
        s = np.zeros_like(x)
        for b, vi in zip(prob.blocks, v):
            s = s + b.L.adjoint(vi)
        p1 = prob.f.prox_fn(tau, x - (0.5 * tau) * s + tau * prob.z)
        w1 = 2.0 * p1 - x
        p2 = [gc.prox_fn(si, vi + (0.5 * si) * b.L.forward(w1) - si * b.r)
              for b, gc, si, vi in zip(prob.blocks, prob.g_conj, sigmas, v)]
        w2 = [2.0 * p - vi for p, vi in zip(p2, v)]
        s = np.zeros_like(x)
        for b, wi in zip(prob.blocks, w2):
            s = s + b.L.adjoint(wi)
        z1 = w1 - (0.5 * tau) * s
        x = x + lam * (z1 - p1)
        sh = 2.0 * z1 - w1
        z2 = [lc.prox_fn(si, wi + (0.5 * si) * b.L.forward(sh))
              for b, lc, si, wi in zip(prob.blocks, prob.l_conj, sigmas, w2)]
        v = [vi + lam * (zz - p) for vi, zz, p in zip(v, z2, p2)]
        xs.append(np.concatenate([x, *v]))
    return xs


def alpha_zero_suite(iters: int = 60, seed: int = 0) -> SuiteResult:
    """Inertial code paths with ``alpha = 0`` reproduce the classical loops bit for bit."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("alpha-zero-bitwise")
    stop = StopRule.iterations(iters)

    for name, T, dim in (("x/2+1", _affine_half, 1), ("rot90", _rotate, 2)):
        sched = constant_schedule(0.0)
        x0 = rng.normal(size=dim)
        state = KMState(x0, x0, 1)
        trace = ResidualTrace()
        ours = []
        for _ in range(iters):
            state = km_step(T, state, sched, trace)
            ours.append(state.x_cur)
        ref, ref_steps = classical_km_loop(T, x0, sched.coefficients(2)[1], iters)
        res.checked += 1
        if not (all(np.array_equal(a, b) for a, b in zip(ours, ref)) and trace.step_sq == ref_steps):
            res.fail(f"KM {name}: iterates differ from the classical loop")
        solved = km_solve(T, x0, sched=sched, stop=stop)
        res.checked += 1
        if not np.array_equal(solved.x, ref[-1]):
            res.fail(f"KM {name}: km_solve differs from the classical loop")

    A, B = scalar_dr_pair()
    dim = 3
    toy_dr = [("scalar", A, B, np.zeros(1), 1.0),
              ("box", box(np.zeros(dim), np.ones(dim)), sq_dist(2.0 * np.ones(dim)), rng.normal(size=dim), 0.7)]
    for name, fa, fb, x0, gamma in toy_dr:
        cfg = DRConfig(gamma, constant_schedule(0.0, relaxation=2.0))
        lam = cfg.sched.coefficients(2)[1]
        out = dr_solve(fa, fb, x0, cfg=cfg, stop=stop)
        ref, ref_res = classical_dr_loop(lambda x: fa.prox_fn(gamma, x), lambda x: fb.prox_fn(gamma, x),
                                         x0, lam, iters)
        res.checked += 1
        if not (np.array_equal(out.x, ref[-1]) and out.trace.fp_residual == ref_res):
            res.fail(f"DR {name}: trace differs from the classical loop")

    prob = hand_sweep_problem()
    steps = validate_stepsizes(prob, 1.0, [1.0])
    sched = constant_schedule(0.0, relaxation=2.0)
    lam = sched.coefficients(2)[1]
    state = PDState.initial(prob)
    ref = classical_pd_loop(prob, 1.0, [1.0], lam, iters)
    ok = True
    for k in range(iters):
        state, _ = pd_step(prob, state, steps, sched)
        ok &= np.array_equal(np.concatenate([state.x_cur, *state.v_cur]), ref[k])
    res.checked += 1
    if not ok:
        res.fail("primal-dual scalar: iterates differ from the classical sweep")
    return res


def closed_form_suite(alpha: float = 0.2) -> SuiteResult:
    """Known answers: KM on ``x/2+1`` -> 2, rotation -> 0, DR scalar -> 1, DR box -> (1,1)."""
    res = SuiteResult("closed-form")
    # lambda near 1 turns the rotation into itself, so cap the relaxation
    lam = min(0.5, constant_schedule(alpha).lambda_max)
    sched = constant_schedule(alpha, lam=lam)
    cases = [
        ("km x/2+1", km_solve(_affine_half, np.zeros(1), sched=sched,
                              stop=StopRule.residual(1e-12)).x, np.array([2.0]), 1e-8),
        ("km rot90", km_solve(_rotate, np.array([1.0, 2.0]), sched=sched,
                              stop=StopRule.residual(1e-12)).x, np.zeros(2), 1e-8),
    ]
    A, B = scalar_dr_pair()
    cfg = DRConfig(1.0, constant_schedule(alpha, relaxation=2.0))
    cases.append(("dr scalar", dr_solve(A, B, np.zeros(1), cfg=cfg, stop=StopRule.residual(1e-12)).y,
                  np.ones(1), 1e-8))
    cases.append(("dr box", dr_solve(box(np.zeros(2), np.ones(2)), sq_dist(np.array([2.0, 2.0])),
                                     np.zeros(2), cfg=cfg, stop=StopRule.residual(1e-12)).y,
                  np.ones(2), 1e-8))
    for name, got, want, tol in cases:
        err = float(np.max(np.abs(got - want)))
        res.worst = max(res.worst, err)
        res.checked += 1
        if err > tol:
            res.fail(f"{name}: got {got}, want {want}")
    return res


def run_all(seed: int = 0, alpha: float = 0.2, quick: bool = False) -> list[SuiteResult]:
    """Every suite; ``alpha`` drives the inertial runs, ``seed`` the samples."""
    n = 200 if quick else 1000
    alphas = tuple(sorted({0.0, 0.1, 0.3, float(alpha)}))
    return [
        closed_form_suite(alpha),
        schedule_region_suite(seed),
        lyapunov_suite(alphas, seed=seed),
        dr_oracle_suite(alphas=(0.0, float(alpha))),
        km_embedding_suite(seed=seed, alpha=alpha),
        prox_suite(n, seed),
        prox_optimality_suite(20 if quick else 100, seed=seed),
        metric_suite(20, n, seed),
        hand_sweep_suite(),
        alpha_zero_suite(seed=seed),
    ]
