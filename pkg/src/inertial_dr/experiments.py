"""Problem builders, baselines and run bookkeeping for the two test problems.

* Convex clustering of two interlocking half moons:
  ``min 1/2 sum ||x_i - u_i||^2 + gamma sum_{i<j} w_ij ||x_i - x_j||_p``
  with K-nearest-neighbour Gaussian weights.
* Generalized Heron problem: find a point of the ball ``Omega`` minimizing
  the sum of distances to axis-aligned unit boxes.

Reference solutions are computed once by the non-inertial primal-dual
solver and cached on disk (see :func:`write_cache` for the file layout).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .fixpoint import StopRule, constant_schedule
from .primal_dual import (DualBlock, PDResult, PrimalDualProblem, StepSizes,
                          default_stepsizes, pd_solve)
from .prox import ball, box, group_norm, indicator_zero, norm2, sq_dist
from .vecspace import LinearMap, as_vector, difference_map, identity_map, op_norm_estimate

__all__ = [
    "gen_half_moons",
    "KNNWeights",
    "knn_weights",
    "ClusteringInstance",
    "clustering_instance",
    "clustering_objective",
    "build_clustering_problem",
    "cluster_labels",
    "HeronInstance",
    "heron_instance",
    "heron_objective",
    "build_heron_problem",
    "SubgradientResult",
    "heron_subgradient",
    "rmse",
    "ReferenceSolutionError",
    "reference_solution",
    "default_cache_dir",
    "write_cache",
    "read_cache",
    "RunReport",
    "run_primal_dual",
    "run_subgradient",
]

CACHE_ENV = "INERTIAL_DR_CACHE"
CACHE_MAGIC = b"INERTIAL-DR-REF v1\n"
MERGE_TOL = 1e-3


# --------------------------------------------------------------------------- clustering

def gen_half_moons(seed: int = 0, per_moon: int = 100, noise: float = 0.05):
    """Two interlocking half moons in the plane.

    Upper moon on ``(cos t, sin t)``, lower moon on ``(1 - cos t, 0.5 - sin t)``,
    ``t`` evenly spaced on ``[0, pi]``, plus Gaussian noise of std ``noise``.

    Returns
    -------
    points : ndarray, shape (2 * per_moon, 2)
    labels : ndarray of int, 0 for the upper moon and 1 for the lower one
    """
    if per_moon < 1:
        raise ValueError("per_moon must be >= 1")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    t = np.linspace(0.0, np.pi, per_moon)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    points = np.vstack([upper, lower])
    if noise > 0:
        points = points + np.random.default_rng(seed).normal(0.0, noise, points.shape)
    labels = np.repeat([0, 1], per_moon)
    return points, labels


class KNNWeights(NamedTuple):
    edges: np.ndarray     # (k, 2) index pairs i < j, lexicographically sorted
    weights: np.ndarray   # (k,) positive weights

    def as_dict(self) -> dict:
        return {(int(i), int(j)): float(w) for (i, j), w in zip(self.edges, self.weights)}


def knn_weights(points, K: int = 10, phi: float = 0.5) -> KNNWeights:
    """Weights ``exp(-phi ||u_i - u_j||^2)`` on K-nearest-neighbour pairs.

    A pair is linked when either point is among the other's ``K`` nearest
    neighbours. Weights are evaluated at the data points. Ties in distance
    are broken by index.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n_pts = pts.shape[0]
    if K < 1:
        raise ValueError("K must be >= 1")
    if K >= n_pts:
        raise ValueError(f"K={K} must be smaller than the number of points {n_pts}")
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    masked = d2.copy()
    np.fill_diagonal(masked, np.inf)
    nbrs = np.argsort(masked, axis=1, kind="stable")[:, :K]
    link = np.zeros((n_pts, n_pts), dtype=bool)
    link[np.repeat(np.arange(n_pts), K), nbrs.ravel()] = True
    link |= link.T
    i, j = np.nonzero(np.triu(link, k=1))  # row-major order is lexicographic
    edges = np.column_stack([i, j]).astype(np.intp)
    return KNNWeights(edges, np.exp(-phi * d2[i, j]))


@dataclass(frozen=True)
class ClusteringInstance:
    points: np.ndarray
    p: int
    gamma: float
    K: int
    phi: float
    edges: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def content_hash(self) -> str:
        return _hash_arrays("cluster", [self.points, self.edges, self.weights],
                            dict(p=self.p, gamma=self.gamma, K=self.K, phi=self.phi))


def clustering_instance(points, p: int = 2, gamma: float = 5.2, K: int = 10,
                        phi: float = 0.5) -> ClusteringInstance:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    w = knn_weights(pts, K, phi)
    return ClusteringInstance(pts, p, float(gamma), K, float(phi), w.edges, w.weights)


def clustering_objective(inst: ClusteringInstance, x) -> float:
    X = as_vector(x, inst.points.size).reshape(inst.points.shape)
    fit = 0.5 * float(np.sum((X - inst.points) ** 2))
    d = X[inst.edges[:, 0]] - X[inst.edges[:, 1]]
    nrm = np.linalg.norm(d, axis=1) if inst.p == 2 else np.abs(d).sum(axis=1)
    return fit + inst.gamma * float(inst.weights @ nrm)


def build_clustering_problem(inst: ClusteringInstance, seed: int = 0) -> PrimalDualProblem:
    """Cast the clustering objective as a single-block primal-dual problem.

    ``f = 1/2 ||x - u||^2`` on the stacked centers, ``L`` the edge difference
    map, ``g = gamma sum_e w_e ||.||_p`` (weights folded into ``g``) and
    ``l`` the indicator of the origin, so ``g [] l = g``.
    """
    if inst.edges.shape[0] == 0:
        raise ValueError("clustering instance has no edges; nothing couples the centers")
    D = difference_map(inst.edges, inst.n_points, inst.dim)
    bound = 1.01 * op_norm_estimate(D, seed=seed).value
    D = LinearMap(D.in_dim, D.out_dim, D.forward, D.adjoint, bound, name="difference")
    g = group_norm(inst.gamma * inst.weights, inst.dim, inst.p)
    block = DualBlock(g, D, indicator_zero())
    return PrimalDualProblem(sq_dist(inst.points.ravel()), [block],
                             objective=lambda x: clustering_objective(inst, x))


def cluster_labels(x, n_points: int, dim: int, tol: float = MERGE_TOL) -> np.ndarray:
    """Connected components of the "centers closer than ``tol``" graph, labelled in order of appearance."""
    X = as_vector(x, n_points * dim).reshape(n_points, dim)
    diff = X[:, None, :] - X[None, :, :]
    close = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) <= tol
    _, raw = connected_components(coo_matrix(close), directed=False)
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.size)
    return relabel[raw]


# --------------------------------------------------------------------------- Heron

@dataclass(frozen=True)
class HeronInstance:
    """Ball ``Omega = B(center, radius)`` and boxes of side ``side`` around ``box_centers``."""

    n: int
    box_centers: np.ndarray
    seed: int | None = None
    radius: float = 1.0
    side: float = 1.0

    @property
    def m(self) -> int:
        return self.box_centers.shape[0]

    @property
    def center(self) -> np.ndarray:
        return np.ones(self.n)

    def box_bounds(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        c = self.box_centers[i]
        return c - 0.5 * self.side, c + 0.5 * self.side

    def content_hash(self) -> str:
        return _hash_arrays("heron", [self.box_centers],
                            dict(n=self.n, radius=self.radius, side=self.side))


def heron_instance(n: int, m: int, seed: int = 0) -> HeronInstance:
    """Box centers with i.i.d. ``N(0, n^2)`` entries from a seeded generator."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    centers = np.random.default_rng(seed).normal(0.0, float(n), size=(m, n))
    return HeronInstance(n, centers, seed)


def _dist_to_boxes(inst: HeronInstance, x: np.ndarray) -> np.ndarray:
    lo = inst.box_centers - 0.5 * inst.side
    hi = inst.box_centers + 0.5 * inst.side
    proj = np.clip(x, lo, hi)
    return np.linalg.norm(x - proj, axis=1)


def heron_objective(inst: HeronInstance, x) -> float:
    """Sum of distances to the boxes; ``inf`` outside ``Omega``."""
    x = as_vector(x, inst.n)
    if np.linalg.norm(x - inst.center) > inst.radius * (1.0 + 1e-9):
        return math.inf
    return float(_dist_to_boxes(inst, x).sum())


def build_heron_problem(inst: HeronInstance) -> PrimalDualProblem:
    """``f`` = indicator of ``Omega``, ``g_i = ||.||``, ``l_i`` = indicator of box ``i``, ``L_i = id``."""
    f = ball(inst.center, inst.radius)
    blocks = []
    for i in range(inst.m):
        lo, hi = inst.box_bounds(i)
        blocks.append(DualBlock(norm2(1.0), identity_map(inst.n), box(lo, hi)))
    return PrimalDualProblem(f, blocks, objective=lambda x: heron_objective(inst, x))


@dataclass
class SubgradientResult:
    x: np.ndarray             # best point found (by objective)
    objective: float
    rmse: list
    objective_trace: list
    converged: bool
    iterations: int


def heron_subgradient(inst: HeronInstance, c: float = 2.0, x0=None, stop: StopRule | None = None,
                      time_limit: float | None = None, outside_tol: float = 1e-12) -> SubgradientResult:
    """Projected subgradient method with steps ``c / k``.

    ``x_{k+1} = P_Omega(x_k - (c/k) sum_i s_i)``, where ``s_i`` is the unit
    vector from the projection onto box ``i`` towards ``x_k`` (zero when the
    distance is at most ``outside_tol``). The best iterate by objective is
    kept; an ``rmse`` stop rule is checked on that best point.
    """
    if c <= 0:
        raise ValueError("step constant c must be positive")
    stop = stop or StopRule.iterations(100_000)
    center, radius = inst.center, inst.radius
    x = center.copy() if x0 is None else as_vector(x0, inst.n)
    lo = inst.box_centers - 0.5 * inst.side
    hi = inst.box_centers + 0.5 * inst.side

    def proj_omega(y):
        d = y - center
        nd = np.linalg.norm(d)
        return y if nd <= radius else center + (radius / nd) * d

    x = proj_omega(x)
    best_x, best_obj = x.copy(), float(np.linalg.norm(x - np.clip(x, lo, hi), axis=1).sum())
    rmse_trace, obj_trace = [], []
    converged = stop.kind == "max_iter"
    t0 = time.perf_counter()
    k = 0
    for k in range(1, stop.max_iter + 1):
        diff = x - np.clip(x, lo, hi)
        dist = np.linalg.norm(diff, axis=1)
        out = dist > outside_tol
        g = (diff[out] / dist[out, None]).sum(axis=0) if np.any(out) else np.zeros_like(x)
        x = proj_omega(x - (c / k) * g)
        obj = float(np.linalg.norm(x - np.clip(x, lo, hi), axis=1).sum())
        if obj < best_obj:
            best_obj, best_x = obj, x.copy()
        obj_trace.append(best_obj)
        if stop.kind == "rmse":
            err = rmse(best_x, stop.reference)
            rmse_trace.append(err)
            if err <= stop.eps:
                converged = True
                break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
    return SubgradientResult(best_x, best_obj, rmse_trace, obj_trace, converged, k)


# --------------------------------------------------------------------------- references

def rmse(x, ref) -> float:
    """``sqrt(||x - ref||^2 / dim)``."""
    x, ref = as_vector(x, name="x"), as_vector(ref, name="ref")
    if x.shape != ref.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {ref.size}")
    d = x - ref
    return math.sqrt(float(d @ d) / d.size)


class ReferenceSolutionError(RuntimeError):
    """The reference run did not reach its tolerance."""


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "inertial_dr"


def _hash_arrays(tag: str, arrays, params: dict) -> str:
    h = hashlib.sha256(tag.encode())
    h.update(json.dumps(params, sort_keys=True).encode())
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str((a.dtype.str, a.shape)).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:32]


def write_cache(path, vector, meta: dict) -> None:
    """Write a reference vector.

    Layout: the magic line ``INERTIAL-DR-REF v1\\n``, one line of JSON
    metadata (must include ``dim``), then ``dim`` little-endian float64
    values. The file is written to a temporary name and renamed.
    """
    path = Path(path)
    vec = np.ascontiguousarray(as_vector(vector), dtype="<f8")
    header = dict(meta, dim=int(vec.size), dtype="<f8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".ref")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(vec.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_cache(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        if fh.readline() != CACHE_MAGIC:
            raise ValueError(f"{path} is not a reference cache file")
        meta = json.loads(fh.readline())
        data = fh.read()
    vec = np.frombuffer(data, dtype="<f8").astype(np.float64)
    if vec.size != meta["dim"]:
        raise ValueError(f"{path}: expected {meta['dim']} values, found {vec.size}")
    return vec, meta


def reference_solution(problem: PrimalDualProblem, method_tag: str = "pd-dr-classical",
                       key: str | None = None, cache_dir=None, tol: float = 1e-13,
                       max_iter: int = 10_000_000, steps: StepSizes | None = None) -> np.ndarray:
    """High-accuracy primal solution from the non-inertial primal-dual solver.

    Iterates until the governing pair moves by at most ``tol`` in one step.
    With a ``key`` (normally an instance ``content_hash()``) the result is
    cached under ``cache_dir`` (default: ``$INERTIAL_DR_CACHE`` or
    ``~/.cache/inertial_dr``) and later calls read it back unchanged; an
    unreadable or mismatched file is recomputed and overwritten.

    Raises
    ------
    ReferenceSolutionError
        If ``max_iter`` is exhausted first.
    """
    path = None
    if key is not None:
        path = Path(cache_dir or default_cache_dir()) / f"{key}-{method_tag}.ref"
        if path.exists():
            try:
                vec, _ = read_cache(path)
            except (ValueError, KeyError):
                vec = None   # unreadable file: recompute and overwrite
            if vec is not None and vec.size == problem.dim:
                return vec
    if method_tag != "pd-dr-classical":
        raise ValueError(f"unknown reference method {method_tag!r}")
    res = pd_solve(problem, steps, constant_schedule(0.0, relaxation=2.0),
                   StopRule.step(tol, max_iter))
    if not res.converged:
        raise ReferenceSolutionError(
            f"reference run did not reach step size {tol} within {max_iter} iterations")
    if path is not None:
        write_cache(path, res.x, {"key": key, "method": method_tag, "iterations": res.iterations})
    return res.x.copy()


# --------------------------------------------------------------------------- run reports

@dataclass
class RunReport:
    algorithm_tag: str
    iterations: int
    rmse_trace: list
    residual_trace: list
    objective_trace: list
    objective_final: float
    wall_time: float
    converged: bool
    timed_out: bool = False
    x: np.ndarray | None = field(default=None, repr=False)

    def csv_rows(self):
        """Rows ``(n, rmse, fp_residual, objective)``, one per iteration."""
        for k in range(self.iterations):
            yield (k + 1, self.rmse_trace[k], self.residual_trace[k], self.objective_trace[k])

    def summary(self) -> dict:
        return {"algorithm": self.algorithm_tag, "iterations": self.iterations,
                "converged": self.converged, "timed_out": self.timed_out,
                "wall_time": self.wall_time, "objective_final": self.objective_final,
                "rmse_final": self.rmse_trace[-1] if self.rmse_trace else None}


def run_primal_dual(problem: PrimalDualProblem, reference, eps: float, alpha: float = 0.0,
                    lam: float | None = None, steps: StepSizes | None = None,
                    max_iter: int = 1_000_000, tag: str | None = None,
                    sigma: float = 1e-6, delta: float | None = None,
                    time_limit: float | None = None) -> RunReport:
    """Run the primal-dual solver to ``rmse(p1, reference) <= eps`` and collect a report."""
    steps = steps or default_stepsizes(problem)
    sched = constant_schedule(alpha, sigma=sigma, delta=delta, lam=lam, relaxation=2.0)
    t0 = time.perf_counter()
    res: PDResult = pd_solve(problem, steps, sched, StopRule.rmse(reference, eps, max_iter),
                             record_objective=True, time_limit=time_limit)
    wall = time.perf_counter() - t0
    tag = tag or ("pd-dr-inertial" if alpha > 0 else "pd-dr-classical")
    obj = res.trace.objective if res.trace.objective else [math.nan] * res.iterations
    timed_out = not res.converged and res.iterations < max_iter
    return RunReport(tag, res.iterations, list(res.trace.rmse), list(res.trace.fp_residual),
                     list(obj), obj[-1], wall, res.converged, timed_out, x=res.x.copy())


def run_subgradient(inst: HeronInstance, reference, eps: float, c: float = 2.0,
                    max_iter: int = 1_000_000, time_limit: float | None = None) -> RunReport:
    t0 = time.perf_counter()
    res = heron_subgradient(inst, c, stop=StopRule.rmse(reference, eps, max_iter),
                            time_limit=time_limit)
    wall = time.perf_counter() - t0
    timed_out = not res.converged and res.iterations < max_iter
    return RunReport("subgradient", res.iterations, res.rmse, [math.nan] * res.iterations,
                     res.objective_trace, res.objective, wall, res.converged, timed_out,
                     x=res.x.copy())
