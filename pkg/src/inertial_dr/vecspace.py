"""Dense real vectors, product-space vectors and linear maps with adjoints.

Vectors are plain 1-D ``float64`` numpy arrays. :func:`as_vector` is the
single entry point that enforces the contract (one dimension, finite
entries), so the solvers can keep their inner loops on raw arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "as_vector",
    "inner",
    "norm",
    "affine_combine",
    "hilbert_identity_sides",
    "BlockVector",
    "LinearMap",
    "identity_map",
    "scalar_map",
    "matrix_map",
    "difference_map",
    "NormEstimate",
    "op_norm_estimate",
]


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array, raising ``ValueError`` otherwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if dim is not None and arr.size != dim:
        raise ValueError(f"{name} has dimension {arr.size}, expected {dim}")
    return arr


def _same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")


def inner(x, y) -> float:
    x, y = as_vector(x, name="x"), as_vector(y, name="y")
    _same_dim(x, y)
    return float(np.dot(x, y))


def norm(x) -> float:
    return float(np.linalg.norm(as_vector(x)))


def affine_combine(a: float, x, b: float, y) -> np.ndarray:
    """Return ``a*x + b*y``."""
    x, y = as_vector(x, name="x"), as_vector(y, name="y")
    _same_dim(x, y)
    return a * x + b * y


def hilbert_identity_sides(x, y, a: float) -> tuple[float, float]:
    """Both sides of the convex-combination norm identity.

    Left:  ||a x + (1-a) y||^2 + a (1-a) ||x - y||^2
    Right: a ||x||^2 + (1-a) ||y||^2

    The identity holds for every real ``a``; it is exposed as a test oracle.
    """
    x, y = as_vector(x, name="x"), as_vector(y, name="y")
    _same_dim(x, y)
    comb = a * x + (1.0 - a) * y
    diff = x - y
    lhs = float(comb @ comb) + a * (1.0 - a) * float(diff @ diff)
    rhs = a * float(x @ x) + (1.0 - a) * float(y @ y)
    return lhs, rhs


class BlockVector:
    """Element of a product space ``H x G_1 x ... x G_m``.

    Block 0 lives in the primal space, blocks ``1..m`` in the dual spaces.
    Arithmetic is blockwise; the inner product is the sum of the blockwise
    inner products.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks: Sequence):
        if len(blocks) == 0:
            raise ValueError("BlockVector needs at least one block")
        self.blocks = tuple(as_vector(b, name=f"block {k}") for k, b in enumerate(blocks))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.blocks[k]

    def _check(self, other: "BlockVector") -> None:
        if self.shape != other.shape:
            raise ValueError(f"block shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector([a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector([a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, c: float) -> "BlockVector":
        return BlockVector([c * b for b in self.blocks])

    __rmul__ = __mul__

    def inner(self, other: "BlockVector") -> float:
        self._check(other)
        return float(sum(np.dot(a, b) for a, b in zip(self.blocks, other.blocks)))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def flatten(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    @classmethod
    def from_flat(cls, flat, shape: Sequence[int]) -> "BlockVector":
        flat = as_vector(flat)
        if flat.size != sum(shape):
            raise ValueError(f"flat vector of size {flat.size} does not match block shape {tuple(shape)}")
        return cls(np.split(flat, np.cumsum(shape)[:-1]))

    def __repr__(self) -> str:
        return f"BlockVector(shape={self.shape})"


@dataclass(frozen=True)
class LinearMap:
    """A linear operator ``R^in_dim -> R^out_dim`` given by its action and adjoint.

    Parameters
    ----------
    in_dim, out_dim : int
        Domain and codomain dimensions.
    forward : callable
        ``x -> L x`` on ``in_dim`` vectors.
    adjoint : callable
        ``y -> L* y`` on ``out_dim`` vectors.
    norm_bound : float, optional
        A certified upper bound on the operator norm, if one is known.
    """

    in_dim: int
    out_dim: int
    forward: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    adjoint: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    norm_bound: float | None = None
    name: str = "L"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("LinearMap dimensions must be positive")
        if self.norm_bound is not None and not self.norm_bound >= 0:
            raise ValueError("norm_bound must be nonnegative")

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def apply(self, x) -> np.ndarray:
        x = as_vector(x, self.in_dim)
        return np.asarray(self.forward(x), dtype=np.float64)

    def apply_adjoint(self, y) -> np.ndarray:
        y = as_vector(y, self.out_dim, name="y")
        return np.asarray(self.adjoint(y), dtype=np.float64)

    @property
    def T(self) -> "LinearMap":
        return LinearMap(self.out_dim, self.in_dim, self.adjoint, self.forward,
                         self.norm_bound, name=f"{self.name}*")

    def to_dense(self) -> np.ndarray:
        """Assemble the matrix column by column. Only meant for small maps."""
        eye = np.eye(self.in_dim)
        return np.column_stack([self.forward(e) for e in eye])


def identity_map(dim: int) -> LinearMap:
    return LinearMap(dim, dim, lambda x: x.copy(), lambda y: y.copy(), 1.0, name="id")


def scalar_map(dim: int, c: float) -> LinearMap:
    c = float(c)
    return LinearMap(dim, dim, lambda x: c * x, lambda y: c * y, abs(c), name=f"{c}*id")


def matrix_map(mat) -> LinearMap:
    mat = np.array(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("matrix_map expects a 2-D array")
    return LinearMap(mat.shape[1], mat.shape[0], lambda x: mat @ x, lambda y: mat.T @ y,
                     float(np.linalg.norm(mat, 2)), name="matrix")


def difference_map(edges, n_points: int, dim: int = 1) -> LinearMap:
    """Pairwise difference operator over a graph.

    Maps stacked points ``x = (x_1, ..., x_N)`` with ``x_i`` in ``R^dim`` to
    the stacked edge differences ``(x_i - x_j)`` for each edge ``(i, j)``.
    The adjoint scatters each edge vector with ``+`` onto ``i`` and ``-``
    onto ``j``, so ``L* L`` is the unweighted graph Laplacian (Kronecker
    identity on ``R^dim``).
    """
    edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
    if edges.shape[0] == 0:
        raise ValueError("difference_map needs at least one edge")
    if edges.min() < 0 or edges.max() >= n_points or np.any(edges[:, 0] == edges[:, 1]):
        raise ValueError("edge indices out of range or self-loops present")
    head, tail = edges[:, 0].copy(), edges[:, 1].copy()
    k = edges.shape[0]

    def forward(x):
        pts = x.reshape(n_points, dim)
        return (pts[head] - pts[tail]).ravel()

    def adjoint(y):
        diffs = y.reshape(k, dim)
        out = np.empty((n_points, dim))
        for c in range(dim):
            out[:, c] = (np.bincount(head, weights=diffs[:, c], minlength=n_points)
                         - np.bincount(tail, weights=diffs[:, c], minlength=n_points))
        return out.ravel()

    return LinearMap(n_points * dim, k * dim, forward, adjoint, name="difference")


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def op_norm_estimate(L: LinearMap, tol: float = 1e-9, max_iter: int = 5000,
                     seed: int = 0) -> NormEstimate:
    """Estimate ``||L||`` by power iteration on ``L* L``.

    Starts from a seeded Gaussian vector and stops once successive
    Rayleigh quotients agree to ``tol`` (relative). If ``max_iter`` runs out
    first, the best estimate so far is returned with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(L.in_dim)
    x /= np.linalg.norm(x)
    best, prev = 0.0, -np.inf
    for it in range(1, max_iter + 1):
        y = L.adjoint(L.forward(x))
        ray = float(x @ y)  # ||L x||^2 for unit x
        best = max(best, ray)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return NormEstimate(0.0, True, it)
        x = y / ny
        if abs(ray - prev) <= tol * max(ray, 1e-300):
            return NormEstimate(float(np.sqrt(best)), True, it)
        prev = ray
    return NormEstimate(float(np.sqrt(best)), False, max_iter)
