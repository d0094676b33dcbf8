"""Tensor-product B-spline spaces on open uniform knot vectors.

A space of degree ``p`` with ``O`` basis functions lives on the parameter
domain ``[0, O - p]``.  Basis indices are 0-based throughout: ``B_0`` is the
function that equals one at the left end of the domain and ``B_{O-1}`` the one
that equals one at the right end.

The first index of a coefficient grid runs along the image rows (the ``x``
variable), the second along the columns (``y``).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SplineSpace",
    "CollocationMatrix",
    "CoefficientGrid",
    "open_uniform_knots",
    "basis_value",
    "collocation_matrix",
    "evaluate_grid",
    "evaluate_point",
]


def open_uniform_knots(O: int, p: int) -> np.ndarray:
    """Open uniform knot vector with ``p + 1`` repeated end knots.

    >>> open_uniform_knots(4, 1)
    array([0., 0., 1., 2., 3., 3.])
    """
    if p < 0:
        raise ValueError(f"degree must be non-negative, got p={p}")
    if O < p + 1:
        raise ValueError(f"O must be >= p+1 (got O={O}, p={p})")
    interior = np.arange(1, O - p, dtype=np.float64)
    return np.concatenate([np.zeros(p + 1), interior, np.full(p + 1, float(O - p))])


@dataclass(frozen=True)
class SplineSpace:
    """Univariate spline space; bivariate grids use it along both axes."""

    degree: int
    basis_count: int

    def __post_init__(self):
        # validates (O, p)
        open_uniform_knots(self.basis_count, self.degree)

    @cached_property
    def knots(self) -> np.ndarray:
        t = open_uniform_knots(self.basis_count, self.degree)
        t.setflags(write=False)
        return t

    @property
    def domain_end(self) -> float:
        return float(self.basis_count - self.degree)

    def find_spans(self, x: np.ndarray) -> np.ndarray:
        """Knot span index ``k`` with ``t[k] <= x < t[k+1]`` (closed at the right end)."""
        p, O = self.degree, self.basis_count
        cell = np.minimum(np.floor(x).astype(np.int64), O - p - 1)
        return cell + p

    def local_basis(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Values of the ``p + 1`` basis functions that may be nonzero at each ``x``.

        Returns ``(first, values)`` where ``values[n, r]`` is ``B_{first[n] + r}(x[n])``.
        The triangular scheme below is the Cox-De Boor recursion unrolled over
        the active functions only.
        """
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        self._check_domain(x)
        p = self.degree
        t = self.knots
        span = self.find_spans(x)
        n = x.shape[0]

        values = np.zeros((n, p + 1))
        values[:, 0] = 1.0
        left = np.zeros((n, p + 1))
        right = np.zeros((n, p + 1))
        for j in range(1, p + 1):
            left[:, j] = x - t[span + 1 - j]
            right[:, j] = t[span + j] - x
            saved = np.zeros(n)
            for r in range(j):
                temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
                values[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, j - r] * temp
            values[:, j] = saved
        return span - p, values

    def basis_matrix(self, x) -> np.ndarray:
        """Dense matrix ``M[n, k] = B_k(x[n])``."""
        first, local = self.local_basis(x)
        n = local.shape[0]
        M = np.zeros((n, self.basis_count))
        cols = first[:, None] + np.arange(self.degree + 1)
        M[np.arange(n)[:, None], cols] = local
        return M

    def _check_domain(self, x: np.ndarray) -> None:
        if not np.all(np.isfinite(x)):
            raise ValueError("evaluation points must be finite")
        if x.size and (x.min() < 0.0 or x.max() > self.domain_end):
            raise ValueError(
                f"evaluation point outside the parameter domain [0, {self.domain_end:g}]"
            )


def basis_value(space: SplineSpace, i: int, x: float) -> float:
    """Value of the ``i``-th (0-based) basis function at ``x``."""
    if not 0 <= i < space.basis_count:
        raise IndexError(f"basis index {i} out of range [0, {space.basis_count})")
    first, local = space.local_basis(x)
    r = i - int(first[0])
    if 0 <= r <= space.degree:
        return float(local[0, r])
    return 0.0


@dataclass(frozen=True, eq=False)
class CollocationMatrix:
    """Basis values at ``I`` uniformly spaced parameters, shape ``(I, O)``."""

    entries: np.ndarray
    space: SplineSpace

    @property
    def sample_count(self) -> int:
        return self.entries.shape[0]

    @property
    def samples(self) -> np.ndarray:
        return sample_parameters(self.sample_count, self.space)


def sample_parameters(I: int, space: SplineSpace) -> np.ndarray:
    # s_i = (O - p) * i / (I - 1); exact at both ends
    return space.domain_end * np.arange(I, dtype=np.float64) / (I - 1)


def collocation_matrix(I: int, O: int, p: int) -> CollocationMatrix:
    if I < 2:
        raise ValueError(f"need at least two samples per axis, got I={I}")
    space = SplineSpace(p, O)
    U = space.basis_matrix(sample_parameters(I, space))
    U.setflags(write=False)
    return CollocationMatrix(U, space)


@dataclass(frozen=True, eq=False)
class CoefficientGrid:
    """An ``O x O`` control net together with its spline space."""

    values: np.ndarray
    space: SplineSpace

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        O = self.space.basis_count
        if v.shape != (O, O):
            raise ValueError(f"coefficient grid shape {v.shape} does not match ({O}, {O})")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficient grid contains non-finite values")
        object.__setattr__(self, "values", v)


def _coefficient_array(C) -> np.ndarray:
    return np.asarray(C.values if isinstance(C, CoefficientGrid) else C, dtype=np.float64)


def evaluate_grid(U: CollocationMatrix, C) -> np.ndarray:
    """Evaluate one grid ``(O, O)`` or a stack ``(B, O, O)`` at all sample pairs.

    Two contractions, ``Zt = U C`` then ``Z = Zt U^T``, so the largest
    intermediate is ``(I, O)`` per grid.
    """
    if isinstance(C, CoefficientGrid) and C.space != U.space:
        raise ValueError("coefficient grid and collocation matrix use different spaces")
    c = _coefficient_array(C)
    O = U.space.basis_count
    if c.ndim not in (2, 3) or c.shape[-2:] != (O, O):
        raise ValueError(f"expected coefficients of shape (..., {O}, {O}), got {c.shape}")
    Zt = np.einsum("ik,...kl->...il", U.entries, c)
    return np.einsum("jl,...il->...ij", U.entries, Zt)


def evaluate_point(C: CoefficientGrid, x: float, y: float) -> float:
    """Evaluate the bivariate spline at one parameter pair.

    Only the ``(p + 1)**2`` coefficients whose basis functions are active
    at ``(x, y)`` are touched.
    """
    space = C.space
    fx, bx = space.local_basis(x)
    fy, by = space.local_basis(y)
    p = space.degree
    fx, fy = int(fx[0]), int(fy[0])
    block = C.values[fx:fx + p + 1, fy:fy + p + 1]
    return float(bx[0] @ block @ by[0])
