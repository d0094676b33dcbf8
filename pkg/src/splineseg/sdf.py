"""Signed distance fields of masks and their weighted least-squares spline fits."""
from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy import ndimage

from .spline import CoefficientGrid, SplineSpace, collocation_matrix

__all__ = [
    "SingularSystemError",
    "signed_distance",
    "boundary_weights",
    "default_truncation",
    "weighted_lsq_fit",
    "lsq_objective",
]


class SingularSystemError(np.linalg.LinAlgError):
    pass


def _nearest_distance(target: np.ndarray) -> np.ndarray:
    nearest = ndimage.distance_transform_edt(~target, return_distances=False, return_indices=True)
    grid = np.indices(target.shape)
    sq = np.zeros(target.shape)
    for k in range(target.ndim):
        d = (grid[k] - nearest[k]).astype(np.float64)
        sq = sq + d * d
    return np.sqrt(sq)


def signed_distance(Y) -> np.ndarray:
    """Exact Euclidean signed distance, positive inside.

    Each pixel gets the distance between its centre and the nearest pixel
    centre of the opposite class.  A mask without an opposite class gets
    the image diagonal everywhere.
    """
    Y = np.asarray(Y).astype(bool)
    if Y.all() or not Y.any():
        cap = math.hypot(*Y.shape)
        return np.full(Y.shape, cap if Y.all() else -cap)
    inside = _nearest_distance(~Y)
    outside = _nearest_distance(Y)
    return np.where(Y, inside, -outside)


def boundary_weights(D, radius: float, boost: float = 10.0) -> np.ndarray:
    """Weight ``boost`` within ``radius`` pixels of the boundary, 1 elsewhere."""
    if radius < 0 or boost <= 0:
        raise ValueError("radius must be >= 0 and boost > 0")
    D = np.asarray(D, dtype=np.float64)
    return np.where(np.abs(D) <= radius, float(boost), 1.0)


def default_truncation(I: int, space: SplineSpace) -> float:
    """One knot span measured in pixels."""
    return (I - 1) / space.domain_end


def lsq_objective(C, D, W, U, ridge: float = 0.0) -> float:
    Z = U.entries @ np.asarray(C) @ U.entries.T
    r = Z - D
    return float(np.sum(W * r * r) + ridge * np.sum(np.asarray(C) ** 2))


def _solve_unit_weights(D, U, ridge):
    A = U.T @ U
    lam, Q = np.linalg.eigh(A)
    denom = np.outer(lam, lam) + ridge
    if denom.min() <= 1e-12 * denom.max():
        raise SingularSystemError(
            "normal equations are singular for this (I, O, p); pass ridge > 0"
        )
    R = Q.T @ (U.T @ D @ U) @ Q
    return Q @ (R / denom) @ Q.T


def _solve_weighted(D, W, U, ridge):
    O = U.shape[1]
    Us = sp.csr_matrix(U)
    K = sp.kron(Us, Us, format="csr")
    w = W.ravel()
    KtW = K.T.multiply(w).tocsr()
    N = (KtW @ K).toarray()
    if ridge:
        N[np.diag_indices_from(N)] += ridge
    if np.any(np.diag(N) <= 0):
        raise SingularSystemError(
            "some basis functions carry no weight; pass ridge > 0"
        )
    rhs = KtW @ D.ravel()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            c = scipy.linalg.solve(N, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise SingularSystemError(f"normal equations are singular ({exc}); pass ridge > 0") from exc
    return c.reshape(O, O)


def weighted_lsq_fit(D, W=None, space: SplineSpace = None, ridge: float = 0.0, truncate=None) -> CoefficientGrid:
    """Least-squares spline approximation of a sampled field.

    Minimises ``sum(W * (U C U^T - D)**2) + ridge * |C|_F**2`` over the
    coefficient grid ``C``.  With unit weights the Kronecker structure of
    the normal matrix is used; general weights assemble the full
    ``O**2 x O**2`` system.  ``truncate`` clamps ``D`` to
    ``[-truncate, truncate]`` first.
    """
    if space is None:
        raise TypeError("a SplineSpace is required")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"field must be square, got shape {D.shape}")
    if truncate is not None:
        D = np.clip(D, -truncate, truncate)
    U = collocation_matrix(D.shape[0], space.basis_count, space.degree).entries
    if W is None:
        C = _solve_unit_weights(D, U, ridge)
    else:
        W = np.asarray(W, dtype=np.float64)
        if W.shape != D.shape:
            raise ValueError(f"weight shape {W.shape} does not match field {D.shape}")
        if np.any(W < 0) or not np.any(W > 0):
            raise ValueError("weights must be non-negative and not all zero")
        if np.all(W == W.flat[0]):
            C = _solve_unit_weights(D, U, ridge / W.flat[0])
        else:
            C = _solve_weighted(D, W, U, ridge)
    return CoefficientGrid(C, space)
