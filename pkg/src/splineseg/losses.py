"""Segmentation losses on evaluated spline fields and their coefficient gradients.

Inside of the segmentation is the positive side of the field: masks are
mapped to ``2Y - 1`` for the regression losses and the smoothed indicator
tends to one where the field is large and positive.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .spline import CollocationMatrix, evaluate_grid

__all__ = [
    "LossKind",
    "LossReport",
    "DEFAULT_EPSILON",
    "signed_mask",
    "smooth_indicator",
    "smooth_indicator_derivative",
    "loss_mmae",
    "loss_mmse",
    "loss_region",
    "loss_and_field_gradient",
    "backprop_to_coefficients",
    "coefficient_loss",
]

DEFAULT_EPSILON = 1e-4


class LossKind(str, Enum):
    MMAE = "mmae"
    MMSE = "mmse"
    ACCURACY = "accuracy"
    DICE = "dice"
    JACCARD = "jaccard"

    @property
    def is_region(self) -> bool:
        return self in (LossKind.ACCURACY, LossKind.DICE, LossKind.JACCARD)


@dataclass(frozen=True, eq=False)
class LossReport:
    loss: float
    grad_coefficients: np.ndarray
    loss_kind: LossKind


def _as_mask(Y) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.dtype != bool and not np.all((Y == 0) | (Y == 1)):
        raise ValueError("mask entries must be 0 or 1")
    return Y.astype(np.float64)


def _check_pair(Z, Y):
    Z = np.asarray(Z, dtype=np.float64)
    Y = _as_mask(Y)
    if Z.shape != Y.shape:
        raise ValueError(f"field shape {Z.shape} does not match mask shape {Y.shape}")
    if Z.size == 0:
        raise ValueError("empty grid")
    return Z, Y


def signed_mask(Y) -> np.ndarray:
    """Map a {0,1} mask to {-1,+1}."""
    return 2.0 * _as_mask(Y) - 1.0


def smooth_indicator(Z, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """``(Z / (eps + |Z|) + 1) / 2``, strictly inside (0, 1)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    Z = np.asarray(Z, dtype=np.float64)
    return 0.5 * (Z / (epsilon + np.abs(Z)) + 1.0)


def smooth_indicator_derivative(Z, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    Z = np.asarray(Z, dtype=np.float64)
    return epsilon / (2.0 * (epsilon + np.abs(Z)) ** 2)


def loss_mmae(Z, Y) -> tuple[float, np.ndarray]:
    Z, Y = _check_pair(Z, Y)
    r = Z - (2.0 * Y - 1.0)
    # np.sign(0) == 0 is the subgradient used at kinks
    return float(np.mean(np.abs(r))), np.sign(r) / r.size


def loss_mmse(Z, Y) -> tuple[float, np.ndarray]:
    Z, Y = _check_pair(Z, Y)
    r = Z - (2.0 * Y - 1.0)
    return float(np.mean(r * r)), 2.0 * r / r.size


def loss_region(Z, Y, kind, epsilon: float = DEFAULT_EPSILON) -> tuple[float, np.ndarray]:
    """Soft Accuracy, Dice or Jaccard loss and its gradient with respect to ``Z``."""
    kind = LossKind(kind)
    Z, Y = _check_pair(Z, Y)
    S = smooth_indicator(Z, epsilon)
    if kind is LossKind.JACCARD:
        inter = np.sum(Y * S)
        union = np.sum(Y + S - Y * S)
        loss = 1.0 - inter / union
        dS = -(Y * union - inter * (1.0 - Y)) / union**2
    elif kind is LossKind.DICE:
        num = 2.0 * np.sum(Y * S)
        den = np.sum(Y + S)
        loss = 1.0 - num / den
        dS = -(2.0 * Y * den - num) / den**2
    elif kind is LossKind.ACCURACY:
        n = Z.size
        loss = 1.0 - np.sum(1.0 - Y - S + 2.0 * Y * S) / n
        dS = (1.0 - 2.0 * Y) / n
    else:
        raise ValueError(f"{kind.value} is not a region loss")
    return float(loss), dS * smooth_indicator_derivative(Z, epsilon)


def loss_and_field_gradient(Z, Y, kind, epsilon: float = DEFAULT_EPSILON):
    kind = LossKind(kind)
    if kind is LossKind.MMAE:
        return loss_mmae(Z, Y)
    if kind is LossKind.MMSE:
        return loss_mmse(Z, Y)
    return loss_region(Z, Y, kind, epsilon)


def backprop_to_coefficients(G, U: CollocationMatrix) -> np.ndarray:
    """Adjoint of :func:`evaluate_grid`: ``U^T G U`` in two contractions."""
    G = np.asarray(G, dtype=np.float64)
    I = U.sample_count
    if G.shape[-2:] != (I, I):
        raise ValueError(f"expected field gradient of shape (..., {I}, {I}), got {G.shape}")
    Gt = np.einsum("jl,...ij->...il", U.entries, G)
    return np.einsum("ik,...il->...kl", U.entries, Gt)


def coefficient_loss(C, Y, U: CollocationMatrix, kind, epsilon: float = DEFAULT_EPSILON) -> LossReport:
    """Loss of a coefficient grid against a mask, with ``dL/dC``.

    For a stack of grids and masks the loss is the mean of the per-slice
    losses, and the gradient is scaled to match.
    """
    kind = LossKind(kind)
    Z = evaluate_grid(U, C)
    Y = np.asarray(Y)
    if Z.ndim == 2:
        loss, G = loss_and_field_gradient(Z, Y, kind, epsilon)
        return LossReport(loss, backprop_to_coefficients(G, U), kind)
    if Y.shape != Z.shape:
        raise ValueError(f"mask stack shape {Y.shape} does not match field stack {Z.shape}")
    parts = [loss_and_field_gradient(z, y, kind, epsilon) for z, y in zip(Z, Y)]
    B = len(parts)
    loss = sum(v for v, _ in parts) / B
    G = np.stack([g for _, g in parts]) / B
    return LossReport(float(loss), backprop_to_coefficients(G, U), kind)
