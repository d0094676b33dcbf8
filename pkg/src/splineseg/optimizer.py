"""Direct fitting of coefficient grids to masks with Nesterov-accelerated descent."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .losses import DEFAULT_EPSILON, LossKind, coefficient_loss
from .sdf import signed_distance, weighted_lsq_fit
from .spline import CoefficientGrid, CollocationMatrix, SplineSpace, collocation_matrix

log = logging.getLogger(__name__)

__all__ = [
    "Init",
    "StopReason",
    "FitOptions",
    "FitResult",
    "FitDivergedError",
    "init_coefficients",
    "fit_coefficients",
    "write_history",
]


class Init(str, Enum):
    COARSE_MASK = "coarse"
    SDF_LSQ = "sdf"
    ZERO = "zero"


class StopReason(str, Enum):
    MAX_ITERS = "max_iters"
    PLATEAU = "plateau"


class FitDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class FitOptions:
    loss_kind: LossKind = LossKind.DICE
    learning_rate: float = 0.001
    momentum: float = 0.9
    max_iters: int = 2000
    epsilon: float = DEFAULT_EPSILON
    init: Init = Init.COARSE_MASK
    plateau_tol: float = 1e-7
    plateau_window: int = 50

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        object.__setattr__(self, "init", Init(self.init))
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.plateau_window < 1:
            raise ValueError("plateau_window must be at least 1")


@dataclass
class FitResult:
    coefficients: CoefficientGrid
    loss_history: list = field(default_factory=list)
    iterations_run: int = 0
    stop_reason: StopReason = StopReason.MAX_ITERS

    @property
    def final_loss(self) -> float:
        return min(self.loss_history)


def init_coefficients(Y, space: SplineSpace, method=Init.COARSE_MASK) -> CoefficientGrid:
    """Starting control net for a mask.

    ``COARSE_MASK`` averages ``2Y - 1`` over the pixels each coefficient
    influences, weighted by its basis function on the sample grid.  For
    degree 0 this is a plain block average.
    """
    method = Init(method)
    Y = np.asarray(Y).astype(np.float64)
    O = space.basis_count
    if method is Init.ZERO:
        return CoefficientGrid(np.zeros((O, O)), space)
    if method is Init.SDF_LSQ:
        return weighted_lsq_fit(signed_distance(Y), None, space)
    U = collocation_matrix(Y.shape[0], O, space.degree).entries
    w = U.sum(axis=0)
    avg = U.T @ Y @ U / np.outer(w, w)
    return CoefficientGrid(2.0 * avg - 1.0, space)


def fit_coefficients(Y, space: SplineSpace, U: CollocationMatrix = None, opts: FitOptions = None, init=None) -> FitResult:
    """Minimise a segmentation loss over the coefficient grid.

    Update rule, with momentum ``mu`` and learning rate ``lr``::

        g = dL/dC evaluated at C + mu * v
        v = mu * v - lr * g
        C = C + v

    The loss recorded for an iteration is the one at the look-ahead point
    where the gradient was taken; the returned grid is the look-ahead point
    with the lowest recorded loss.  Iteration stops after ``max_iters`` or
    once the best loss has improved by less than ``plateau_tol`` over the
    last ``plateau_window`` iterations.  ``init`` may be a grid to start
    from instead of ``opts.init``.
    """
    opts = opts or FitOptions()
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise ValueError(f"mask must be square, got shape {Y.shape}")
    I = Y.shape[0]
    if U is None:
        U = collocation_matrix(I, space.basis_count, space.degree)
    if U.space != space or U.sample_count != I:
        raise ValueError("collocation matrix does not match the mask size and spline space")

    if init is None:
        C = init_coefficients(Y, space, opts.init).values.copy()
    else:
        C = np.array(getattr(init, "values", init), dtype=np.float64)
    v = np.zeros_like(C)
    mu, lr = opts.momentum, opts.learning_rate

    history = []
    best_trace = []
    best_loss, best_C = np.inf, C.copy()
    stop = StopReason.MAX_ITERS
    for it in range(opts.max_iters):
        look = C + mu * v
        report = coefficient_loss(look, Y, U, opts.loss_kind, opts.epsilon)
        g = report.grad_coefficients
        if not np.isfinite(report.loss) or not np.all(np.isfinite(g)):
            raise FitDivergedError(
                f"non-finite {opts.loss_kind.value} loss or gradient at iteration {it}"
            )
        history.append(report.loss)
        if report.loss < best_loss:
            best_loss, best_C = report.loss, look
        best_trace.append(best_loss)
        w = opts.plateau_window
        if it >= w and best_trace[it - w] - best_loss < opts.plateau_tol:
            stop = StopReason.PLATEAU
            break
        v = mu * v - lr * g
        C = C + v

    log.debug("fit stopped after %d iterations (%s), best loss %.6g", len(history), stop.value, best_loss)
    return FitResult(CoefficientGrid(best_C, space), history, len(history), stop)


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss"])
        for i, v in enumerate(history):
            writer.writerow([i, repr(float(v))])
