"""Segmentation boundaries as zero level sets of tensor-product B-splines."""
from .losses import LossKind, coefficient_loss
from .metrics import confusion, hausdorff, rasterize, score, volume_metrics
from .optimizer import FitOptions, FitResult, fit_coefficients, init_coefficients
from .sdf import signed_distance, weighted_lsq_fit
from .spline import (
    CoefficientGrid,
    CollocationMatrix,
    SplineSpace,
    collocation_matrix,
    evaluate_grid,
    evaluate_point,
)

__version__ = "0.1.0"
