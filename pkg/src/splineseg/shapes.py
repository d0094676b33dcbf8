"""Synthetic masks used by the demos, benchmarks and acceptance runs."""
import numpy as np


def _rings(I, center, r_in, r_out):
    ii, jj = np.mgrid[:I, :I].astype(np.float64)
    d2 = (ii - center[0]) ** 2 + (jj - center[1]) ** 2
    return (d2 <= r_out * r_out) & (d2 >= r_in * r_in)


def disk(I, radius=None, center=None):
    """Filled disk, by default of radius ``I/4`` centred in the image."""
    radius = I / 4 if radius is None else radius
    center = ((I - 1) / 2, (I - 1) / 2) if center is None else center
    return _rings(I, center, 0.0, radius)


def annulus(I, inner=None, outer=None, center=None):
    inner = 5 * I / 32 if inner is None else inner
    outer = 11 * I / 32 if outer is None else outer
    center = ((I - 1) / 2, (I - 1) / 2) if center is None else center
    return _rings(I, center, inner, outer)


def two_blobs(I):
    """Two disjoint disks of different size."""
    return disk(I, 5 * I / 32, (0.3 * I, 0.32 * I)) | disk(I, 3 * I / 16, (0.68 * I, 0.66 * I))


def blobs_and_annulus(I):
    """Annulus plus two disjoint disks: three components, one with a hole."""
    ring = annulus(I, 3 * I / 32, 7 * I / 32, (0.34 * I, 0.34 * I))
    return ring | disk(I, 3 * I / 32, (0.78 * I, 0.22 * I)) | disk(I, I / 8, (0.74 * I, 0.74 * I))


SHAPES = {
    "disk": disk,
    "annulus": annulus,
    "two_blobs": two_blobs,
    "blobs_and_annulus": blobs_and_annulus,
}
