import math

import numpy as np
import numpy.testing as npt
import pytest

from splineseg.metrics import confusion, rasterize, score
from splineseg.sdf import (
    SingularSystemError,
    boundary_weights,
    default_truncation,
    lsq_objective,
    signed_distance,
    weighted_lsq_fit,
)
from splineseg.shapes import disk
from splineseg.spline import SplineSpace, collocation_matrix, evaluate_grid

from oracles import brute_signed_distance


def test_single_pixel():
    Y = np.zeros((11, 11), int)
    Y[5, 5] = 1
    D = signed_distance(Y)
    assert D[5, 5] == 1.0
    assert D[5, 6] == -1.0
    assert D[6, 6] == -math.sqrt(2)
    assert D[0, 0] == -math.sqrt(50)


def test_uniform_masks_use_cap():
    npt.assert_array_equal(signed_distance(np.ones((6, 4))), math.hypot(6, 4))
    npt.assert_array_equal(signed_distance(np.zeros((5, 5))), -math.hypot(5, 5))


def test_matches_brute_force():
    rng = np.random.default_rng(0)
    for density in (0.1, 0.5, 0.9):
        Y = rng.random((16, 16)) < density
        npt.assert_array_equal(signed_distance(Y), brute_signed_distance(Y))


def test_sign_and_complement():
    rng = np.random.default_rng(1)
    Y = rng.random((20, 13)) < 0.4
    D = signed_distance(Y)
    assert np.all((D > 0) == Y)
    npt.assert_array_equal(signed_distance(~Y), -D)


def test_fit_reproduces_constants():
    space = SplineSpace(2, 6)
    C = weighted_lsq_fit(np.full((30, 30), 3.5), None, space).values
    npt.assert_allclose(C, 3.5, atol=1e-12)


@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_round_trip(p):
    rng = np.random.default_rng(p)
    space = SplineSpace(p, 9)
    U = collocation_matrix(40, 9, p)
    C0 = rng.uniform(-5, 5, (9, 9))
    C = weighted_lsq_fit(evaluate_grid(U, C0), np.ones((40, 40)), space).values
    assert np.max(np.abs(C - C0)) <= 1e-8


def test_weighted_round_trip_and_optimality():
    rng = np.random.default_rng(2)
    space = SplineSpace(1, 6)
    U = collocation_matrix(20, 6, 1)
    C0 = rng.normal(size=(6, 6))
    W = rng.uniform(0.1, 3, (20, 20))
    C = weighted_lsq_fit(evaluate_grid(U, C0), W, space).values
    assert np.max(np.abs(C - C0)) <= 1e-8

    D = rng.normal(size=(20, 20))
    ridge = 0.01
    C = weighted_lsq_fit(D, W, space, ridge=ridge).values
    # first-order optimality: U^T (W * residual) U + ridge C == 0
    R = W * (evaluate_grid(U, C) - D)
    npt.assert_allclose(U.entries.T @ R @ U.entries + ridge * C, 0, atol=1e-8)
    base = lsq_objective(C, D, W, U, ridge)
    for _ in range(100):
        delta = rng.normal(scale=1e-3, size=C.shape)
        assert lsq_objective(C + delta, D, W, U, ridge) >= base


def test_kronecker_and_full_solve_agree():
    rng = np.random.default_rng(3)
    space = SplineSpace(2, 7)
    D = rng.normal(size=(25, 25))
    fast = weighted_lsq_fit(D, None, space, ridge=0.1).values
    W = np.ones((25, 25))
    W[0, 0] = 1 + 1e-15  # forces the assembled system
    full = weighted_lsq_fit(D, W, space, ridge=0.1).values
    npt.assert_allclose(fast, full, atol=1e-10)


def test_ridge_shrinks_norm():
    rng = np.random.default_rng(4)
    space = SplineSpace(1, 8)
    D = rng.normal(size=(24, 24))
    norms = [np.linalg.norm(weighted_lsq_fit(D, None, space, ridge=r).values) for r in (0, 1e-3, 1e-2, 0.1, 1, 10, 100)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_transpose_commutes():
    rng = np.random.default_rng(5)
    space = SplineSpace(2, 8)
    D = rng.normal(size=(30, 30))
    npt.assert_allclose(
        weighted_lsq_fit(D.T, None, space).values,
        weighted_lsq_fit(D, None, space).values.T,
        atol=1e-12,
    )


def test_singular_system_needs_ridge():
    # O > I leaves the system underdetermined
    space = SplineSpace(1, 12)
    D = np.zeros((6, 6))
    with pytest.raises(SingularSystemError, match="ridge"):
        weighted_lsq_fit(D, None, space)
    W = np.ones((6, 6))
    W[0, 0] = 2.0
    with pytest.raises(SingularSystemError, match="ridge"):
        weighted_lsq_fit(D, W, space)
    assert weighted_lsq_fit(D, None, space, ridge=1e-3).values.shape == (12, 12)


def test_input_validation():
    space = SplineSpace(1, 4)
    with pytest.raises(ValueError):
        weighted_lsq_fit(np.zeros((8, 9)), None, space)
    with pytest.raises(ValueError):
        weighted_lsq_fit(np.zeros((8, 8)), np.zeros((8, 8)), space)
    with pytest.raises(ValueError):
        weighted_lsq_fit(np.zeros((8, 8)), None, space, ridge=-1)


def test_disk_fit_end_to_end():
    I, O = 128, 32
    Y = disk(I)
    C = weighted_lsq_fit(signed_distance(Y), None, SplineSpace(1, O))
    pred = rasterize(evaluate_grid(collocation_matrix(I, O, 1), C))
    assert score(confusion(pred, Y), "dice") >= 0.95


def test_boundary_weights_and_truncation():
    Y = disk(64)
    D = signed_distance(Y)
    W = boundary_weights(D, 2.0)
    assert set(np.unique(W)) == {1.0, 10.0}
    space = SplineSpace(1, 16)
    tau = default_truncation(64, space)
    assert tau == pytest.approx(63 / 15)
    C = weighted_lsq_fit(D, W, space, truncate=tau)
    pred = rasterize(evaluate_grid(collocation_matrix(64, 16, 1), C))
    assert score(confusion(pred, Y), "dice") >= 0.95
