from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from innercore.depth import InverseCovariance, depth_vector, inverse_covariance, mhdo
from innercore.errors import InputError, SingularCovarianceError

from oracles import gauss_inverse, sample_covariance


def test_unit_variance_independent_columns_give_identity():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((400, 3))
    # orthonormal, mean-zero columns scaled to unit sample variance
    Q, _ = np.linalg.qr(X - X.mean(axis=0))
    F = Q * np.sqrt(399)
    inv = inverse_covariance(F)
    np.testing.assert_allclose(inv.matrix, np.eye(3), atol=1e-6)
    assert inv.ridge_used == 0.0


def test_matches_gauss_jordan_oracle():
    rng = np.random.default_rng(1)
    F = rng.random((100, 4)) * [1, 10, 100, 1000]
    inv = inverse_covariance(F)
    cov = sample_covariance(F.tolist())
    expect = np.array(gauss_inverse(cov))
    np.testing.assert_allclose(inv.matrix, expect, rtol=1e-8)
    np.testing.assert_allclose(inv.matrix @ np.array(cov), np.eye(4), atol=1e-6)


def test_constant_column_needs_ridge():
    rng = np.random.default_rng(2)
    F = np.column_stack([rng.random(50), np.full(50, 3.0), rng.random(50)])
    inv = inverse_covariance(F)
    assert inv.ridge_used > 0


def test_collinear_columns_need_ridge():
    rng = np.random.default_rng(3)
    x = rng.random(60)
    inv = inverse_covariance(np.column_stack([x, 2 * x, rng.random(60)]))
    assert inv.ridge_used > 0


def test_all_constant_columns_fail_with_column_names():
    with pytest.raises(SingularCovarianceError) as exc:
        inverse_covariance(np.ones((10, 3)))
    assert exc.value.columns == [0, 1, 2]
    assert exc.value.exit_code == 2


def test_singular_after_schedule_names_collinear_columns():
    rng = np.random.default_rng(4)
    x = rng.random(60)
    F = np.column_stack([rng.random(60), x, 3 * x])
    with pytest.raises(SingularCovarianceError) as exc:
        inverse_covariance(F, ridge_schedule=())
    assert exc.value.columns == [1, 2]


def test_preconditions():
    with pytest.raises(InputError):
        inverse_covariance(np.ones((1, 3)))
    with pytest.raises(InputError):
        inverse_covariance(np.ones((5, 0)))
    with pytest.raises(InputError):
        inverse_covariance(np.array([[1.0, np.nan], [2.0, 3.0]]))
    with pytest.raises(InputError):
        mhdo([1.0, 2.0], InverseCovariance(np.eye(3)))


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 5)),
              elements=st.floats(0, 1e6, allow_nan=False)))
def test_inverse_is_symmetric_positive_definite(F):
    try:
        inv = inverse_covariance(F)
    except SingularCovarianceError:
        return
    M = inv.matrix
    scale = np.abs(M).max()
    assert np.abs(M - M.T).max() <= 1e-9 * scale
    np.linalg.cholesky(M)


def test_depth_of_origin_is_exactly_one():
    assert mhdo(np.zeros(4), InverseCovariance(np.eye(4))) == 1.0


def test_depth_of_three_four_under_identity():
    assert abs(mhdo([3.0, 4.0], InverseCovariance(np.eye(2))) - 1 / 26) < 1e-12


def test_depth_vector_is_rowwise_mhdo_and_bit_stable():
    rng = np.random.default_rng(5)
    F = rng.random((30, 4))
    inv = inverse_covariance(F)
    z = depth_vector(F, inv)
    assert np.array_equal(z, depth_vector(F.copy(), inv))
    np.testing.assert_allclose(z, [mhdo(x, inv) for x in F], rtol=1e-12)
    assert np.all((z > 0) & (z <= 1))


def test_depth_is_one_only_for_zero_rows():
    rng = np.random.default_rng(6)
    F = rng.random((20, 3))
    F[4] = 0
    z = depth_vector(F, inverse_covariance(F))
    assert z[4] == 1.0
    assert np.all(np.delete(z, 4) < 1.0)


def test_empty_depth_vector():
    assert depth_vector(np.zeros((0, 2)), InverseCovariance(np.eye(2))).shape == (0,)
