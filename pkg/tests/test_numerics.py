import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msbtm.numerics import NotSPDError, RngStream, cholesky_spd, \
    gaussian_sample, gaussian_sample_n, spd_inverse_det


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    A = rng.normal(size=(d, d))
    return A @ A.T + 0.1 * np.eye(d)


def test_inverse_det_identity():
    inv, det = spd_inverse_det(np.eye(2))
    np.testing.assert_array_equal(inv, np.eye(2))
    assert det == 1.0


def test_inverse_det_diagonal():
    inv, det = spd_inverse_det(np.diag([0.25, 0.25]))
    np.testing.assert_allclose(inv, np.diag([4.0, 4.0]), atol=1e-12)
    assert det == pytest.approx(0.0625, rel=1e-12)


def test_inverse_det_2x2_closed_form():
    inv, det = spd_inverse_det(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(
        inv, np.array([[2 / 3, -1 / 3], [-1 / 3, 2 / 3]]), atol=1e-12)
    assert det == pytest.approx(3.0, rel=1e-12)


def test_non_spd_reports_pivot():
    with pytest.raises(NotSPDError) as exc:
        spd_inverse_det(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert exc.value.pivot_index == 1


def test_asymmetric_rejected():
    with pytest.raises(NotSPDError):
        spd_inverse_det(np.array([[1.0, 0.1], [0.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 6))
def test_spd_round_trip(seed, d):
    m = random_spd(np.random.default_rng(seed), d)
    inv, det = spd_inverse_det(m)
    assert np.abs(m @ inv - np.eye(d)).max() < 1e-10
    assert det > 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 6))
def test_det_matches_pivot_product(seed, d):
    m = random_spd(np.random.default_rng(seed), d)
    _, det = spd_inverse_det(m)
    pivots = np.diag(cholesky_spd(m))
    assert det == pytest.approx(float(np.prod(pivots) ** 2), rel=1e-12)


def test_rng_repeatable():
    a = RngStream(42, stream=7).standard_normal(16)
    b = RngStream(42, stream=7).standard_normal(16)
    np.testing.assert_array_equal(a, b)


def test_rng_counter_advances():
    r = RngStream(42)
    a = r.standard_normal(8)
    b = r.standard_normal(8)
    assert r.counter == 2
    assert not np.array_equal(a, b)


def test_rng_streams_uncorrelated():
    n = 100_000
    a = RngStream(3, stream=0).standard_normal(n)
    b = RngStream(3, stream=1).standard_normal(n)
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) < 0.01


def test_gaussian_sample_deterministic():
    mean = np.array([2.0, 0.0])
    cov = 0.25 * np.eye(2)
    x1 = gaussian_sample(mean, cov, RngStream(1, stream=5))
    x2 = gaussian_sample(mean, cov, RngStream(1, stream=5))
    np.testing.assert_array_equal(x1, x2)


def test_gaussian_sample_moments():
    # CLT check: mean within 4 sigma / sqrt(n), per-coordinate variance +-3%
    mean = np.array([2.0, 0.0])
    cov = 0.25 * np.eye(2)
    X = gaussian_sample_n(mean, cov, 100_000, RngStream(11, stream=2))
    tol = 4 * 0.5 / np.sqrt(100_000)
    assert np.abs(X.mean(axis=0) - mean).max() < tol
    np.testing.assert_allclose(X.var(axis=0), [0.25, 0.25], rtol=0.03)


def test_gaussian_sample_correlated_cov():
    cov = np.array([[1.0, 0.6], [0.6, 1.0]])
    X = gaussian_sample_n(np.zeros(2), cov, 200_000, RngStream(4, stream=3))
    emp = X.T @ X / len(X)
    np.testing.assert_allclose(emp, cov, atol=0.02)


def test_gaussian_sample_rejects_non_spd():
    with pytest.raises(NotSPDError):
        gaussian_sample(np.zeros(2), np.zeros((2, 2)), RngStream(0))
