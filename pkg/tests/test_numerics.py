import math
import numpy as np
import pytest

from smauq import numerics
from smauq.numerics import GaussianSummary


def test_cholesky_reconstructs_matrix():
    a = np.array([[4.0, 1.2, 0.4], [1.2, 3.0, -0.5], [0.4, -0.5, 2.0]])
    lower = numerics.cholesky(a)
    assert np.allclose(lower @ lower.T, a, rtol=0, atol=1e-12)
    assert np.allclose(lower, np.tril(lower))


def test_cholesky_rejects_indefinite():
    with pytest.raises(numerics.NotPositiveDefinite):
        numerics.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(numerics.NotPositiveDefinite):
        numerics.cholesky(np.zeros((2, 2)))


def test_mvn_sample_moments(rng):
    g = GaussianSummary([1.0, -2.0], [[2.0, 0.6], [0.6, 1.0]])
    draws = np.array([numerics.mvn_sample(g, rng) for _ in range(20000)])
    assert np.allclose(draws.mean(axis=0), g.mean, atol=0.05)
    assert np.allclose(np.cov(draws, rowvar=False), g.covariance, atol=0.08)


def test_mvn_sample_consumes_d_normals():
    g = GaussianSummary([0.0, 0.0, 0.0], np.eye(3))
    a = np.random.default_rng(3)
    b = np.random.default_rng(3)
    numerics.mvn_sample(g, a)
    b.standard_normal(3)
    assert a.uniform() == b.uniform()


@pytest.mark.parametrize("f, d1, d2, expected_log10, tol", [
    (800.62, 1, 16369, math.log10(5.30e-172), 0.01 * 171.3),
])
def test_f_tail_extreme(f, d1, d2, expected_log10, tol):
    assert numerics.log10_f_survival(f, d1, d2) == pytest.approx(expected_log10, abs=tol)


def test_f_tail_moderate():
    assert numerics.f_survival(3.93, 1, 16369) == pytest.approx(0.0476, abs=5e-4)


def test_f_tail_zero_and_infinite():
    assert numerics.f_survival(0.0, 1, 10) == 1.0
    assert numerics.f_survival(np.inf, 1, 10) == 0.0
    assert numerics.log10_f_survival(np.inf, 1, 10) == -np.inf


def test_f_tail_matches_scipy():
    import scipy.stats
    for f, d1, d2 in [(0.5, 1, 10), (2.5, 3, 40), (10.0, 2, 5)]:
        assert numerics.f_survival(f, d1, d2) == pytest.approx(scipy.stats.f.sf(f, d1, d2), rel=1e-10)


@pytest.mark.parametrize("d1, d2", [(1, 10), (3, 40), (1, 16369)])
def test_f_tail_is_nonincreasing(d1, d2):
    p = [numerics.f_survival(f, d1, d2) for f in np.linspace(0.0, 50.0, 501)]
    assert p[0] == 1.0
    assert np.all(np.diff(p) <= 0.0)
    assert all(0.0 <= v <= 1.0 for v in p)


def test_log10_f_tail_past_underflow_is_finite_and_decreasing():
    a = numerics.log10_f_survival(5000.0, 1, 16369)
    b = numerics.log10_f_survival(8000.0, 1, 16369)
    assert np.isfinite(a) and np.isfinite(b)
    assert b < a < -308


def test_f_tail_invalid_dof():
    with pytest.raises(numerics.InvalidDof):
        numerics.f_survival(1.0, 0, 10)
    with pytest.raises(numerics.InvalidDof):
        numerics.f_survival(1.0, 1, 0)


def test_inverse_gamma_rejects_bad_hyperparameters(rng):
    with pytest.raises(numerics.InvalidHyperparameter):
        numerics.inverse_gamma_sample(0.0, 1.0, rng)
    with pytest.raises(numerics.InvalidHyperparameter):
        numerics.inverse_gamma_sample(1.0, -1.0, rng)


def test_inverse_gamma_moments(rng):
    shape, scale = 10.0, 4.0
    draws = np.array([numerics.inverse_gamma_sample(shape, scale, rng) for _ in range(200000)])
    mean = scale / (shape - 1)
    var = scale ** 2 / ((shape - 1) ** 2 * (shape - 2))
    assert draws.mean() == pytest.approx(mean, rel=0.01)
    assert draws.var() == pytest.approx(var, rel=0.03)


def test_pearson():
    x = np.arange(10.0)
    assert numerics.pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert numerics.pearson(x, -x) == pytest.approx(-1.0)
    with pytest.raises(numerics.DegenerateSample):
        numerics.pearson(x, np.ones(10))
    with pytest.raises(numerics.DimensionMismatch):
        numerics.pearson(x, x[:5])


def test_pearson_hand_value():
    # 5 / sqrt(2 * 38 / 3)
    assert numerics.pearson([1.0, 2.0, 3.0], [2.0, 4.0, 7.0]) == pytest.approx(5 * math.sqrt(3 / 76), abs=1e-12)
    assert numerics.pearson([1.0, 2.0, 3.0], [2.0, 4.0, 7.0]) == pytest.approx(0.9934, abs=1e-4)


def test_pearson_symmetry_and_affine_invariance(rng):
    x = rng.normal(size=200)
    y = 0.6 * x + rng.normal(size=200)
    rho = numerics.pearson(x, y)
    assert numerics.pearson(y, x) == pytest.approx(rho, abs=1e-12)
    assert numerics.pearson(3.0 * x - 7.0, y) == pytest.approx(rho, abs=1e-12)
    assert numerics.pearson(x, 0.01 * y + 100.0) == pytest.approx(rho, abs=1e-12)
    assert numerics.pearson(-x, y) == pytest.approx(-rho, abs=1e-12)


def test_kl_identical_is_zero():
    g = GaussianSummary([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    assert numerics.kl_mvn(g, g) == pytest.approx(0.0, abs=1e-12)


def test_kl_shifted_one_dimensional():
    assert numerics.kl_mvn(GaussianSummary([1.0], [[1.0]]), GaussianSummary([0.0], [[1.0]])) == pytest.approx(0.5)


def test_kl_doubled_covariance_two_dimensions():
    n1 = GaussianSummary([0.5, -1.0], np.eye(2))
    n2 = GaussianSummary([0.5, -1.0], 2.0 * np.eye(2))
    assert numerics.kl_mvn(n1, n2) == pytest.approx(0.5 * (2 * math.log(2) - 1), rel=1e-12)
    assert numerics.kl_mvn(n1, n2) == pytest.approx(0.1931, abs=1e-4)


def test_kl_matches_closed_form():
    n1 = GaussianSummary([0.2, -0.1], [[1.0, 0.2], [0.2, 0.5]])
    n2 = GaussianSummary([0.0, 0.4], [[2.0, -0.3], [-0.3, 1.5]])
    s2_inv = np.linalg.inv(n2.covariance)
    diff = n2.mean - n1.mean
    expected = 0.5 * (np.log(np.linalg.det(n2.covariance) / np.linalg.det(n1.covariance)) - 2
                      + np.trace(s2_inv @ n1.covariance) + diff @ s2_inv @ diff)
    assert numerics.kl_mvn(n1, n2) == pytest.approx(expected, rel=1e-10)
    assert numerics.kl_mvn(n1, n2) != pytest.approx(numerics.kl_mvn(n2, n1))


def test_kl_dimension_mismatch():
    with pytest.raises(numerics.DimensionMismatch):
        numerics.kl_mvn(GaussianSummary([0.0], [[1.0]]), GaussianSummary([0.0, 0.0], np.eye(2)))


def test_gaussian_summary_validation_and_fit(rng):
    with pytest.raises(ValueError):
        GaussianSummary([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(numerics.DimensionMismatch):
        GaussianSummary([0.0, 0.0], np.eye(3))
    with pytest.raises(numerics.DegenerateSample):
        GaussianSummary.fit([[1.0, 2.0]])
    samples = rng.normal(size=(500, 2))
    g = GaussianSummary.fit(samples, names=["a", "b"])
    assert g.names == ["a", "b"]
    assert np.allclose(g.covariance, g.covariance.T)
    assert GaussianSummary.deserialize(g.serialize()) == g
