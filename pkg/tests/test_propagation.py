import numpy as np
import pytest

from smauq import numerics
from smauq import Material
from smauq.Material import MPA
from smauq.HysteresisLoop import IncompleteTransformation
from smauq.Propagation import (
    ConfidenceBand, fosm_variance, variance_contributions, variance_drivers, gradient,
    fosm_moments, fosm_band, ensemble_band, direct_band, band_grid, GradientFailure, TooFewSamples,
)

A = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
B = np.array([0.1, 0.2, 0.3])
V = np.array([[0.04, 0.01], [0.01, 0.09]])


def linear(theta):
    return A @ theta + B


def test_fosm_is_exact_for_a_linear_model():
    value, variance, g = fosm_moments(linear, np.array([1.0, 2.0]), V)
    assert np.allclose(value, linear(np.array([1.0, 2.0])))
    assert np.allclose(g, A, rtol=1e-6)
    assert np.allclose(variance, np.diag(A @ V @ A.T), rtol=1e-6)


def test_fosm_width_matches_pointwise_ensemble(rng):
    mean = np.array([1.0, 2.0])
    value, variance, _ = fosm_moments(linear, mean, V)
    samples = numerics.GaussianSummary(mean, V)
    draws = np.array([numerics.mvn_sample(samples, rng) for _ in range(20000)])
    _, lower, upper = ensemble_band(draws @ A.T + B, coverage=0.95, mode="pointwise")
    fosm_width = 4.0 * np.sqrt(variance)
    assert np.allclose(upper - lower, fosm_width, rtol=0.05)


def test_variance_decomposition():
    g = np.array([[1.0, -2.0], [0.3, 0.7]])
    terms = variance_contributions(g, V)
    assert terms.shape == (2, 2, 2)
    assert np.allclose(terms.sum(axis=(1, 2)), fosm_variance(g, V))
    assert variance_contributions(g[0], V).sum() == pytest.approx(fosm_variance(g[0], V))
    shares = variance_drivers(g, V, ["a", "b"])
    assert set(shares) == {"a", "b", "correlations"}
    assert sum(shares.values()) == pytest.approx(1.0)
    assert shares["correlations"] < 0
    none = variance_drivers(np.zeros((3, 2)), V, ["a", "b"])
    assert all(v == 0.0 for v in none.values())


def test_gradient_goes_one_sided_at_a_bound():
    def square(theta):
        return theta ** 2
    _, g = gradient(square, np.array([1.0]), np.array([1e-4]), upper=np.array([1.0]))
    assert g[0, 0] == pytest.approx(2.0, rel=1e-3)
    _, g = gradient(square, np.array([1.0]), np.array([1e-4]))
    assert g[0, 0] == pytest.approx(2.0, rel=1e-8)


def test_gradient_failure_on_both_sides():
    center = np.array([0.5])

    def fragile(theta):
        if not np.array_equal(theta, center):
            raise IncompleteTransformation("no")
        return theta

    with pytest.raises(GradientFailure):
        gradient(fragile, center, np.array([1e-3]))


def test_fosm_rejects_bad_covariance():
    with pytest.raises(ValueError):
        fosm_moments(linear, np.array([1.0, 2.0]), np.eye(3))
    with pytest.raises(ValueError):
        fosm_moments(linear, np.array([1.0, 2.0]), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_curvewise_band_drops_whole_curves():
    values = np.repeat(np.arange(200.0)[:, None], 5, axis=1)
    mean, lower, upper = ensemble_band(values, coverage=0.9, mode="curvewise")
    assert np.all(lower == 10.0)
    assert np.all(upper == 189.0)
    assert np.allclose(mean, 99.5)
    with pytest.raises(ValueError):
        ensemble_band(values, coverage=1.0)
    with pytest.raises(ValueError):
        ensemble_band(values, mode="bandwise")


def test_pointwise_band_interpolates_order_statistics(rng):
    column = rng.permutation(np.arange(1000.0) ** 2)
    _, lower, upper = ensemble_band(column[:, None], coverage=0.95, mode="pointwise")
    # positions 999 * 0.025 = 24.975 and 999 * 0.975 = 974.025
    assert lower[0] == pytest.approx(24 ** 2 + 0.975 * (25 ** 2 - 24 ** 2), rel=1e-12)
    assert upper[0] == pytest.approx(974 ** 2 + 0.025 * (975 ** 2 - 974 ** 2), rel=1e-12)


@pytest.mark.parametrize("mode", ["pointwise", "curvewise"])
def test_wider_coverage_contains_narrower(mode, rng):
    values = rng.normal(size=(500, 30)) * np.linspace(0.5, 2.0, 30)
    _, lo95, hi95 = ensemble_band(values, coverage=0.95, mode=mode)
    _, lo99, hi99 = ensemble_band(values, coverage=0.99, mode=mode)
    assert np.all(lo99 <= lo95) and np.all(hi95 <= hi99)


def test_direct_band_plateau_order_statistics(calibrated_niti, small_grid, rng):
    stress = 150 * MPA
    h_sat = rng.normal(calibrated_niti.H_sat, 0.005 * calibrated_niti.H_sat, size=200)
    pointwise = direct_band(h_sat[:, None], stress, small_grid, ["H_sat"], calibrated_niti,
                            coverage=0.95, mode="pointwise")
    # the plateau is H_sat (1 - exp(-k sigma)), so its order statistics follow those of H_sat
    plateau = np.sort(h_sat) * -np.expm1(-calibrated_niti.k * stress)
    cooling = pointwise.branch("cooling")
    assert cooling["lower"][-1] == pytest.approx(plateau[4] + 0.975 * (plateau[5] - plateau[4]), rel=1e-9)
    assert cooling["upper"][-1] == pytest.approx(plateau[194] + 0.025 * (plateau[195] - plateau[194]), rel=1e-9)
    wider = direct_band(h_sat[:, None], stress, small_grid, ["H_sat"], calibrated_niti,
                        coverage=0.99, mode="pointwise")
    for name in ConfidenceBand.branches:
        assert np.all(wider.branch(name)["lower"] <= pointwise.branch(name)["lower"])
        assert np.all(pointwise.branch(name)["upper"] <= wider.branch(name)["upper"])


def test_fosm_band_on_the_plateau(calibrated_niti, small_grid):
    stress = 150 * MPA
    names = ["H_sat", "k"]
    mean = calibrated_niti.values(names)
    cov = np.diag((0.02 * mean) ** 2)
    band = fosm_band(mean, cov, stress, small_grid, names, calibrated_niti)
    assert band.method == "fosm" and band.coverage == 0.95
    cooling = band.branch("cooling")
    h = calibrated_niti.H_sat * -np.expm1(-calibrated_niti.k * stress)
    g = np.array([h / calibrated_niti.H_sat, calibrated_niti.H_sat * stress * np.exp(-calibrated_niti.k * stress)])
    expected = 2.0 * np.sqrt(g @ cov @ g)
    assert cooling["mean"][-1] == pytest.approx(h)
    assert cooling["upper"][-1] - cooling["mean"][-1] == pytest.approx(expected, rel=1e-3)
    assert sum(band.drivers.values()) == pytest.approx(1.0)
    assert band.drivers["correlations"] == pytest.approx(0.0, abs=1e-12)


def test_direct_band(calibrated_niti, small_grid, rng):
    stress = 150 * MPA
    names = ["H_sat", "k"]
    mean = calibrated_niti.values(names)
    posterior = numerics.GaussianSummary(mean, np.diag((0.01 * mean) ** 2))
    samples = np.array([numerics.mvn_sample(posterior, rng) for _ in range(200)])
    band = direct_band(samples, stress, small_grid, names, calibrated_niti, coverage=0.9)
    cooling = band.branch("cooling")
    assert np.all(cooling["lower"] <= cooling["upper"])
    h = calibrated_niti.H_sat * -np.expm1(-calibrated_niti.k * stress)
    assert cooling["lower"][-1] < h < cooling["upper"][-1]
    with pytest.raises(TooFewSamples):
        direct_band(samples[:199], stress, small_grid, names, calibrated_niti)


def test_band_round_trip(tmp_path, small_grid):
    n = 2 * small_grid.n_grid
    mean = np.linspace(0.0, 0.04, n)
    band = ConfidenceBand.from_vectors(150 * MPA, "direct", 0.9, small_grid, mean, mean - 0.001, mean + 0.002)
    again = ConfidenceBand.load(band.save(str(tmp_path / "band.csv")))
    assert again == band
    assert np.allclose(again.width("heating"), 0.003)
    with pytest.raises(ValueError):
        ConfidenceBand.from_vectors(150 * MPA, "direct", 0.9, small_grid, mean, mean + 0.001, mean + 0.002)


def test_band_grid_covers_every_parameter_set(calibrated_niti, small_grid):
    warmer = calibrated_niti.replace(A_f=330.0)
    grid = band_grid(150 * MPA, [calibrated_niti, warmer], margin=10.0, n_grid=80)
    assert grid.T_max > small_grid.T_max
    assert grid.T_min <= small_grid.T_min + 1e-9
    assert grid.n_grid == 80


@pytest.mark.slow
def test_fosm_and_direct_agree_on_the_plateau(calibrated_niti, rng):
    stress = 150 * MPA
    names = ["H_sat", "k", "A_s"]
    mean = calibrated_niti.values(names)
    cov = np.diag([(0.01 * mean[0]) ** 2, (0.01 * mean[1]) ** 2, 0.5 ** 2])
    posterior = numerics.GaussianSummary(mean, cov)
    samples = np.array([numerics.mvn_sample(posterior, rng) for _ in range(2000)])
    grid = band_grid(stress, [calibrated_niti.with_values(names, s) for s in samples[:50]] + [calibrated_niti],
                     n_grid=200)
    fosm = fosm_band(mean, cov, stress, grid, names, calibrated_niti)
    direct = direct_band(samples, stress, grid, names, calibrated_niti, mode="pointwise")
    assert fosm.width("cooling")[-1] == pytest.approx(direct.width("cooling")[-1], rel=0.1)


@pytest.mark.slow
def test_fosm_hump_at_the_forward_onset(calibrated_niti, rng):
    stress = 150 * MPA
    names = ["M_s", "M_f", "H_sat"]
    mean = calibrated_niti.values(names)
    cov = np.diag([1.0, 1.0, (0.01 * calibrated_niti.H_sat) ** 2])
    posterior = numerics.GaussianSummary(mean, cov)
    samples = np.array([numerics.mvn_sample(posterior, rng) for _ in range(400)])
    grid = band_grid(stress, [calibrated_niti.with_values(names, s) for s in samples], n_grid=200)
    fosm = fosm_band(mean, cov, stress, grid, names, calibrated_niti)
    direct = direct_band(samples, stress, grid, names, calibrated_niti, mode="pointwise")

    onset = Material.transformation_temperatures(stress, calibrated_niti)["forward_start"]
    T = fosm.branch("cooling")["T"]
    sd = (fosm.branch("cooling")["upper"] - fosm.branch("cooling")["mean"]) / 2.0
    near = np.flatnonzero(np.abs(T - onset) <= 5.0)
    peak = near[np.argmax(sd[near])]
    assert abs(T[peak] - onset) <= 5.0
    assert sd[peak] > sd[peak - 1] and sd[peak] > sd[peak + 1]
    assert direct.width("cooling")[peak] < fosm.width("cooling")[peak]
