import numpy as np
import pytest
from scipy.integrate import trapezoid

from smauq import Material
from smauq.Material import MaterialParameters, MPA, FORWARD, REVERSE
from smauq.HysteresisLoop import TemperatureGrid, simulate_isobaric_loop


def test_problems_lists_every_violation(calibrated_niti):
    assert calibrated_niti.problems() == []
    bad = calibrated_niti.replace(M_s=250.0, H_sat=0.5, n2=1.5)
    found = bad.problems()
    assert any("M_f < M_s < A_s < A_f" in m for m in found)
    assert any("H_sat" in m for m in found)
    assert any("n2" in m for m in found)
    with pytest.raises(Material.InfeasibleParameters):
        bad.validate()


def test_engineering_round_trip(calibrated_niti):
    eng = calibrated_niti.to_engineering()
    assert eng["E_M"] == pytest.approx(35.6)
    assert eng["k"] == pytest.approx(0.0595)
    assert eng["sigma_star"] == pytest.approx(200.0)
    again = MaterialParameters.from_engineering(eng)
    for name, value in again.as_dict().items():
        assert value == pytest.approx(getattr(calibrated_niti, name), rel=1e-12)
    with pytest.raises(KeyError):
        MaterialParameters.from_engineering({"E_X": 1.0})


def test_h_cur_saturates(calibrated_niti):
    assert Material.h_cur(0.0, calibrated_niti) == 0.0
    assert Material.h_cur(1e12, calibrated_niti) == pytest.approx(calibrated_niti.H_sat)
    sigma = 150 * MPA
    expected = calibrated_niti.H_sat * (1 - np.exp(-calibrated_niti.k * sigma))
    assert Material.h_cur(sigma, calibrated_niti) == pytest.approx(expected, rel=1e-14)


def test_zero_stress_transformation_temperatures(calibrated_niti):
    temps = Material.transformation_temperatures(0.0, calibrated_niti)
    assert temps["forward_start"] == pytest.approx(calibrated_niti.M_s, abs=1e-9)
    assert temps["forward_finish"] == pytest.approx(calibrated_niti.M_f, abs=1e-9)
    assert temps["reverse_start"] == pytest.approx(calibrated_niti.A_s, abs=1e-9)
    assert temps["reverse_finish"] == pytest.approx(calibrated_niti.A_f, abs=1e-9)


def test_endpoint_conditions_hold_for_any_exponents(calibrated_niti):
    p = calibrated_niti.replace(n1=0.3, n2=0.7, n3=0.5, n4=0.9)
    temps = Material.transformation_temperatures(0.0, p)
    assert temps["forward_start"] == pytest.approx(p.M_s, abs=1e-9)
    assert temps["reverse_finish"] == pytest.approx(p.A_f, abs=1e-9)


def test_clausius_clapeyron_slopes_at_sigma_star(calibrated_niti):
    p = calibrated_niti
    h = 1e3
    up = Material.transformation_temperatures(p.sigma_star + h, p)
    down = Material.transformation_temperatures(p.sigma_star - h, p)
    ms_slope = (up["forward_start"] - down["forward_start"]) / (2 * h)
    af_slope = (up["reverse_finish"] - down["reverse_finish"]) / (2 * h)
    assert ms_slope == pytest.approx(1.0 / p.C_M, rel=1e-5)
    assert af_slope == pytest.approx(1.0 / p.C_A, rel=1e-5)


def test_hardening_cycle_returns_to_start(calibrated_niti):
    p = calibrated_niti.replace(n1=0.4, n2=0.8, n3=0.6, n4=0.5)
    c = Material.derive_coefficients(p)
    xi = np.linspace(0.0, 1.0, 200001)
    fwd = trapezoid(Material.hardening(xi, FORWARD, c, p), xi)
    rev = trapezoid(Material.hardening(xi, REVERSE, c, p), xi)
    assert fwd == pytest.approx(rev, rel=1e-6, abs=1e-6 * abs(c.a1))


def test_hardening_rejects_fraction_outside_unit_interval(calibrated_niti):
    c = Material.derive_coefficients(calibrated_niti)
    with pytest.raises(Material.OutOfRange):
        Material.hardening(1.2, FORWARD, c, calibrated_niti)
    with pytest.raises(Material.OutOfRange):
        Material.hardening(-0.1, REVERSE, c, calibrated_niti)


def test_surface_sign_brackets_transformation(calibrated_niti):
    p = calibrated_niti
    c = Material.derive_coefficients(p)
    sigma = 150 * MPA
    temps = Material.transformation_temperatures(sigma, p, c)
    above = temps["forward_start"] + 5
    below = temps["forward_start"] - 5
    assert Material.transformation_surface(sigma, above, 0.0, FORWARD, c, p) < 0
    assert Material.transformation_surface(sigma, below, 0.0, FORWARD, c, p) > 0
    start = Material.transformation_surface(sigma, temps["forward_start"], 0.0, FORWARD, c, p)
    assert abs(start) < 1e-6 * abs(c.Y0)


def test_reverse_needs_reversal_scale(calibrated_niti):
    c = Material.derive_coefficients(calibrated_niti)
    with pytest.raises(Material.UndefinedDirection):
        Material.transformation_surface(150 * MPA, 300.0, 1.0, REVERSE, c, calibrated_niti)
    with pytest.raises(Material.UndefinedDirection):
        Material.reversal_scale(0.01, 0.0)


def test_stress_raises_transformation_temperatures(calibrated_niti):
    low = Material.transformation_temperatures(100 * MPA, calibrated_niti)
    high = Material.transformation_temperatures(200 * MPA, calibrated_niti)
    for key in ("forward_start", "forward_finish", "reverse_start", "reverse_finish"):
        assert high[key] > low[key]


def test_forward_onset_matches_a_sign_scan(calibrated_niti):
    p = calibrated_niti
    c = Material.derive_coefficients(p)
    sigma = 1 * MPA
    scan = p.M_s + 5.0 - 0.001 * np.arange(10001)
    phi = Material.transformation_surface(sigma, scan, np.zeros_like(scan), FORWARD, c, p)
    first = scan[np.argmax(phi > 0)]
    onset = Material.transformation_temperatures(sigma, p, c)["forward_start"]
    assert first - 1e-9 <= onset <= first + 0.001 + 1e-9
    shift = ((c.D - 1.0) * sigma * float(Material.h_cur(sigma, p)) - 0.5 * sigma ** 2 * c.dS) / c.rho_ds0
    assert onset - p.M_s == pytest.approx(shift, rel=1e-6)
    assert onset > p.M_s

    grid = TemperatureGrid.around(sigma, p, margin=10.0, n_grid=2001)
    loop = simulate_isobaric_loop(sigma, grid, p)
    T, xi = loop.cooling.T, loop.cooling.xi
    assert np.all(xi[T > onset + 0.01] == 0.0)
    assert np.all(xi[T < onset - 0.01] > 0.0)
