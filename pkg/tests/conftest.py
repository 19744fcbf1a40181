import numpy as np
import pytest

from smauq.Material import MaterialParameters, MPA
from smauq.HysteresisLoop import TemperatureGrid, simulate_isobaric_loop



@pytest.fixture
def calibrated_niti():
    """Calibrated Ni-Ti values; the rest at the reference material."""
    return MaterialParameters(
        E_A=70e9, E_M=35.6e9, M_s=280.4, M_f=259.9, A_s=296.6, A_f=322.6,
        C_A=11.8e6, C_M=8e6, H_sat=0.0517, k=0.0595e-6,
    )


@pytest.fixture
def initial_params():
    return MaterialParameters(
        E_A=70e9, E_M=40e9, M_s=300.0, M_f=270.0, A_s=307.0, A_f=318.0,
        C_A=9e6, C_M=8e6, H_sat=0.034, k=0.02e-6,
    )


@pytest.fixture
def small_grid(calibrated_niti):
    return TemperatureGrid.around(150 * MPA, calibrated_niti, margin=10.0, n_grid=80)


@pytest.fixture
def loop150(calibrated_niti, small_grid):
    return simulate_isobaric_loop(150 * MPA, small_grid, calibrated_niti)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
