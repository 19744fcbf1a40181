'''
This module implements the HysteresisLoop object, the transformation strain - temperature
loop produced by cooling and then heating an SMA under constant stress, together with the
isobaric forward solver that produces it and the squared-distance metric used to compare
two loops.

A loop is stored branch by branch. The cooling branch runs from T_max down to T_min
(forward transformation), the heating branch from T_min back up (reverse transformation).
'''

import dataclasses
import logging
import numpy as np
import pandas as pd

from . import Material
from .Material import FORWARD, REVERSE, MPA

logger = logging.getLogger(__name__)

MIN_GRID = 50
MAX_BISECTIONS = 80
PHI_TOLERANCE = 1.0  # Pa
XI_TOLERANCE = 1e-12
COMPLETION_TOLERANCE = 1e-6
CLOSURE_TOLERANCE = 1e-8


class IncompleteTransformation(RuntimeError):
    pass


class RootBracketFailure(RuntimeError):
    pass


class GridMismatch(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class TemperatureGrid:
    """
    Uniform temperature grid shared by both branches of a loop.
    """
    T_max: float
    T_min: float
    n_grid: int = 500

    def __post_init__(self):
        if not self.T_max > self.T_min:
            raise ValueError(f"T_max ({self.T_max}) must exceed T_min ({self.T_min})")
        if self.n_grid < MIN_GRID:
            raise ValueError(f"n_grid must be >= {MIN_GRID}, got {self.n_grid}")

    @property
    def cooling(self):
        return np.linspace(self.T_max, self.T_min, self.n_grid)

    @property
    def heating(self):
        return self.cooling[::-1].copy()

    def refined(self):
        """Grid with every interval halved; it contains all nodes of this one."""
        return TemperatureGrid(self.T_max, self.T_min, 2 * self.n_grid - 1)

    @staticmethod
    def around(sigma, p, margin=15.0, n_grid=500):
        """
        Grid that brackets the complete loop at stress sigma with ``margin``
        kelvin to spare on both ends.
        """
        temps = Material.transformation_temperatures(sigma, p)
        return TemperatureGrid(
            max(temps["reverse_finish"], temps["forward_start"]) + margin,
            min(temps["forward_finish"], temps["reverse_start"]) - margin,
            n_grid,
        )

    @staticmethod
    def covering(sigmas, parameter_sets, margin=15.0, n_grid=500):
        """One grid wide enough for every (stress, parameters) combination."""
        grids = [TemperatureGrid.around(s, p, margin, n_grid) for s in sigmas for p in parameter_sets]
        return TemperatureGrid(max(g.T_max for g in grids), min(g.T_min for g in grids), n_grid)


@dataclasses.dataclass
class Branch:
    T: np.ndarray
    xi: np.ndarray
    eps_t: np.ndarray

    def __len__(self):
        return self.T.shape[0]

    def resample(self, temperatures):
        """Linear interpolation onto new temperatures (ends are held constant)."""
        temperatures = np.asarray(temperatures, dtype=float)
        order = np.argsort(self.T)
        t = self.T[order]
        return Branch(
            temperatures.copy(),
            np.interp(temperatures, t, self.xi[order]),
            np.interp(temperatures, t, self.eps_t[order]),
        )


class HysteresisLoop:
    """
    The transformation strain - temperature response at one constant stress.
    """

    branches = ("cooling", "heating")

    def __init__(self, stress, cooling, heating):
        self.stress = float(stress)
        self.cooling = cooling
        self.heating = heating

    @property
    def eps_vector(self):
        """Cooling then heating strains, the coordinates compared by loop_distance."""
        return np.concatenate([self.cooling.eps_t, self.heating.eps_t])

    @property
    def plateau(self):
        return float(self.cooling.eps_t[-1])

    def branch(self, name):
        if name not in self.branches:
            raise ValueError(f"unknown branch {name}, expected one of {self.branches}")
        return getattr(self, name)

    def same_grid(self, other):
        return (np.array_equal(self.cooling.T, other.cooling.T)
                and np.array_equal(self.heating.T, other.heating.T))

    def resample(self, cooling_T, heating_T=None):
        if heating_T is None:
            heating_T = cooling_T
        return HysteresisLoop(
            self.stress, self.cooling.resample(cooling_T), self.heating.resample(heating_T)
        )

    def to_frame(self):
        frames = []
        for name in self.branches:
            b = self.branch(name)
            frames.append(pd.DataFrame({"branch": name, "T_K": b.T, "xi": b.xi, "eps_t": b.eps_t}))
        return pd.concat(frames, ignore_index=True)

    @staticmethod
    def from_frame(frame, stress):
        branches = {}
        for name in HysteresisLoop.branches:
            sub = frame[frame["branch"] == name]
            eps = sub["eps_t"].to_numpy(dtype=float)
            xi = sub["xi"].to_numpy(dtype=float) if "xi" in sub else np.full_like(eps, np.nan)
            branches[name] = Branch(sub["T_K"].to_numpy(dtype=float), xi, eps)
        return HysteresisLoop(stress, branches["cooling"], branches["heating"])

    def save(self, path):
        """
        Write the loop as CSV: a '# stress_MPa=' line and then
        branch,T_K,xi,eps_t rows.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# stress_MPa={self.stress / MPA!r}\n")
            self.to_frame().to_csv(fh, index=False, float_format="%.17g")
        return path

    @staticmethod
    def load(path):
        from .Dataset import read_stress_header
        stress, frame = read_stress_header(path)
        return HysteresisLoop.from_frame(frame, stress)

    def plot(self, path, title=None, ax=None):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        own = ax is None
        if own:
            fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(self.cooling.T, self.cooling.eps_t, color="tab:blue", label="cooling")
        ax.plot(self.heating.T, self.heating.eps_t, color="tab:red", label="heating")
        ax.set_xlabel("Temperature (K)")
        ax.set_ylabel("Transformation strain")
        ax.set_title(title if title else f"{self.stress / MPA:g} MPa")
        ax.legend()
        if own:
            fig.tight_layout()
            fig.savefig(path, dpi=150)
            plt.close(fig)
        return path


def _bisect(fun, lo, hi):
    """
    Vectorized bisection for fun(x) = 0 on [lo, hi] elementwise. Stops per
    element when |fun| < PHI_TOLERANCE or the bracket is narrower than
    XI_TOLERANCE; at most MAX_BISECTIONS halvings.
    """
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    f_lo = fun(lo)
    f_hi = fun(hi)
    if np.any(f_lo * f_hi > 0):
        bad = np.flatnonzero(f_lo * f_hi > 0)
        raise RootBracketFailure(f"no sign change in transformation surface at grid points {bad.tolist()}")
    root = 0.5 * (lo + hi)
    active = np.ones(lo.shape, dtype=bool)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        root[active] = mid[active]
        done = (np.abs(f_mid) < PHI_TOLERANCE) | (hi - lo < XI_TOLERANCE)
        active &= ~done
        if not active.any():
            break
        move_lo = active & (np.sign(f_mid) == np.sign(f_lo))
        move_hi = active & ~move_lo
        lo[move_lo] = mid[move_lo]
        f_lo[move_lo] = f_mid[move_lo]
        hi[move_hi] = mid[move_hi]
    return root


def solve_branch(sigma, temperatures, direction, xi_start, c, p, lam_rev=None):
    """
    Martensite fraction along one branch of an isobaric path.

    Going forward, a grid point where Phi_fwd(xi_prev) > 0 advances xi to the
    root of Phi_fwd in [xi_prev, 1]; going back, Phi_rev(xi_prev) > 0 lowers xi
    to the root in [0, xi_prev]. Because Phi is monotone in xi, that root is
    the unconstrained root clipped by the running max (forward) or running
    min (reverse) of the path, which lets every grid point be solved at once.
    """
    temperatures = np.asarray(temperatures, dtype=float)

    def phi(xi):
        return Material.transformation_surface(sigma, temperatures, xi, direction, c, p, lam_rev)

    zeros = np.zeros_like(temperatures)
    ones = np.ones_like(temperatures)
    phi0 = phi(zeros)
    phi1 = phi(ones)
    root = np.empty_like(temperatures)
    if direction == FORWARD:
        # Phi_fwd decreases with xi
        root[phi0 <= 0] = 0.0
        root[phi1 >= 0] = 1.0
    else:
        # Phi_rev increases with xi
        root[phi1 <= 0] = 1.0
        root[phi0 >= 0] = 0.0
    inside = (phi0 * phi1 < 0)
    if inside.any():
        sub_t = temperatures[inside]

        def phi_sub(xi):
            return Material.transformation_surface(sigma, sub_t, xi, direction, c, p, lam_rev)

        root[inside] = _bisect(phi_sub, zeros[inside], ones[inside])
    if direction == FORWARD:
        return np.maximum.accumulate(np.maximum(root, xi_start))
    return np.minimum.accumulate(np.minimum(root, xi_start))


def simulate_isobaric_loop(sigma, grid, p):
    """
    Cool from grid.T_max to grid.T_min and heat back under constant stress.

    Args:
        sigma (float): applied stress, Pa
        grid (TemperatureGrid): temperature window and resolution
        p (MaterialParameters): material parameters

    Returns:
        HysteresisLoop
    """
    c = Material.derive_coefficients(p)
    h = float(Material.h_cur(abs(sigma), p))

    cooling_T = grid.cooling
    xi_cool = solve_branch(sigma, cooling_T, FORWARD, 0.0, c, p)
    if xi_cool[-1] < 1.0 - COMPLETION_TOLERANCE:
        raise IncompleteTransformation(
            f"forward transformation reached xi={xi_cool[-1]:.6g} at T_min={grid.T_min} K; lower T_min"
        )
    eps_cool = h * xi_cool

    lam_rev = Material.reversal_scale(eps_cool[-1], xi_cool[-1])
    heating_T = grid.heating
    xi_heat = solve_branch(sigma, heating_T, REVERSE, xi_cool[-1], c, p, lam_rev)
    eps_heat = lam_rev * xi_heat
    if abs(eps_heat[-1] - eps_cool[0]) > CLOSURE_TOLERANCE:
        raise IncompleteTransformation(
            f"loop does not close at T_max={grid.T_max} K (xi={xi_heat[-1]:.6g}); raise T_max"
        )
    return HysteresisLoop(
        sigma,
        Branch(cooling_T, xi_cool, eps_cool),
        Branch(heating_T, xi_heat, eps_heat),
    )


def loop_distance(a, b, grid=None):
    """
    Sum of squared differences between the strain coordinates of two loops.

    Loops on different temperature grids are first resampled onto ``grid``
    (a TemperatureGrid, or an array used for both branches).

    :raises GridMismatch: grids differ and no common grid was given
    """
    if grid is not None:
        if isinstance(grid, TemperatureGrid):
            a = a.resample(grid.cooling, grid.heating)
            b = b.resample(grid.cooling, grid.heating)
        else:
            a = a.resample(grid)
            b = b.resample(grid)
    elif not a.same_grid(b):
        raise GridMismatch("loops are on different temperature grids and no common grid was given")
    diff = a.eps_vector - b.eps_vector
    return float(np.dot(diff, diff))
