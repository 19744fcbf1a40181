'''
Material.py holds the uniaxial reduction of the smooth-hardening SMA constitutive model:
the material parameters a user screens and calibrates, the model coefficients derived from
them, and the scalar constitutive functions (maximum transformation strain, hardening,
driving force, critical force and the transformation surface) the loop solver is built on.

All quantities are SI (Pa, K, 1/Pa, Pa/K). Config files use engineering units and are
converted once through MaterialParameters.from_engineering.

Thermal expansion and specific heat differences are taken as zero, so T0 does not enter
the driving force; Poisson ratios have no role in one dimension.
'''

import dataclasses
import numpy as np

FORWARD = "forward"
REVERSE = "reverse"
ELASTIC = "elastic"
DIRECTIONS = (FORWARD, REVERSE, ELASTIC)

# the 14 properties that can be screened by the factorial design / calibrated
SCREENABLE = (
    "E_A", "E_M", "M_s", "M_f", "A_s", "A_f", "C_A", "C_M",
    "H_sat", "k", "n1", "n2", "n3", "n4",
)
TEMPERATURES = ("M_f", "M_s", "A_s", "A_f")

# name -> (engineering unit, multiplier from engineering unit to SI)
UNITS = {
    "E_A": ("GPa", 1e9),
    "E_M": ("GPa", 1e9),
    "M_s": ("K", 1.0),
    "M_f": ("K", 1.0),
    "A_s": ("K", 1.0),
    "A_f": ("K", 1.0),
    "C_A": ("MPa/K", 1e6),
    "C_M": ("MPa/K", 1e6),
    "H_sat": ("-", 1.0),
    "k": ("1/MPa", 1e-6),
    "n1": ("-", 1.0),
    "n2": ("-", 1.0),
    "n3": ("-", 1.0),
    "n4": ("-", 1.0),
    "T0": ("K", 1.0),
    "sigma_star": ("MPa", 1e6),
}

MPA = 1e6


class InfeasibleParameters(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class UndefinedDirection(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class MaterialParameters:
    """
    The model input vector. sigma_star is the stress at which the
    Clausius-Clapeyron slopes C_A and C_M are matched when the model
    coefficients are derived; it must be positive because the maximum
    transformation strain vanishes at zero stress.
    """
    E_A: float
    E_M: float
    M_s: float
    M_f: float
    A_s: float
    A_f: float
    C_A: float
    C_M: float
    H_sat: float
    k: float
    n1: float = 1.0
    n2: float = 1.0
    n3: float = 1.0
    n4: float = 1.0
    T0: float = 300.0
    sigma_star: float = 200.0 * MPA

    def problems(self):
        """
        List every violated invariant as a human readable string. An empty
        list means the parameters are feasible.
        """
        found = []
        for name in ("E_A", "E_M", "C_A", "C_M", "k", "T0", "sigma_star"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                found.append(f"{name} must be > 0, got {value}")
        for name in TEMPERATURES:
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                found.append(f"{name} must be a positive temperature, got {value}")
        if not (self.M_f < self.M_s < self.A_s < self.A_f):
            found.append(
                f"transformation temperatures must satisfy M_f < M_s < A_s < A_f, got "
                f"M_f={self.M_f}, M_s={self.M_s}, A_s={self.A_s}, A_f={self.A_f}"
            )
        if not (0 < self.H_sat < 0.2):
            found.append(f"H_sat must lie in (0, 0.2), got {self.H_sat}")
        for name in ("n1", "n2", "n3", "n4"):
            value = getattr(self, name)
            if not (0 < value <= 1):
                found.append(f"{name} must lie in (0, 1], got {value}")
        return found

    def is_feasible(self):
        return not self.problems()

    def validate(self):
        found = self.problems()
        if found:
            raise InfeasibleParameters("; ".join(found))
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_values(self, names, values):
        return dataclasses.replace(self, **{n: float(v) for n, v in zip(names, values)})

    def values(self, names):
        return np.array([getattr(self, n) for n in names], dtype=float)

    def as_dict(self):
        return dataclasses.asdict(self)

    def to_engineering(self):
        return {name: value / UNITS[name][1] for name, value in self.as_dict().items()}

    @staticmethod
    def from_engineering(values, base=None):
        """
        Build parameters from a dict in engineering units (GPa, MPa/K, 1/MPa,
        MPa). Missing keys come from ``base`` when given.
        """
        unknown = set(values) - set(UNITS)
        if unknown:
            raise KeyError("unknown material parameter(s): " + ", ".join(sorted(unknown)))
        si = {name: float(value) * UNITS[name][1] for name, value in values.items()}
        if base is not None:
            return dataclasses.replace(base, **si)
        return MaterialParameters(**si)


def to_si(name, value):
    return value * UNITS[name][1]


def to_engineering(name, value):
    return value / UNITS[name][1]


@dataclasses.dataclass(frozen=True)
class DerivedCoefficients:
    rho_ds0: float
    rho_du0: float
    a1: float
    a2: float
    a3: float
    Y0: float
    D: float
    dS: float


def h_cur(sigma_bar, p):
    """
    Maximum transformation strain at effective stress sigma_bar:
    H_sat (1 - exp(-k sigma_bar)).
    """
    return p.H_sat * -np.expm1(-p.k * np.asarray(sigma_bar, dtype=float))


def dh_cur(sigma_bar, p):
    return p.H_sat * p.k * np.exp(-p.k * np.asarray(sigma_bar, dtype=float))


def derive_coefficients(p):
    """
    Solve for the model coefficients that put the zero-stress transformation
    surface through the four transformation temperatures and reproduce the
    stress-temperature slopes C_M (forward start) and C_A (reverse finish) at
    sigma_star. With X = H(s*) + s* H'(s*) and Z = s* dS:

        rho_ds0 = -2 C_A C_M (X + Z) / (C_A + C_M)
        D       = (C_M - C_A)(X + Z) / ((C_A + C_M) X)
        a1      = rho_ds0 (M_f - M_s)
        a2      = rho_ds0 (A_s - A_f)
        a3      = -a1/4 (1 + 1/(n1+1) - 1/(n2+1)) + a2/4 (1 + 1/(n3+1) - 1/(n4+1))
        rho_du0 = rho_ds0 (M_s + A_f) / 2
        Y0      = rho_ds0 (M_s - A_f) / 2 - a3

    a3 makes the hardening energy return to its start value over a full
    forward-reverse cycle; the endpoint conditions hold for any a3.

    :param p: MaterialParameters
    :return: DerivedCoefficients
    :raises InfeasibleParameters: if p violates its invariants
    """
    p.validate()
    d_s = 1.0 / p.E_M - 1.0 / p.E_A
    s = p.sigma_star
    x = float(h_cur(s, p) + s * dh_cur(s, p))
    z = s * d_s
    if not (x + z > 0):
        raise InfeasibleParameters(
            f"forward transformation would not be exothermic at sigma_star (X + Z = {x + z})"
        )
    rho_ds0 = -2.0 * p.C_A * p.C_M * (x + z) / (p.C_A + p.C_M)
    d = (p.C_M - p.C_A) * (x + z) / ((p.C_A + p.C_M) * x)
    a1 = rho_ds0 * (p.M_f - p.M_s)
    a2 = rho_ds0 * (p.A_s - p.A_f)
    a3 = (-0.25 * a1 * (1.0 + 1.0 / (p.n1 + 1.0) - 1.0 / (p.n2 + 1.0))
          + 0.25 * a2 * (1.0 + 1.0 / (p.n3 + 1.0) - 1.0 / (p.n4 + 1.0)))
    rho_du0 = 0.5 * rho_ds0 * (p.M_s + p.A_f)
    y0 = 0.5 * rho_ds0 * (p.M_s - p.A_f) - a3
    return DerivedCoefficients(
        rho_ds0=rho_ds0, rho_du0=rho_du0, a1=a1, a2=a2, a3=a3, Y0=y0, D=d, dS=d_s
    )


def hardening(xi, direction, c, p):
    """
    Smooth hardening function f^t(xi) for the given transformation direction.
    0**n is taken as its limit 0 for n in (0, 1].
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0) or np.any(xi > 1) or np.any(np.isnan(xi)):
        raise OutOfRange(f"martensite fraction must lie in [0, 1], got {xi}")
    if direction == FORWARD:
        return 0.5 * c.a1 * (1.0 + xi ** p.n1 - (1.0 - xi) ** p.n2) + c.a3
    if direction == REVERSE:
        return 0.5 * c.a2 * (1.0 + xi ** p.n3 - (1.0 - xi) ** p.n4) - c.a3
    raise ValueError(f"hardening is defined for forward or reverse, got {direction}")


def driving_force(sigma, T, c, p):
    """
    Gibbs free energy difference between martensite and austenite,
    p = sigma^2 dS / 2 + rho_ds0 T - rho_du0.
    """
    sigma = np.asarray(sigma, dtype=float)
    return 0.5 * sigma ** 2 * c.dS + c.rho_ds0 * np.asarray(T, dtype=float) - c.rho_du0


def reversal_scale(eps_t, xi):
    """
    Reverse transformation direction eps_t / xi, fixed at the reversal point.
    """
    if xi <= 0:
        raise UndefinedDirection("reverse transformation direction is undefined at xi = 0")
    return eps_t / xi


def _direction_scale(sigma, direction, lam_rev, p):
    if direction == FORWARD:
        return h_cur(np.abs(sigma), p)
    if direction == REVERSE:
        if lam_rev is None:
            raise UndefinedDirection("reverse transformation needs the reversal scale eps_t / xi")
        return lam_rev
    raise ValueError(f"expected forward or reverse, got {direction}")


def critical_force(sigma, direction, lam_rev, c, p):
    """
    Stress-dependent threshold Y = Y0 + D sigma Lambda, with Lambda = H^cur
    going forward and the frozen reversal scale going back.
    """
    lam = _direction_scale(sigma, direction, lam_rev, p)
    return c.Y0 + c.D * np.asarray(sigma, dtype=float) * lam


def thermodynamic_force(sigma, T, xi, direction, c, p, lam_rev=None):
    """pi^t = sigma Lambda + p(sigma, T) - f^t(xi)"""
    lam = _direction_scale(sigma, direction, lam_rev, p)
    return (np.asarray(sigma, dtype=float) * lam + driving_force(sigma, T, c, p)
            - hardening(xi, direction, c, p))


def transformation_surface(sigma, T, xi, direction, c, p, lam_rev=None):
    """
    Phi_fwd = pi - Y_fwd and Phi_rev = -pi - Y_rev. Transformation in the
    given direction proceeds while Phi is held at zero.
    """
    pi = thermodynamic_force(sigma, T, xi, direction, c, p, lam_rev)
    y = critical_force(sigma, direction, lam_rev, c, p)
    if direction == FORWARD:
        return pi - y
    return -pi - y


def transformation_temperatures(sigma, p, c=None):
    """
    Temperatures at which transformation starts and finishes under a
    constant stress, for a complete (major) loop. Phi is affine in T, so
    each one is the root of a linear equation.

    :return: dict with forward_start, forward_finish, reverse_start, reverse_finish (K)
    """
    if c is None:
        c = derive_coefficients(p)
    h = float(h_cur(abs(sigma), p))
    elastic = 0.5 * sigma ** 2 * c.dS

    def forward_at(xi):
        f = float(hardening(xi, FORWARD, c, p))
        return (c.rho_du0 + f + c.Y0 + (c.D - 1.0) * sigma * h - elastic) / c.rho_ds0

    def reverse_at(xi):
        f = float(hardening(xi, REVERSE, c, p))
        return (c.rho_du0 + f - c.Y0 - (1.0 + c.D) * sigma * h - elastic) / c.rho_ds0

    return {
        "forward_start": forward_at(0.0),
        "forward_finish": forward_at(1.0),
        "reverse_start": reverse_at(1.0),
        "reverse_finish": reverse_at(0.0),
    }
