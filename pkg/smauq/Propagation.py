'''
Propagation of posterior parameter uncertainty to the transformation strain along the loop.

Two routes produce a ConfidenceBand on a fixed temperature grid:

    fosm   - first-order second-moment: the model is linearised at the posterior mean with
             finite-difference gradients, variance = g^T V g, band = mean -/+ 2 sigma
    direct - one loop per posterior sample, band from the ensemble (pointwise percentiles or
             whole curves ranked by plateau strain)

Bands are pointwise in temperature and the cooling and heating branches are kept apart.
'''

import logging
import multiprocessing as mp
import numpy as np
import pandas as pd

from .HysteresisLoop import (
    TemperatureGrid, simulate_isobaric_loop, IncompleteTransformation, RootBracketFailure,
)
from .Material import MPA, InfeasibleParameters
from .utils import FLOAT_FORMAT

logger = logging.getLogger(__name__)

FOSM = "fosm"
DIRECT = "direct"
METHODS = (FOSM, DIRECT)
BAND_MODES = ("pointwise", "curvewise")
MIN_DIRECT_SAMPLES = 200
RELATIVE_STEP = 1e-4
SIGMA_MULTIPLIER = 2.0


class GradientFailure(RuntimeError):
    pass


class TooFewSamples(ValueError):
    pass


class ConfidenceBand:
    """
    Mean, lower and upper transformation strain per grid temperature for
    each branch of one isobaric loop.
    """

    branches = ("cooling", "heating")

    def __init__(self, stress, method, coverage, branches):
        self.stress = float(stress)
        self.method = method
        self.coverage = float(coverage)
        self.data = {}
        self.drivers = None
        for name in self.branches:
            frame = branches[name]
            self.data[name] = {k: np.asarray(frame[k], dtype=float) for k in ("T", "mean", "lower", "upper")}
        self.validate()

    def validate(self):
        for name, b in self.data.items():
            if not (np.all(b["lower"] <= b["mean"]) and np.all(b["mean"] <= b["upper"])):
                raise ValueError(f"{name} band is not ordered lower <= mean <= upper")
        return self

    def branch(self, name):
        return self.data[name]

    def width(self, name):
        b = self.data[name]
        return b["upper"] - b["lower"]

    @staticmethod
    def from_vectors(stress, method, coverage, grid, mean, lower, upper):
        """Split (cooling then heating) vectors on ``grid`` into a band."""
        n = grid.n_grid
        temps = {"cooling": grid.cooling, "heating": grid.heating}
        branches = {}
        for i, name in enumerate(ConfidenceBand.branches):
            sl = slice(i * n, (i + 1) * n)
            branches[name] = {"T": temps[name], "mean": mean[sl], "lower": lower[sl], "upper": upper[sl]}
        return ConfidenceBand(stress, method, coverage, branches)

    def to_frame(self):
        frames = []
        for name in self.branches:
            b = self.data[name]
            frames.append(pd.DataFrame({
                "branch": name, "T_K": b["T"], "mean": b["mean"], "lower": b["lower"], "upper": b["upper"],
            }))
        return pd.concat(frames, ignore_index=True)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# stress_MPa={self.stress / MPA!r},method={self.method},coverage={self.coverage!r}\n")
            self.to_frame().to_csv(fh, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def load(path):
        with open(path, encoding="utf-8") as fh:
            meta = dict(item.split("=", 1) for item in fh.readline().lstrip("#").strip().split(","))
            frame = pd.read_csv(fh)
        branches = {}
        for name in ConfidenceBand.branches:
            sub = frame[frame["branch"] == name]
            branches[name] = {"T": sub["T_K"], "mean": sub["mean"], "lower": sub["lower"], "upper": sub["upper"]}
        return ConfidenceBand(float(meta["stress_MPa"]) * MPA, meta["method"], float(meta["coverage"]), branches)

    def __eq__(self, other):
        if not isinstance(other, ConfidenceBand):
            return NotImplemented
        return (
            self.stress == other.stress and self.method == other.method and self.coverage == other.coverage
            and all(np.array_equal(self.data[b][k], other.data[b][k])
                    for b in self.branches for k in ("T", "mean", "lower", "upper"))
        )

    def plot(self, path, data=None):
        """Mean curves with the shaded band per branch, optionally over measured points."""
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, color in zip(self.branches, ("tab:blue", "tab:red")):
            b = self.data[name]
            ax.fill_between(b["T"], b["lower"], b["upper"], color=color, alpha=0.3, linewidth=0)
            ax.plot(b["T"], b["mean"], color=color, label=name)
        if data is not None:
            ax.plot(data.cooling_T, data.cooling_eps, "k.", markersize=2)
            ax.plot(data.heating_T, data.heating_eps, "k.", markersize=2)
        ax.set_xlabel("Temperature (K)")
        ax.set_ylabel("Transformation strain")
        ax.set_title(f"{self.stress / MPA:g} MPa, {self.method}, {self.coverage:g}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return path


def fosm_variance(g, covariance):
    """g^T V g for one gradient (d,) or row-wise for a stack (m, d)."""
    g = np.asarray(g, dtype=float)
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    if g.ndim == 1:
        return float(g @ covariance @ g)
    return np.einsum("md,de,me->m", g, covariance, g)


def variance_contributions(g, covariance):
    """
    The double-sum form of the FOSM variance: terms g_i g_j V_ij, a (d, d)
    matrix per gradient, summing to g^T V g. Diagonal terms are the share of
    each parameter on its own, off-diagonal terms the share of correlations.
    """
    g = np.asarray(g, dtype=float)
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    if g.ndim == 1:
        return np.outer(g, g) * covariance
    return g[:, :, None] * g[:, None, :] * covariance[None, :, :]


def variance_drivers(g, covariance, names):
    """
    Share of the variance summed over the band carried by each parameter on
    its own, plus the share of all correlation terms together.
    """
    terms = variance_contributions(g, covariance)
    if terms.ndim == 3:
        terms = terms.sum(axis=0)
    total = float(terms.sum())
    shares = {name: 0.0 for name in names}
    shares["correlations"] = 0.0
    if total > 0:
        for i, name in enumerate(names):
            shares[name] = float(terms[i, i] / total)
        shares["correlations"] = float((total - np.trace(terms)) / total)
    return shares


def finite_difference_steps(mean, scale=None, relative=RELATIVE_STEP):
    """h_i = relative * max(|theta_i|, scale_i)"""
    mean = np.asarray(mean, dtype=float)
    scale = np.zeros_like(mean) if scale is None else np.asarray(scale, dtype=float)
    steps = relative * np.maximum(np.abs(mean), scale)
    return np.where(steps > 0, steps, relative)


def gradient(model_fn, mean, steps, lower=None, upper=None):
    """
    Central-difference gradient of a vector model at ``mean``, one column
    per parameter. Where a side would leave [lower, upper] or the model
    fails there, the one-sided difference on the other side is used.

    :return: (model value at mean, (m, d) gradient)
    :raises GradientFailure: both sides fail for some parameter
    """
    mean = np.asarray(mean, dtype=float)
    d = mean.shape[0]
    lower = np.full(d, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(d, np.inf) if upper is None else np.asarray(upper, dtype=float)
    center = np.asarray(model_fn(mean), dtype=float)
    columns = []
    for i in range(d):
        h = steps[i]
        plus = _perturbed(model_fn, mean, i, h, lower, upper)
        minus = _perturbed(model_fn, mean, i, -h, lower, upper)
        if plus is not None and minus is not None:
            columns.append((plus - minus) / (2.0 * h))
        elif plus is not None:
            columns.append((plus - center) / h)
        elif minus is not None:
            columns.append((center - minus) / h)
        else:
            raise GradientFailure(f"model fails on both sides of parameter {i} with step {h}")
    return center, np.column_stack(columns)


def _perturbed(model_fn, mean, i, h, lower, upper):
    theta = mean.copy()
    theta[i] += h
    if not lower[i] <= theta[i] <= upper[i]:
        return None
    try:
        return np.asarray(model_fn(theta), dtype=float)
    except (IncompleteTransformation, RootBracketFailure, InfeasibleParameters) as e:
        logger.debug("perturbed solve failed for parameter %d: %s", i, e)
        return None


def fosm_moments(model_fn, mean, covariance, steps=None, lower=None, upper=None):
    """
    First-order mean and variance of model_fn at the parameter mean.

    :return: (mean output, variance per output, gradient)
    """
    mean = np.asarray(mean, dtype=float)
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    if covariance.shape != (mean.shape[0], mean.shape[0]):
        raise ValueError(f"covariance shape {covariance.shape} does not match {mean.shape[0]} parameters")
    if not np.allclose(covariance, covariance.T, rtol=1e-10, atol=0):
        raise ValueError("covariance is not symmetric")
    if steps is None:
        steps = finite_difference_steps(mean, np.sqrt(np.clip(np.diag(covariance), 0, None)))
    value, g = gradient(model_fn, mean, steps, lower, upper)
    variance = np.clip(fosm_variance(g, covariance), 0.0, None)
    return value, variance, g


def loop_model(stress, grid, names, base):
    """theta -> concatenated cooling/heating strains on ``grid``."""
    def model(theta):
        return simulate_isobaric_loop(stress, grid, base.with_values(names, theta)).eps_vector
    return model


def fosm_band(mean, covariance, stress, grid, names, base, lower=None, upper=None, scale=None):
    """
    FOSM confidence band: eps_t at the mean -/+ 2 sqrt(g^T V g).

    Args:
        mean (array): posterior mean of the calibrated parameters
        covariance (array): their covariance V
        stress (float): Pa
        grid (TemperatureGrid): common grid for the band and all perturbed solves
        names (list): calibrated parameter names
        base (MaterialParameters): values of every other parameter
        lower, upper (array, optional): bounds the perturbations respect
        scale (array, optional): step scales, default the posterior SDs

    Returns:
        ConfidenceBand
    """
    mean = np.asarray(mean, dtype=float)
    if scale is None:
        scale = np.sqrt(np.clip(np.diag(np.atleast_2d(covariance)), 0, None))
    steps = finite_difference_steps(mean, scale)
    value, variance, g = fosm_moments(loop_model(stress, grid, names, base), mean, covariance,
                                      steps, lower, upper)
    half = SIGMA_MULTIPLIER * np.sqrt(variance)
    band = ConfidenceBand.from_vectors(stress, FOSM, 0.95, grid, value, value - half, value + half)
    band.drivers = variance_drivers(g, covariance, names)
    return band


def ensemble_band(values, coverage=0.95, mode="curvewise", ranking=None):
    """
    Band from an ensemble of curves, one row per member.

    pointwise: per column, the (1-coverage)/2 and (1+coverage)/2 percentiles
        with linear interpolation between order statistics.
    curvewise: members are ranked by ``ranking`` (default the last column),
        floor(n (1-coverage)/2) whole curves are dropped from each end and
        the band is the envelope of the rest.

    The mean is the column mean over all members, clipped into the band.

    :return: (mean, lower, upper)
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if not 0 < coverage < 1:
        raise ValueError(f"coverage must lie in (0, 1), got {coverage}")
    if mode not in BAND_MODES:
        raise ValueError(f"band mode must be one of {BAND_MODES}, got {mode}")
    n = values.shape[0]
    mean = values.mean(axis=0)
    tail = 0.5 * (1.0 - coverage)
    if mode == "pointwise":
        lower = np.percentile(values, 100.0 * tail, axis=0)
        upper = np.percentile(values, 100.0 * (1.0 - tail), axis=0)
    else:
        key = values[:, -1] if ranking is None else np.asarray(ranking, dtype=float)
        order = np.argsort(key, kind="stable")
        drop = int(np.floor(n * tail))
        kept = values[order[drop:n - drop]]
        lower = kept.min(axis=0)
        upper = kept.max(axis=0)
    mean = np.clip(mean, lower, upper)
    return mean, lower, upper


def _simulate_sample(args):
    theta, stress, grid, names, base = args
    try:
        return simulate_isobaric_loop(stress, grid, base.with_values(names, theta)).eps_vector
    except (IncompleteTransformation, RootBracketFailure, InfeasibleParameters) as e:
        logger.debug("sample solve failed: %s", e)
        return None


def direct_band(samples, stress, grid, names, base, coverage=0.95, mode="curvewise", jobs=1):
    """
    Direct band: one loop per posterior sample, reduced with ensemble_band.
    Curves are ranked by their plateau strain (the strain at the end of
    cooling) in curvewise mode.

    :raises TooFewSamples: fewer than 200 usable samples
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < MIN_DIRECT_SAMPLES:
        raise TooFewSamples(f"direct propagation needs >= {MIN_DIRECT_SAMPLES} samples, got {samples.shape[0]}")
    tasks = [(theta, stress, grid, names, base) for theta in samples]
    if jobs > 1:
        with mp.Pool(jobs) as workers:
            curves = workers.map(_simulate_sample, tasks, chunksize=max(1, len(tasks) // (8 * jobs)))
    else:
        curves = [_simulate_sample(t) for t in tasks]
    usable = [c for c in curves if c is not None]
    if len(usable) < len(curves):
        logger.warning("%d of %d posterior samples could not be solved and were skipped",
                       len(curves) - len(usable), len(curves))
    if len(usable) < MIN_DIRECT_SAMPLES:
        raise TooFewSamples(f"only {len(usable)} samples could be solved, {MIN_DIRECT_SAMPLES} needed")
    values = np.vstack(usable)
    plateau = values[:, grid.n_grid - 1]
    mean, lower, upper = ensemble_band(values, coverage, mode, ranking=plateau)
    return ConfidenceBand.from_vectors(stress, DIRECT, coverage, grid, mean, lower, upper)


def band_grid(stress, parameter_sets, margin=15.0, n_grid=500):
    """A grid wide enough for every parameter set at this stress."""
    return TemperatureGrid.covering([stress], parameter_sets, margin, n_grid)
