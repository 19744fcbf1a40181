'''
Calibration.py implements the Bayesian calibration of the selected material parameters
against isobaric datasets: the prior, the Gaussian likelihood built on the loop distance,
an adaptive random-walk Metropolis-Hastings sampler with an exact inverse-gamma Gibbs update
of the noise variance, burn-in detection and the posterior summaries.

The sampler does not know about SMAs. It drives any target object that provides

    in_support(theta) -> bool
    residuals(theta) -> array, or None when the model cannot be evaluated
    log_likelihood(residuals, sigma2) -> float
    updates_variance -> bool (whether sigma2 gets a Gibbs update)

SmaLikelihood is the target used by the pipeline.
'''

import dataclasses
import logging
import math
import os
import numpy as np
import pandas as pd
import scipy.stats

from . import numerics
from .numerics import GaussianSummary
from .HysteresisLoop import simulate_isobaric_loop, IncompleteTransformation, RootBracketFailure
from .Material import InfeasibleParameters, derive_coefficients
from .utils import FLOAT_FORMAT, write_json, read_json, file_operations

logger = logging.getLogger(__name__)

RESIDUAL_MODES = ("scalar", "pointwise")
MIN_BURN_IN_LENGTH = 1000


class NoPlateau(RuntimeError):
    pass


class ChainAborted(RuntimeError):
    pass


class PriorSpec:
    """
    Box prior over the calibrated parameters, uniform by default. When
    ``gaussian`` is given the density inside the box is that normal
    (a truncated Gaussian prior, used for sequential updating).
    a0 and b0 are the inverse-gamma hyper-prior of the noise variance.
    """

    def __init__(self, names, lower, upper, initial, a0=1e-3, b0=1e-3, gaussian=None):
        self.names = list(names)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.initial = np.asarray(initial, dtype=float)
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.gaussian = gaussian
        d = len(self.names)
        for name, arr in (("lower", self.lower), ("upper", self.upper), ("initial", self.initial)):
            if arr.shape != (d,):
                raise numerics.DimensionMismatch(f"{name} has shape {arr.shape}, expected ({d},)")
        for i, name in enumerate(self.names):
            if not self.lower[i] < self.initial[i] < self.upper[i]:
                raise ValueError(
                    f"{name}: need lower < initial < upper, got "
                    f"{self.lower[i]} < {self.initial[i]} < {self.upper[i]}"
                )
        if not (self.a0 > 0 and self.b0 > 0):
            raise numerics.InvalidHyperparameter(f"a0 and b0 must be > 0, got ({self.a0}, {self.b0})")
        self._density = None
        if gaussian is not None:
            if gaussian.dimension != d:
                raise numerics.DimensionMismatch("gaussian prior dimension does not match the parameters")
            numerics.cholesky(gaussian.covariance)
            self._density = scipy.stats.multivariate_normal(gaussian.mean, gaussian.covariance)

    @property
    def dimension(self):
        return len(self.names)

    @property
    def initial_covariance(self):
        """V0 = diag((0.01 (upper - lower))^2)"""
        return np.diag((0.01 * (self.upper - self.lower)) ** 2)

    def in_bounds(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def log_density(self, theta):
        """Unnormalized log prior; -inf outside the box."""
        if not self.in_bounds(theta):
            return -np.inf
        if self._density is None:
            return 0.0
        return float(self._density.logpdf(theta))

    def as_gaussian(self):
        """The prior as a normal: the Gaussian term itself, or the moments of the uniform box."""
        if self.gaussian is not None:
            return self.gaussian
        width = self.upper - self.lower
        return GaussianSummary(0.5 * (self.lower + self.upper), np.diag(width ** 2 / 12.0), self.names)

    def with_gaussian(self, gaussian, initial=None):
        if initial is None:
            initial = np.clip(gaussian.mean, self.lower, self.upper)
        return PriorSpec(self.names, self.lower, self.upper, initial, self.a0, self.b0, gaussian)

    def serialize(self):
        return {
            "names": self.names,
            "lower": self.lower,
            "upper": self.upper,
            "initial": self.initial,
            "a0": self.a0,
            "b0": self.b0,
            "gaussian": self.gaussian.serialize() if self.gaussian is not None else None,
        }

    @staticmethod
    def deserialize(data):
        gaussian = GaussianSummary.deserialize(data["gaussian"]) if data.get("gaussian") else None
        return PriorSpec(data["names"], data["lower"], data["upper"], data["initial"],
                         data["a0"], data["b0"], gaussian)


def gaussian_log_likelihood(residuals, sigma2):
    """sum over residuals of -r^2 / (2 sigma2) - ln(2 pi sigma2) / 2"""
    if not sigma2 > 0:
        raise numerics.InvalidHyperparameter(f"sigma2 must be > 0, got {sigma2}")
    r = np.asarray(residuals, dtype=float)
    return float(-0.5 * np.dot(r, r) / sigma2 - 0.5 * r.shape[0] * math.log(2.0 * math.pi * sigma2))


class SmaLikelihood:
    """
    Gaussian likelihood of the calibrated parameters given isobaric datasets.

    In scalar mode each dataset contributes one residual, the squared loop
    distance between model and measurement (compared with zero). In
    pointwise mode every measured point contributes its own strain
    difference.
    """

    updates_variance = True
    max_warnings = 10

    def __init__(self, names, base, datasets, grid=None, n_grid=500, margin=15.0, residual_mode="scalar"):
        if residual_mode not in RESIDUAL_MODES:
            raise ValueError(f"residual_mode must be one of {RESIDUAL_MODES}, got {residual_mode}")
        self.names = list(names)
        self.base = base
        self.datasets = list(datasets)
        self.grid = grid
        self.n_grid = n_grid
        self.margin = margin
        self.residual_mode = residual_mode
        self.failures = 0

    def parameters(self, theta):
        return self.base.with_values(self.names, theta)

    def in_support(self, theta):
        p = self.parameters(theta)
        if p.problems():
            return False
        try:
            derive_coefficients(p)
        except InfeasibleParameters:
            return False
        return True

    def simulate(self, theta):
        p = self.parameters(theta)
        loops = []
        for dataset in self.datasets:
            grid = self.grid if self.grid is not None else dataset.model_grid(p, self.n_grid, self.margin)
            loops.append(simulate_isobaric_loop(dataset.stress, grid, p))
        return loops

    def residuals(self, theta):
        try:
            loops = self.simulate(theta)
        except (IncompleteTransformation, RootBracketFailure, InfeasibleParameters) as e:
            self.failures += 1
            if self.failures <= self.max_warnings:
                logger.warning("model evaluation failed, treated as rejection: %s", e)
            else:
                logger.debug("model evaluation failed, treated as rejection: %s", e)
            return None
        if self.residual_mode == "scalar":
            return np.array([d.squared_distance(loop) for d, loop in zip(self.datasets, loops)])
        return np.concatenate([d.residuals(loop) for d, loop in zip(self.datasets, loops)])

    def log_likelihood(self, residuals, sigma2):
        return gaussian_log_likelihood(residuals, sigma2)


def log_likelihood(theta, sigma2, datasets, grid, names, base, prior=None, residual_mode="scalar"):
    """
    Log-likelihood of theta (values of ``names``, the rest from ``base``)
    given the datasets, with noise variance sigma2.

    Returns -inf when theta leaves the prior box, violates the temperature
    ordering, or the model cannot be solved.
    """
    target = SmaLikelihood(names, base, datasets, grid=grid, residual_mode=residual_mode)
    if prior is not None and not prior.in_bounds(theta):
        return -np.inf
    if not target.in_support(theta):
        return -np.inf
    residuals = target.residuals(theta)
    if residuals is None:
        return -np.inf
    return target.log_likelihood(residuals, sigma2)


@dataclasses.dataclass
class ChainState:
    theta: np.ndarray
    sigma2: float
    residuals: np.ndarray
    loglik: float
    log_prior: float = 0.0


def mh_step(state, proposal, target, prior, rng):
    """
    One Metropolis-Hastings update of theta at fixed sigma2.

    The candidate is drawn from a normal centred at the current theta with
    the proposal covariance. The proposal is symmetric, so the acceptance
    ratio is the posterior ratio; candidates outside the prior box or the
    target's support are rejected without evaluating the model.

    :param state: ChainState
    :param proposal: GaussianSummary whose covariance is used
    :return: (new ChainState, accepted)
    """
    candidate = numerics.mvn_sample(GaussianSummary(state.theta, proposal.covariance), rng)
    log_u = math.log(1.0 - rng.uniform())
    log_prior = prior.log_density(candidate)
    if not np.isfinite(log_prior) or not target.in_support(candidate):
        return state, False
    residuals = target.residuals(candidate)
    if residuals is None:
        return state, False
    loglik = target.log_likelihood(residuals, state.sigma2)
    log_ratio = (loglik + log_prior) - (state.loglik + state.log_prior)
    if log_ratio >= 0 or log_u < log_ratio:
        return ChainState(candidate, state.sigma2, residuals, loglik, log_prior), True
    return state, False


def gibbs_update_sigma2(residuals, a0, b0, rng):
    """
    Exact conditional draw of the noise variance,
    IG(a0 + n/2, b0 + sum(r^2)/2) with n the number of residuals.
    """
    r = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    return numerics.inverse_gamma_sample(a0 + 0.5 * r.shape[0], b0 + 0.5 * float(np.dot(r, r)), rng)


def proposal_scale(dimension):
    """s_d = 2.4^2 / d"""
    return 2.4 ** 2 / dimension


def adapt_proposal(samples, initial_covariance, eps=1e-10):
    """
    Adaptive Metropolis proposal s_d Cov(samples) + s_d eps I.

    Falls back to the initial covariance while fewer than two distinct
    samples exist or if the adapted matrix is not positive definite.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = samples.shape[1]
    initial = GaussianSummary(np.zeros(d), initial_covariance)
    if samples.shape[0] < 2 or np.all(samples == samples[0]):
        return initial
    s_d = proposal_scale(d)
    covariance = np.atleast_2d(np.cov(samples, rowvar=False))
    covariance = s_d * 0.5 * (covariance + covariance.T) + s_d * eps * np.eye(d)
    try:
        numerics.cholesky(covariance)
    except numerics.NotPositiveDefinite:
        logger.warning("adapted proposal covariance is not positive definite, keeping V0")
        return initial
    return GaussianSummary(samples.mean(axis=0), covariance)


class RunningMoments:
    """
    Recursive sample mean and covariance, updated in blocks so the adaptive
    proposal never has to revisit the whole chain.
    """

    def __init__(self, dimension):
        self.n = 0
        self.mean = np.zeros(dimension)
        self.m2 = np.zeros((dimension, dimension))

    def update(self, block):
        block = np.atleast_2d(block)
        nb = block.shape[0]
        if nb == 0:
            return self
        block_mean = block.mean(axis=0)
        centered = block - block_mean
        block_m2 = centered.T @ centered
        delta = block_mean - self.mean
        total = self.n + nb
        self.m2 = self.m2 + block_m2 + np.outer(delta, delta) * self.n * nb / total
        self.mean = self.mean + delta * nb / total
        self.n = total
        return self

    @property
    def covariance(self):
        return self.m2 / (self.n - 1)


@dataclasses.dataclass
class McmcSettings:
    n_steps: int = 200000
    adapt_interval: int = 500
    adapt_start: int = 1000
    eps: float = 1e-10
    sigma2_initial: float = None
    residual_mode: str = "scalar"
    checkpoint_interval: int = 10000
    log_interval: int = 10000
    burn_in_window: float = 0.1
    burn_in_tol: float = 0.1
    burn_in_fraction: float = 0.3
    histogram_bins: int = 30

    def problems(self):
        found = []
        for name in ("n_steps", "checkpoint_interval", "log_interval"):
            if getattr(self, name) < 0:
                found.append((name, "must be >= 0"))
        for name in ("adapt_interval", "histogram_bins"):
            if getattr(self, name) < 1:
                found.append((name, "must be >= 1"))
        if self.adapt_start < 2:
            found.append(("adapt_start", "must be >= 2"))
        if self.sigma2_initial is not None and not self.sigma2_initial > 0:
            found.append(("sigma2_initial", "must be > 0 or null"))
        if self.residual_mode not in RESIDUAL_MODES:
            found.append(("residual_mode", f"must be one of {', '.join(RESIDUAL_MODES)}"))
        for name in ("burn_in_window", "burn_in_fraction"):
            if not 0 < getattr(self, name) < 1:
                found.append((name, "must lie in (0, 1)"))
        if not self.burn_in_tol > 0:
            found.append(("burn_in_tol", "must be > 0"))
        if not self.eps > 0:
            found.append(("eps", "must be > 0"))
        return found

    def as_dict(self):
        return dataclasses.asdict(self)


class Chain:
    """
    The ordered samples theta^0 ... theta^N of a run with the parallel noise
    variances and acceptance flags. Row 0 is the starting state.
    """

    def __init__(self, names, theta, sigma2, accepted, seed=None, adapt_checkpoints=None,
                 burn_in=None, settings=None, solver_failures=0, config=None):
        self.names = list(names)
        self.theta = np.atleast_2d(np.asarray(theta, dtype=float))
        self.sigma2 = np.asarray(sigma2, dtype=float)
        self.accepted = np.asarray(accepted, dtype=bool)
        self.seed = seed
        self.adapt_checkpoints = list(adapt_checkpoints) if adapt_checkpoints else []
        self.burn_in = burn_in
        self.settings = settings if settings else {}
        self.solver_failures = solver_failures
        self.config = config

    def __len__(self):
        return self.theta.shape[0]

    @property
    def n_steps(self):
        return len(self) - 1

    def acceptance_rate(self, start=1):
        flags = self.accepted[max(start, 1):]
        return float(flags.mean()) if flags.size else float("nan")

    @property
    def post_adaptation_acceptance_rate(self):
        if not self.adapt_checkpoints:
            return float("nan")
        return self.acceptance_rate(self.adapt_checkpoints[0] + 1)

    def samples(self, burn_in=None):
        if burn_in is None:
            burn_in = self.burn_in if self.burn_in is not None else 0
        return self.theta[burn_in:]

    def truncated(self, length):
        return Chain(self.names, self.theta[:length], self.sigma2[:length], self.accepted[:length],
                     self.seed, [c for c in self.adapt_checkpoints if c < length], self.burn_in,
                     self.settings, self.solver_failures, self.config)

    def to_frame(self):
        frame = pd.DataFrame(self.theta, columns=self.names)
        frame.insert(0, "step", np.arange(len(self)))
        frame["sigma2"] = self.sigma2
        frame["accepted"] = self.accepted.astype(int)
        return frame

    @staticmethod
    def sidecar_path(path):
        return os.path.splitext(path)[0] + ".json"

    @property
    def json_repr(self):
        return {
            "seed": self.seed,
            "names": self.names,
            "settings": self.settings,
            "adapt_checkpoints": self.adapt_checkpoints,
            "acceptance_rate": self.acceptance_rate(),
            "post_adaptation_acceptance_rate": self.post_adaptation_acceptance_rate,
            "burn_in": self.burn_in,
            "solver_failures": self.solver_failures,
            "config": self.config,
        }

    def save(self, path):
        """Chain CSV plus a JSON sidecar next to it; both written atomically."""
        tmp = path + ".tmp"
        self.to_frame().to_csv(tmp, index=False, float_format=FLOAT_FORMAT)
        file_operations["move"](tmp, path)
        write_json(self.json_repr, self.sidecar_path(path))
        return path

    @staticmethod
    def load(path):
        frame = pd.read_csv(path)
        sidecar = Chain.sidecar_path(path)
        meta = read_json(sidecar) if os.path.exists(sidecar) else {}
        names = meta.get("names") or [c for c in frame.columns if c not in ("step", "sigma2", "accepted")]
        return Chain(
            names,
            frame[names].to_numpy(dtype=float),
            frame["sigma2"].to_numpy(dtype=float),
            frame["accepted"].to_numpy(dtype=int).astype(bool),
            seed=meta.get("seed"),
            adapt_checkpoints=meta.get("adapt_checkpoints"),
            burn_in=meta.get("burn_in"),
            settings=meta.get("settings"),
            solver_failures=meta.get("solver_failures", 0),
            config=meta.get("config"),
        )

    def trace_figure(self, path, burn_in=None):
        """Cumulative mean of every parameter along the chain."""
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        d = len(self.names)
        fig, axes = plt.subplots(d, 1, figsize=(7, 1.8 * d), sharex=True, squeeze=False)
        steps = np.arange(1, len(self) + 1)
        cumulative = np.cumsum(self.theta, axis=0) / steps[:, None]
        burn_in = self.burn_in if burn_in is None else burn_in
        for i, name in enumerate(self.names):
            ax = axes[i, 0]
            ax.plot(steps - 1, cumulative[:, i], linewidth=1)
            if burn_in is not None:
                ax.axvline(burn_in, color="k", linestyle="--", linewidth=1)
            ax.set_ylabel(name)
        axes[-1, 0].set_xlabel("step")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return path


def run_chain(prior, target, settings, seed, checkpoint_path=None):
    """
    Adaptive Metropolis-within-Gibbs: each step is an MH update of theta at
    the current sigma2 followed, when the target has residuals, by an exact
    Gibbs draw of sigma2 given theta. The run is a deterministic function
    of the seed.

    Args:
        prior (PriorSpec): bounds, start and hyper-prior
        target: the likelihood object (see the module docstring)
        settings (McmcSettings): run length, adaptation and checkpointing
        seed (int or SeedSequence): random seed
        checkpoint_path (str, optional): chain CSV rewritten every
            settings.checkpoint_interval steps

    Returns:
        Chain

    Raises:
        ChainAborted: a checkpoint could not be written
        InfeasibleParameters: the starting point is outside the support
    """
    rng = np.random.default_rng(seed)
    d = prior.dimension
    theta0 = prior.initial.copy()
    if not (prior.in_bounds(theta0) and target.in_support(theta0)):
        raise InfeasibleParameters(f"initial parameters {theta0.tolist()} are outside the support")
    residuals = target.residuals(theta0)
    if residuals is None:
        raise InfeasibleParameters(f"the model cannot be solved at the initial parameters {theta0.tolist()}")
    residuals = np.asarray(residuals, dtype=float)
    if settings.sigma2_initial is not None:
        sigma2 = settings.sigma2_initial
    elif residuals.size and target.updates_variance:
        sigma2 = max(float(np.mean(residuals ** 2)), np.finfo(float).tiny)
    else:
        sigma2 = 1.0
    state = ChainState(theta0, sigma2, residuals, target.log_likelihood(residuals, sigma2),
                       prior.log_density(theta0))

    n = settings.n_steps
    thetas = np.empty((n + 1, d))
    sigma2s = np.empty(n + 1)
    accepted = np.zeros(n + 1, dtype=bool)
    thetas[0], sigma2s[0], accepted[0] = state.theta, state.sigma2, True

    initial_covariance = prior.initial_covariance
    proposal = GaussianSummary(np.zeros(d), initial_covariance)
    moments = RunningMoments(d)
    checkpoints = []
    chain = Chain(prior.names, thetas[:1], sigma2s[:1], accepted[:1], seed=_seed_repr(seed),
                  settings=settings.as_dict())

    for step in range(1, n + 1):
        state, ok = mh_step(state, proposal, target, prior, rng)
        if target.updates_variance and state.residuals.size:
            sigma2 = gibbs_update_sigma2(state.residuals, prior.a0, prior.b0, rng)
            state = ChainState(state.theta, sigma2, state.residuals,
                               target.log_likelihood(state.residuals, sigma2), state.log_prior)
        thetas[step], sigma2s[step], accepted[step] = state.theta, state.sigma2, ok

        if step >= settings.adapt_start and step % settings.adapt_interval == 0:
            moments.update(thetas[moments.n:step + 1])
            proposal = _adapted(moments, initial_covariance, settings.eps, proposal)
            checkpoints.append(step)
        if settings.log_interval and step % settings.log_interval == 0:
            logger.info("step %d/%d, acceptance %.3f", step, n, accepted[1:step + 1].mean())
        if checkpoint_path and settings.checkpoint_interval and step % settings.checkpoint_interval == 0:
            _checkpoint(Chain(prior.names, thetas[:step + 1], sigma2s[:step + 1], accepted[:step + 1],
                              chain.seed, checkpoints, settings=chain.settings,
                              solver_failures=getattr(target, "failures", 0)), checkpoint_path)

    chain = Chain(prior.names, thetas, sigma2s, accepted, chain.seed, checkpoints,
                  settings=chain.settings, solver_failures=getattr(target, "failures", 0))
    if chain.solver_failures:
        logger.warning("%d model evaluations failed and were rejected", chain.solver_failures)
    if checkpoint_path:
        _checkpoint(chain, checkpoint_path)
    return chain


def _adapted(moments, initial_covariance, eps, current):
    d = moments.mean.shape[0]
    if moments.n < 2 or not np.any(moments.m2):
        return GaussianSummary(np.zeros(d), initial_covariance)
    s_d = proposal_scale(d)
    covariance = s_d * moments.covariance + s_d * eps * np.eye(d)
    covariance = 0.5 * (covariance + covariance.T)
    try:
        numerics.cholesky(covariance)
    except numerics.NotPositiveDefinite:
        logger.warning("adapted proposal covariance is not positive definite, keeping the previous one")
        return current
    return GaussianSummary(moments.mean, covariance)


def _checkpoint(chain, path):
    try:
        chain.save(path)
    except OSError as e:
        raise ChainAborted(f"could not write chain checkpoint {path}: {e}") from e


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed


def detect_burn_in(chain, window=0.1, tol=0.1):
    """
    Smallest index i at which the chain has settled: for every parameter,
    the cumulative-mean curve (the mean of samples 0..k, as drawn by
    Chain.trace_figure) varies by no more than tol * SD over the window
    [i, i + W], W = window * length. SD is estimated from the last half of
    the chain. Candidates are scanned with a stride of W / 20.

    :param chain: Chain or (n, d) array
    :return: burn-in index
    :raises NoPlateau: chain shorter than 1000 samples or never settles
    """
    samples = chain.theta if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    if n < MIN_BURN_IN_LENGTH:
        raise NoPlateau(f"burn-in detection needs at least {MIN_BURN_IN_LENGTH} samples, got {n}")
    w = max(2, int(window * n))
    stride = max(1, w // 20)
    limit = tol * samples[n // 2:].std(axis=0, ddof=1)
    cumulative = np.cumsum(samples, axis=0) / np.arange(1, n + 1)[:, None]
    for i in range(0, n - w, stride):
        span = cumulative[i:i + w + 1]
        if np.all(span.max(axis=0) - span.min(axis=0) <= limit):
            return i
    raise NoPlateau(f"cumulative means never settled within {tol} SD over a window of {w} samples")


def resolve_burn_in(chain, settings, override=None):
    """Explicit index if given, else the detected one, else a fixed fraction of the chain."""
    if override is not None:
        if not 0 <= override < len(chain):
            raise ValueError(f"burn-in index {override} outside chain of length {len(chain)}")
        return int(override)
    try:
        return detect_burn_in(chain, settings.burn_in_window, settings.burn_in_tol)
    except NoPlateau as e:
        fallback = int(settings.burn_in_fraction * len(chain))
        logger.warning("%s; using burn-in %d", e, fallback)
        return fallback


class PosteriorSummary:
    """
    Mean, covariance and linear correlation of the post-burn-in samples,
    with marginal and joint histograms for plotting.
    """

    def __init__(self, names, mean, covariance, pearson, burn_in, n_samples=0,
                 degenerate_pairs=None, marginals=None, joints=None):
        self.names = list(names)
        self.mean = np.asarray(mean, dtype=float)
        self.covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        self.pearson = np.atleast_2d(np.asarray(pearson, dtype=float))
        self.burn_in = int(burn_in)
        self.n_samples = int(n_samples)
        self.degenerate_pairs = [tuple(p) for p in degenerate_pairs] if degenerate_pairs else []
        self.marginals = marginals if marginals else {}
        self.joints = joints if joints else {}

    @property
    def std(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def gaussian(self):
        return GaussianSummary(self.mean, self.covariance, self.names)

    def serialize(self):
        return {
            "names": self.names,
            "mean": self.mean,
            "covariance": self.covariance,
            "pearson": self.pearson,
            "burn_in": self.burn_in,
            "n_samples": self.n_samples,
            "degenerate_pairs": [list(p) for p in self.degenerate_pairs],
        }

    @staticmethod
    def deserialize(data):
        return PosteriorSummary(data["names"], data["mean"], data["covariance"], data["pearson"],
                                data["burn_in"], data.get("n_samples", 0), data.get("degenerate_pairs"))

    def __eq__(self, other):
        if not isinstance(other, PosteriorSummary):
            return NotImplemented
        return (
            self.names == other.names
            and self.burn_in == other.burn_in
            and self.n_samples == other.n_samples
            and self.degenerate_pairs == other.degenerate_pairs
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
            and np.array_equal(self.pearson, other.pearson, equal_nan=True)
        )

    def save(self, path):
        return write_json(self.serialize(), path)

    @staticmethod
    def load(path):
        return PosteriorSummary.deserialize(read_json(path))

    def save_histograms(self, directory):
        """One CSV per marginal and per joint histogram; returns the paths."""
        paths = []
        for name, (edges, counts) in self.marginals.items():
            path = os.path.join(directory, f"hist_{name}.csv")
            pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts}).to_csv(
                path, index=False, float_format=FLOAT_FORMAT)
            paths.append(path)
        for (a, b), (x_edges, y_edges, counts) in self.joints.items():
            path = os.path.join(directory, f"hist2d_{a}__{b}.csv")
            ix, iy = np.meshgrid(np.arange(len(x_edges) - 1), np.arange(len(y_edges) - 1), indexing="ij")
            ix, iy = ix.ravel(), iy.ravel()
            pd.DataFrame({
                "x_left": x_edges[ix], "x_right": x_edges[ix + 1],
                "y_left": y_edges[iy], "y_right": y_edges[iy + 1],
                "count": counts[ix, iy],
            }).to_csv(path, index=False, float_format=FLOAT_FORMAT)
            paths.append(path)
        return paths

    def histogram_figure(self, path):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        d = len(self.names)
        cols = min(d, 4)
        rows = int(math.ceil(d / cols))
        fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 2.5 * rows), squeeze=False)
        for ax in axes.ravel()[d:]:
            ax.set_visible(False)
        for ax, name in zip(axes.ravel(), self.names):
            edges, counts = self.marginals[name]
            ax.stairs(counts, edges, fill=True)
            ax.set_title(name)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return path

    def pearson_figure(self, path):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        import seaborn as sns
        fig, ax = plt.subplots(figsize=(1 + 0.7 * len(self.names), 0.7 * len(self.names)))
        sns.heatmap(pd.DataFrame(self.pearson, index=self.names, columns=self.names),
                    vmin=-1, vmax=1, cmap="coolwarm", annot=True, fmt=".2f", ax=ax)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return path


def load_marginal(path):
    frame = pd.read_csv(path)
    edges = np.append(frame["bin_left"].to_numpy(dtype=float), frame["bin_right"].to_numpy(dtype=float)[-1])
    return edges, frame["count"].to_numpy(dtype=int)


def summarize(chain, burn_in, bins=30, pairs=None):
    """
    Posterior summary of the samples after ``burn_in``.

    Pearson coefficients of pairs involving a constant parameter are
    undefined; they are stored as NaN and listed in degenerate_pairs.

    :param chain: Chain or (n, d) array
    :param pairs: parameter-name pairs for joint histograms, default all
    """
    names = chain.names if isinstance(chain, Chain) else [f"x{i}" for i in range(np.shape(chain)[1])]
    theta = chain.theta if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if not 0 <= burn_in < theta.shape[0]:
        raise ValueError(f"burn-in {burn_in} must lie in [0, {theta.shape[0]})")
    samples = theta[burn_in:]
    n, d = samples.shape
    mean = samples.mean(axis=0)
    if n >= 2:
        covariance = np.atleast_2d(np.cov(samples, rowvar=False))
        covariance = 0.5 * (covariance + covariance.T)
    else:
        covariance = np.zeros((d, d))

    pearson = np.eye(d)
    degenerate = []
    for i in range(d):
        for j in range(i + 1, d):
            try:
                rho = numerics.pearson(samples[:, i], samples[:, j])
            except numerics.DegenerateSample:
                rho = np.nan
                degenerate.append((names[i], names[j]))
            pearson[i, j] = pearson[j, i] = rho
    if degenerate:
        logger.warning("correlation undefined for %d parameter pair(s) with a constant sample", len(degenerate))

    marginals = {}
    for i, name in enumerate(names):
        counts, edges = np.histogram(samples[:, i], bins=bins)
        marginals[name] = (edges, counts)
    if pairs is None:
        pairs = [(names[i], names[j]) for i in range(d) for j in range(i + 1, d)]
    joints = {}
    for a, b in pairs:
        counts, x_edges, y_edges = np.histogram2d(samples[:, names.index(a)], samples[:, names.index(b)], bins=bins)
        joints[(a, b)] = (x_edges, y_edges, counts.astype(int))
    return PosteriorSummary(names, mean, covariance, pearson, burn_in, n, degenerate, marginals, joints)
