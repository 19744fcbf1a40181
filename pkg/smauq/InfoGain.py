'''
InfoGain.py compares candidate experimental designs by the information they would add to the
current parameter distribution.

For every candidate, synthetic isobaric datasets are drawn from the model at parameters
sampled from a reference (Gaussian) distribution, the parameters are recalibrated on those
datasets one after the other with each stage's Gaussian fit becoming the next stage's prior,
and the Kullback-Leibler divergence between the final posterior and the starting prior
measures what the candidate taught us. Candidates are ranked by that divergence.
'''

import dataclasses
import logging
import multiprocessing as mp
import numpy as np

from . import numerics
from .numerics import GaussianSummary
from .Calibration import SmaLikelihood, run_chain, resolve_burn_in
from .Dataset import ExperimentalDataset
from .HysteresisLoop import (
    TemperatureGrid, simulate_isobaric_loop, IncompleteTransformation, RootBracketFailure,
)
from .Material import MPA, InfeasibleParameters
from .utils import write_json, read_json

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000
POSTERIOR_PRIOR = "posterior_prior"
PRIOR_POSTERIOR = "prior_posterior"
KL_DIRECTIONS = (POSTERIOR_PRIOR, PRIOR_POSTERIOR)


class FeasibilityExhausted(RuntimeError):
    pass


@dataclasses.dataclass
class DesignCandidate:
    """A set of isobaric conditions; each stress is tested samples_per_condition times."""
    name: str
    stresses: list
    samples_per_condition: int = 1

    def __post_init__(self):
        self.stresses = [float(s) for s in self.stresses]
        if not self.stresses:
            raise ValueError(f"candidate {self.name} has no isobaric conditions")
        if any(not s > 0 for s in self.stresses):
            raise ValueError(f"candidate {self.name}: stresses must be positive, got {self.stresses}")
        if self.samples_per_condition < 1:
            raise ValueError(f"candidate {self.name}: samples_per_condition must be >= 1")

    @property
    def conditions(self):
        """Stress of every dataset, in the order they are used."""
        return [s for s in self.stresses for _ in range(self.samples_per_condition)]

    @property
    def json_repr(self):
        return {
            "name": self.name,
            "stresses_MPa": [s / MPA for s in self.stresses],
            "samples_per_condition": self.samples_per_condition,
        }


def _seed_repr(seq):
    return {"entropy": seq.entropy, "spawn_key": list(seq.spawn_key)}


def generate_synthetic_dataset(distribution, stress, names, base, rng, lower=None, upper=None,
                               grid=None, n_grid=500, margin=15.0, noise_sd=0.0, label=None):
    """
    Draw theta from a Gaussian, simulate its loop at ``stress`` and return it
    as a dataset. Draws outside [lower, upper], with infeasible material
    parameters or whose loop cannot be solved are redrawn.

    :param distribution: GaussianSummary of the calibrated parameters; a zero
        covariance returns the loop at its mean
    :param grid: TemperatureGrid for the synthetic curve, default one around the mean
    :param noise_sd: standard deviation of additive strain noise
    :raises FeasibilityExhausted: no usable draw in 1000 attempts
    """
    d = distribution.dimension
    lower = np.full(d, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(d, np.inf) if upper is None else np.asarray(upper, dtype=float)
    degenerate = not np.any(distribution.covariance)
    if grid is None:
        grid = TemperatureGrid.around(stress, base.with_values(names, distribution.mean), margin, n_grid)
    last_error = None
    for _ in range(1 if degenerate else MAX_ATTEMPTS):
        theta = distribution.mean.copy() if degenerate else numerics.mvn_sample(distribution, rng)
        if np.any(theta < lower) or np.any(theta > upper):
            last_error = "outside the bounds"
            continue
        p = base.with_values(names, theta)
        if not p.is_feasible():
            last_error = "; ".join(p.problems())
            continue
        try:
            loop = simulate_isobaric_loop(stress, grid, p)
        except (IncompleteTransformation, RootBracketFailure, InfeasibleParameters) as e:
            last_error = str(e)
            continue
        dataset = ExperimentalDataset.from_loop(loop, label=label)
        if noise_sd > 0:
            dataset.cooling_eps = dataset.cooling_eps + rng.normal(0.0, noise_sd, dataset.cooling_eps.shape)
            dataset.heating_eps = dataset.heating_eps + rng.normal(0.0, noise_sd, dataset.heating_eps.shape)
        return dataset
    raise FeasibilityExhausted(f"no feasible synthetic sample at {stress / MPA:g} MPa: {last_error}")


@dataclasses.dataclass
class Stage:
    dataset: str
    posterior: GaussianSummary
    chain_length: int
    burn_in: int
    acceptance_rate: float
    seed: dict


def sequential_calibrate(prior, datasets, settings, seeds, names, base, n_grid=500, margin=15.0):
    """
    Calibrate on the datasets one at a time. Each stage runs a chain under
    the current prior, fits a Gaussian to its post-burn-in samples and uses
    it, truncated to the prior bounds, as the prior of the next stage.

    Args:
        prior (PriorSpec): starting prior
        datasets (list): ExperimentalDataset objects in order
        settings (McmcSettings): chain settings for every stage
        seeds (list): one SeedSequence per dataset
        names, base: calibrated names and the MaterialParameters for the rest

    Returns:
        (final GaussianSummary, list of Stage)
    """
    if len(seeds) < len(datasets):
        raise ValueError("one seed is needed per dataset")
    current = prior
    final = prior.as_gaussian()
    stages = []
    for dataset, seed in zip(datasets, seeds):
        target = SmaLikelihood(names, base, [dataset], n_grid=n_grid, margin=margin,
                               residual_mode=settings.residual_mode)
        chain = run_chain(current, target, settings, seed)
        burn_in = resolve_burn_in(chain, settings)
        final = GaussianSummary.fit(chain.samples(burn_in), names)
        stages.append(Stage(dataset.label, final, len(chain), burn_in, chain.acceptance_rate(), _seed_repr(seed)))
        logger.info("stage %d (%s): posterior SD %s", len(stages), dataset.label, np.array2string(final.std, precision=4))
        current = current.with_gaussian(final, initial=_next_start(current, final, chain, target))
    return final, stages


def _next_start(prior, gaussian, chain, target):
    mean = gaussian.mean
    if np.all(mean > prior.lower) and np.all(mean < prior.upper) and target.in_support(mean):
        return mean
    return chain.theta[-1]


def kl_between(posterior, prior, direction=POSTERIOR_PRIOR):
    if direction == POSTERIOR_PRIOR:
        return numerics.kl_mvn(posterior, prior)
    if direction == PRIOR_POSTERIOR:
        return numerics.kl_mvn(prior, posterior)
    raise ValueError(f"KL direction must be one of {KL_DIRECTIONS}, got {direction}")


@dataclasses.dataclass
class CandidateResult:
    candidate: DesignCandidate
    kl: float
    stage_kls: list
    chain_lengths: list
    burn_ins: list
    acceptance_rates: list
    seeds: list
    posterior: GaussianSummary

    @property
    def json_repr(self):
        return {
            "candidate": self.candidate.json_repr,
            "kl": self.kl,
            "stage_kls": self.stage_kls,
            "chain_lengths": self.chain_lengths,
            "burn_ins": self.burn_ins,
            "acceptance_rates": self.acceptance_rates,
            "seeds": self.seeds,
            "posterior": self.posterior.serialize(),
        }

    @staticmethod
    def load(data):
        c = data["candidate"]
        return CandidateResult(
            DesignCandidate(c["name"], [s * MPA for s in c["stresses_MPa"]], c["samples_per_condition"]),
            data["kl"], data["stage_kls"], data["chain_lengths"], data["burn_ins"],
            data["acceptance_rates"], data["seeds"], GaussianSummary.deserialize(data["posterior"]),
        )


class InfoGainReport:
    """KL divergence per candidate and the candidates ranked from most to least informative."""

    def __init__(self, results, prior, direction=POSTERIOR_PRIOR, seed=None):
        self.results = list(results)
        self.prior = prior
        self.direction = direction
        self.seed = seed

    @property
    def ranking(self):
        order = sorted(range(len(self.results)), key=lambda i: (-self.results[i].kl, i))
        return [self.results[i].candidate.name for i in order]

    def result(self, name):
        for r in self.results:
            if r.candidate.name == name:
                return r
        raise KeyError(name)

    @property
    def json_repr(self):
        return {
            "direction": self.direction,
            "seed": self.seed,
            "prior": self.prior.serialize(),
            "candidates": [r.json_repr for r in self.results],
            "ranking": self.ranking,
        }

    def save(self, path):
        return write_json(self.json_repr, path)

    @staticmethod
    def load(path):
        data = read_json(path)
        return InfoGainReport(
            [CandidateResult.load(r) for r in data["candidates"]],
            GaussianSummary.deserialize(data["prior"]),
            data["direction"],
            data.get("seed"),
        )


def evaluate_candidate(candidate, prior, settings, seed, names, base, truth=None,
                       direction=POSTERIOR_PRIOR, n_grid=500, margin=15.0, noise_sd=0.0):
    """
    Generate the candidate's synthetic datasets from ``truth`` (default the
    prior's Gaussian), calibrate on them sequentially and measure the KL
    divergence to the prior after every stage.

    :param seed: SeedSequence owned by this candidate
    :return: CandidateResult
    """
    prior_gaussian = prior.as_gaussian()
    truth = prior_gaussian if truth is None else truth
    data_seed, chain_seed = seed.spawn(2)
    rng = np.random.default_rng(data_seed)
    datasets = []
    for k, stress in enumerate(candidate.conditions):
        datasets.append(generate_synthetic_dataset(
            truth, stress, names, base, rng, prior.lower, prior.upper, n_grid=n_grid, margin=margin,
            noise_sd=noise_sd, label=f"{candidate.name}-{k}-{stress / MPA:g}MPa",
        ))
    stage_seeds = chain_seed.spawn(len(datasets))
    final, stages = sequential_calibrate(prior, datasets, settings, stage_seeds, names, base, n_grid, margin)
    stage_kls = [kl_between(s.posterior, prior_gaussian, direction) for s in stages]
    kl = stage_kls[-1] if stage_kls else kl_between(final, prior_gaussian, direction)
    logger.info("candidate %s: KL %.4f nats", candidate.name, kl)
    return CandidateResult(
        candidate, kl, stage_kls,
        [s.chain_length for s in stages], [s.burn_in for s in stages],
        [s.acceptance_rate for s in stages], [s.seed for s in stages], final,
    )


def _evaluate(args):
    return evaluate_candidate(*args[:6], **args[6])


def compare_designs(prior, candidates, settings, seed, names, base, truth=None, direction=POSTERIOR_PRIOR,
                    n_grid=500, margin=15.0, noise_sd=0.0, jobs=1):
    """
    Rank candidate designs by the KL divergence between the final posterior
    and the prior.

    Every candidate gets its own child of SeedSequence(seed), so results do
    not depend on the number of worker processes.

    :return: InfoGainReport
    """
    if direction not in KL_DIRECTIONS:
        raise ValueError(f"KL direction must be one of {KL_DIRECTIONS}, got {direction}")
    names_seen = [c.name for c in candidates]
    if len(set(names_seen)) != len(names_seen):
        raise ValueError(f"candidate names must be unique, got {names_seen}")
    children = np.random.SeedSequence(seed).spawn(len(candidates))
    options = {"truth": truth, "direction": direction, "n_grid": n_grid, "margin": margin, "noise_sd": noise_sd}
    tasks = [(c, prior, settings, s, names, base, options) for c, s in zip(candidates, children)]
    if jobs > 1 and len(tasks) > 1:
        with mp.Pool(min(jobs, len(tasks))) as workers:
            results = workers.map(_evaluate, tasks)
    else:
        results = [_evaluate(t) for t in tasks]
    return InfoGainReport(results, prior.as_gaussian(), direction, seed)
