"""
This is the main module in smauq. All functions that are intended to be called by
an end user are located here, although API access to the underlying modules is possible.

Each function in the Main object maps to a single command on the command line.
"""

import os
import sys
import argparse
import logging
import traceback
import numpy as np

from . import __version__
from . import default_parameters
from .Study import Study
from .PipelineConfig import PipelineConfig, load_json_config
from .HysteresisLoop import TemperatureGrid, simulate_isobaric_loop
from .Dataset import ingest_dataset
from .FactorialDesign import (
    generate_full_factorial, evaluate_design, anova_main_effects, rank_and_select, screening_figure,
)
from .Calibration import SmaLikelihood, Chain, run_chain, resolve_burn_in, summarize
from .Propagation import FOSM, fosm_band, direct_band, band_grid
from .InfoGain import compare_designs
from .numerics import GaussianSummary
from .Material import MPA
from .utils import write_json

logger = logging.getLogger(__name__)


class Main():
    """
    This is simply a wrapper around all the CLI functions. By putting them in
    this object, we can do clever things with getattr()
    """

    @staticmethod
    def process_params(argv=None):
        """
        This parses the command line arguments and returns the parameters in a
        dictionary. Defaults are specified in default_parameters.py; values given
        there as .json files are read relative to the package. The user config
        (--config) is merged over the default pipeline config and the flags are
        merged over both, then the result is validated into a PipelineConfig
        stored under params['pipeline'].

        :return: parameters dictionary
        """
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', help='JSON config merged over the defaults')
        common.add_argument('--seed', type=int)
        common.add_argument('--jobs', type=int, help='maximum worker processes')
        common.add_argument('-o', '--output', help='output directory, also $' +
                            default_parameters.OUTPUT_ENVIRONMENT_VARIABLE)
        common.add_argument('--save_plots', action='store_true', default=None)
        common.add_argument('--log_level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

        parser = argparse.ArgumentParser(description='smauq, SMA actuation uncertainty quantification', prog='smauq')
        parser.add_argument('--version', action='version', version="smauq v" + __version__)
        subparsers = parser.add_subparsers(dest='subcommand', metavar='subcommand', required=True)
        commands = {}
        for name in ('simulate', 'doe', 'calibrate', 'propagate', 'infogain'):
            doc = getattr(Main, name).__doc__
            commands[name] = subparsers.add_parser(
                name, parents=[common], help=doc.strip().splitlines()[0], description=doc,
                formatter_class=argparse.RawDescriptionHelpFormatter,
            )
        commands['simulate'].add_argument('--stress', type=float, nargs='+', help='MPa')
        commands['doe'].add_argument('--stress', type=float, help='MPa')
        commands['calibrate'].add_argument('--data', nargs='+', help='dataset CSV files')
        commands['calibrate'].add_argument('--burn_in', type=int)
        commands['propagate'].add_argument('--chain', help='chain CSV written by calibrate')
        commands['propagate'].add_argument('--method', choices=['fosm', 'direct'])
        commands['propagate'].add_argument('--stress', type=float, nargs='+', help='MPa')
        commands['propagate'].add_argument('--burn_in', type=int)
        commands['infogain'].add_argument('--chain', help='chain CSV written by calibrate')
        commands['infogain'].add_argument('--burn_in', type=int)

        args = parser.parse_args(argv)
        params = dict(default_parameters.PARAMETERS)
        for k, v in args.__dict__.items():
            if v is not None:
                params[k] = v

        for k, v in default_parameters.PARAMETERS.items():
            if isinstance(v, str) and v.endswith(".json"):
                params[k] = load_json_config(os.path.join(os.path.dirname(__file__), v))

        user = load_json_config(params['config']) if params['config'] else {}
        overrides = {k: params[k] for k in ('seed', 'jobs', 'save_plots') if params[k] is not None}
        if params['method'] is not None:
            overrides['propagation'] = {'method': params['method']}
        user = _overlay(user, overrides)
        output = params['output'] or os.environ.get(default_parameters.OUTPUT_ENVIRONMENT_VARIABLE)
        if output:
            user['output'] = output
        params['pipeline'] = PipelineConfig.from_dict(user, defaults=params['pipeline_config'])
        params['output'] = params['pipeline'].output or default_parameters.DEFAULT_OUTPUT
        return params

    @staticmethod
    def simulate(params):
        """
        Simulate the isobaric hysteresis loop (cooling then heating) of the
        configured material at each stress and write it as a loop CSV.

        usage: smauq simulate [--config C] [--stress S [S ...]]

        Without --stress the stresses of experiments.stresses_MPa are used.
        """
        config, study = _setup(params)
        stresses = [s * MPA for s in params['stress']] if params['stress'] else config.stresses
        for stress in stresses:
            loop = simulate_isobaric_loop(stress, _grid(config, stress, [config.base]), config.base)
            path = study.path("loops", f"loop_{stress / MPA:g}MPa.csv")
            study.register_artifact("loops", loop.save(path))
            logger.info("%g MPa: plateau strain %.6g, wrote %s", stress / MPA, loop.plateau, path)
            if config.save_plots:
                figure = study.path("figures", f"loop_{stress / MPA:g}MPa.png")
                study.register_artifact("figures", loop.plot(figure))
        study.save()

    @staticmethod
    def doe(params):
        """
        Screen the material parameters with a two-level full factorial design and
        a main-effects ANOVA of the loop distance to the reference loop. Writes the
        design, the ANOVA table and the factors significant at doe.alpha.

        usage: smauq doe [--config C] [--stress S] [--jobs N]
        """
        config, study = _setup(params)
        stress = params['stress'] * MPA if params['stress'] else config.doe_stress
        design = generate_full_factorial(config.factors)
        grid = _fixed_grid(config)
        evaluate_design(design, stress, config.base, grid=grid, jobs=config.jobs,
                        n_grid=config.n_grid, margin=config.margin)
        study.register_artifact("doe", design.save(study.path("doe", "design.csv")))
        table = anova_main_effects(design)
        study.register_artifact("doe", table.save(study.path("doe", "anova.csv")))
        ranked, selected = rank_and_select(table, config.alpha)
        study.register_artifact("doe", write_json(selected, study.path("doe", "selected.json")))
        logger.info("factors by significance: %s", ", ".join(ranked))
        logger.info("selected at alpha=%g: %s", config.alpha, ", ".join(selected) or "none")
        if config.save_plots:
            study.register_artifact("figures", screening_figure(table, study.path("figures", "screening.png"),
                                                                 config.alpha))
        study.save()

    @staticmethod
    def calibrate(params):
        """
        Calibrate the parameters under calibration.parameters against isobaric
        datasets with adaptive Metropolis-Hastings and a Gibbs update of the
        error variance. Writes the chain, its sidecar, the posterior summary and
        the marginal and joint histograms.

        usage: smauq calibrate [--config C] --data d1.csv [d2.csv ...] [--seed N] [--burn_in I]
        """
        config, study = _setup(params)
        if not params['data']:
            raise ValueError("calibrate needs at least one dataset (--data)")
        datasets = [ingest_dataset(path) for path in params['data']]
        target = SmaLikelihood(config.calibrated, config.base, datasets, grid=_fixed_grid(config),
                               n_grid=config.n_grid, margin=config.margin,
                               residual_mode=config.mcmc.residual_mode)
        seed = _seed(config)
        path = study.path("chains", "chain.csv")
        chain = run_chain(config.prior, target, config.mcmc, seed, checkpoint_path=path)
        override = params['burn_in'] if params['burn_in'] is not None else config.burn_in
        chain.burn_in = resolve_burn_in(chain, config.mcmc, override)
        chain.config = config.raw
        study.register_artifact("chains", chain.save(path))
        logger.info("acceptance %.3f (after adaptation %.3f), burn-in %d of %d",
                    chain.acceptance_rate(), chain.post_adaptation_acceptance_rate, chain.burn_in, len(chain))

        summary = summarize(chain, chain.burn_in, bins=config.mcmc.histogram_bins)
        study.register_artifact("chains", summary.save(study.path("chains", "summary.json")))
        for histogram in summary.save_histograms(study.path("chains", "")):
            study.register_artifact("chains", histogram)
        for name, mean, sd in zip(summary.names, summary.mean, summary.std):
            logger.info("%s = %.6g +/- %.3g", name, mean, sd)
        if config.save_plots:
            study.register_artifact("figures", chain.trace_figure(study.path("figures", "cumulative_mean.png")))
            study.register_artifact("figures", summary.histogram_figure(study.path("figures", "marginals.png")))
            study.register_artifact("figures", summary.pearson_figure(study.path("figures", "pearson.png")))
        study.save()

    @staticmethod
    def propagate(params):
        """
        Propagate the posterior of a calibration chain to confidence bands on the
        transformation strain, one band CSV per stress. fosm linearises the model
        at the posterior mean; direct simulates posterior samples.

        usage: smauq propagate [--config C] --chain chain.csv [--method fosm|direct] [--stress S ...]
        """
        config, study = _setup(params)
        chain, samples = _posterior_samples(params, config, study)
        names = chain.names
        lower, upper = _bounds(config, names)
        stresses = [s * MPA for s in params['stress']] if params['stress'] else config.band_stresses
        posterior = GaussianSummary.fit(samples, names)
        thinned = samples[np.unique(np.linspace(0, len(samples) - 1, min(config.n_samples, len(samples))).astype(int))]
        for stress in stresses:
            if config.method == FOSM:
                mean_params = config.base.with_values(names, posterior.mean)
                band = fosm_band(posterior.mean, posterior.covariance, stress,
                                 _grid(config, stress, [mean_params]), names, config.base, lower, upper)
                drivers = study.path("bands", f"drivers_{stress / MPA:g}MPa.json")
                study.register_artifact("bands", write_json(band.drivers, drivers))
            else:
                parameter_sets = [config.base.with_values(names, theta) for theta in thinned]
                band = direct_band(thinned, stress, _grid(config, stress, parameter_sets), names, config.base,
                                   config.coverage, config.band_mode, jobs=config.jobs)
            path = study.path("bands", f"band_{config.method}_{stress / MPA:g}MPa.csv")
            study.register_artifact("bands", band.save(path))
            logger.info("%g MPa: widest band %.4g on cooling, %.4g on heating", stress / MPA,
                        band.width("cooling").max(), band.width("heating").max())
            if config.save_plots:
                figure = study.path("figures", f"band_{config.method}_{stress / MPA:g}MPa.png")
                study.register_artifact("figures", band.plot(figure))
        study.save()

    @staticmethod
    def infogain(params):
        """
        Rank the candidate designs under infogain.candidates by the KL divergence
        between the posterior after sequential calibration on their synthetic
        datasets and the prior given by a calibration chain.

        usage: smauq infogain [--config C] --chain chain.csv [--seed N] [--jobs N]
        """
        config, study = _setup(params)
        if not config.candidates:
            raise ValueError("infogain.candidates: at least one candidate design is needed")
        chain, samples = _posterior_samples(params, config, study)
        if chain.names != config.calibrated:
            raise ValueError(f"chain parameters {chain.names} do not match calibration.parameters {config.calibrated}")
        posterior = GaussianSummary.fit(samples, chain.names)
        prior = config.prior.with_gaussian(posterior, initial=_start(config, posterior.mean))
        report = compare_designs(prior, config.candidates, config.infogain_mcmc, _seed(config), chain.names,
                                 config.base, truth=posterior, direction=config.direction, n_grid=config.n_grid,
                                 margin=config.margin, noise_sd=config.noise_sd, jobs=config.jobs)
        study.register_artifact("infogain", report.save(study.path("infogain", "report.json")))
        for result in report.results:
            logger.info("%s: KL %.4f nats after %d stage(s)", result.candidate.name, result.kl, len(result.stage_kls))
        logger.info("ranking: %s", " > ".join(report.ranking))
        study.save()


def _overlay(user, overrides):
    merged = dict(user)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = {**merged[k], **v}
        else:
            merged[k] = v
    return merged


def _setup(params):
    config = params['pipeline']
    study = Study.open(params['output'])
    study.config = config.raw
    return config, study


def _seed(config):
    if config.seed is not None:
        return config.seed
    seed = int(np.random.SeedSequence().entropy % 2**32)
    logger.warning("no seed configured, using %d", seed)
    return seed


def _fixed_grid(config):
    if config.T_max is None:
        return None
    return TemperatureGrid(config.T_max, config.T_min, config.n_grid)


def _grid(config, stress, parameter_sets):
    return _fixed_grid(config) or band_grid(stress, parameter_sets, config.margin, config.n_grid)


def _bounds(config, names):
    if names == config.calibrated:
        return config.prior.lower, config.prior.upper
    return None, None


def _start(config, mean):
    prior = config.prior
    if np.all(mean > prior.lower) and np.all(mean < prior.upper):
        return mean
    return prior.initial


def _posterior_samples(params, config, study):
    path = params['chain']
    if not path:
        registered = [p for p in study.artifact_paths("chains") if p.endswith("chain.csv")]
        if not registered:
            raise ValueError("no chain given (--chain) and none registered in the output directory")
        path = registered[-1]
    chain = Chain.load(path)
    override = params['burn_in']
    if override is None:
        override = chain.burn_in if chain.burn_in is not None else config.burn_in
    burn_in = resolve_burn_in(chain, config.mcmc, override)
    logger.info("%s: %d samples after burn-in %d", path, len(chain) - burn_in, burn_in)
    return chain, chain.samples(burn_in)


def main(argv=None):
    """
    This is the main function for the pipeline
    """
    try:
        params = Main.process_params(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except (ValueError, OSError) as e:
        print("Invalid configuration: ", e, file=sys.stderr)
        return 2

    logging.basicConfig(level=params['log_level'], format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    print("Attempting: ", params["subcommand"])
    function = getattr(Main, params['subcommand'])
    try:
        function(params)
        print("Successfully executed: ", params["subcommand"])
        return 0
    except Exception as e:
        print("Error executing: " + params['subcommand'], file=sys.stderr)
        print(function.__doc__, file=sys.stderr)
        print("Exception: ", e, file=sys.stderr)
        if isinstance(e, ValueError):
            return 2
        print("Traceback:", file=sys.stderr)
        print(traceback.format_exc(), file=sys.stderr)
        return 1


def CLI():
    '''
    This function is called when 'smauq' is called in the terminal.

    Simply a wrapper around main()
    '''
    sys.exit(main())


if __name__ == '__main__':
    CLI()
