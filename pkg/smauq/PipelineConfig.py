'''
PipelineConfig turns the nested JSON configuration (engineering units) into validated objects
in SI units: the base MaterialParameters, the factorial design, the calibration prior and
chain settings, the propagation settings and the information-gain candidates.

Every problem is reported as a ConfigError naming the dotted path of the offending field,
e.g. ``calibration.mcmc.n_steps: must be >= 0``.
'''

import json
import numpy as np

from . import Material
from .Material import MaterialParameters, SCREENABLE, UNITS, MPA
from .FactorialDesign import FactorSpec, factors_from_initial
from .Calibration import PriorSpec, McmcSettings
from .Propagation import METHODS, BAND_MODES
from .InfoGain import DesignCandidate, KL_DIRECTIONS
from .utils import deep_merge

SECTIONS = ("output", "seed", "jobs", "save_plots", "material", "grid", "experiments",
            "doe", "calibration", "propagation", "infogain")
# user values for these replace the defaults instead of being merged into them
REPLACED = (("doe", "levels"), ("calibration", "parameters"))


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_json_config(path):
    """Read a JSON config; syntax errors are reported with line and column."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be an object")
    return data


def _strip_comments(data):
    """Keys starting with '_' are annotations and are ignored."""
    if isinstance(data, dict):
        return {k: _strip_comments(v) for k, v in data.items() if not str(k).startswith("_")}
    return data


def _merge(defaults, user):
    merged = deep_merge(defaults, user)
    for section, key in REPLACED:
        section_values = user.get(section)
        if isinstance(section_values, dict) and key in section_values:
            merged[section][key] = section_values[key]
    return merged


def _known(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(section or "config", "must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}" if section else unknown[0], "unknown key")


def _number(field, value, minimum=None, strict=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(field, f"must be an integer, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(field, "must be finite")
    if minimum is not None:
        if strict and not value > minimum:
            raise ConfigError(field, f"must be > {minimum}")
        if not strict and not value >= minimum:
            raise ConfigError(field, f"must be >= {minimum}")
    return int(value) if integer else float(value)


def _stresses(field, values):
    if not isinstance(values, list) or not values:
        raise ConfigError(field, "must be a non-empty list of stresses in MPa")
    return [_number(f"{field}[{i}]", v, 0, strict=True) * MPA for i, v in enumerate(values)]


class PipelineConfig:
    """
    The validated pipeline configuration, built with PipelineConfig.from_dict
    from the user values merged over the defaults. Attributes are plain
    objects in SI.
    """

    def __init__(self, raw):
        self.raw = raw
        _known("", raw, SECTIONS)
        self.output = raw.get("output")
        self.seed = _number("seed", raw.get("seed"), 0, integer=True, allow_none=True)
        self.jobs = _number("jobs", raw.get("jobs", 1), 1, integer=True)
        self.save_plots = bool(raw.get("save_plots", False))
        self.base = self._material(raw.get("material", {}))
        self._grid(raw.get("grid", {}))
        experiments = raw.get("experiments", {})
        _known("experiments", experiments, ("stresses_MPa",))
        self.stresses = _stresses("experiments.stresses_MPa", experiments.get("stresses_MPa", [100, 150, 200]))
        self._doe(raw.get("doe", {}))
        self._calibration(raw.get("calibration", {}))
        self._propagation(raw.get("propagation", {}))
        self._infogain(raw.get("infogain", {}))

    @staticmethod
    def from_dict(data, defaults=None):
        data = _strip_comments(data)
        if defaults is not None:
            data = _merge(_strip_comments(defaults), data)
        return PipelineConfig(data)

    def _material(self, section):
        _known("material", section, UNITS)
        try:
            base = MaterialParameters.from_engineering(section)
        except TypeError as e:
            raise ConfigError("material", f"incomplete parameter set ({e})") from e
        problems = base.problems()
        if problems:
            raise ConfigError("material", "; ".join(problems))
        try:
            Material.derive_coefficients(base)
        except Material.InfeasibleParameters as e:
            raise ConfigError("material", str(e)) from e
        return base

    def _grid(self, section):
        _known("grid", section, ("n_grid", "margin_K", "T_max", "T_min"))
        self.n_grid = _number("grid.n_grid", section.get("n_grid", 500), 50, integer=True)
        self.margin = _number("grid.margin_K", section.get("margin_K", 15.0), 0, strict=True)
        self.T_max = _number("grid.T_max", section.get("T_max"), 0, strict=True, allow_none=True)
        self.T_min = _number("grid.T_min", section.get("T_min"), 0, strict=True, allow_none=True)
        if (self.T_max is None) != (self.T_min is None):
            raise ConfigError("grid", "give both T_max and T_min or neither")
        if self.T_max is not None and not self.T_max > self.T_min:
            raise ConfigError("grid.T_max", "must exceed grid.T_min")

    def _doe(self, section):
        _known("doe", section, ("stress_MPa", "alpha", "fraction", "levels"))
        self.doe_stress = _number("doe.stress_MPa", section.get("stress_MPa", 150.0), 0, strict=True) * MPA
        self.alpha = _number("doe.alpha", section.get("alpha", 0.05), 0)
        if self.alpha > 1:
            raise ConfigError("doe.alpha", "must lie in [0, 1]")
        levels = section.get("levels")
        fraction = section.get("fraction")
        if levels is not None and not isinstance(levels, dict):
            raise ConfigError("doe.levels", "must map parameter names to [low, high]")
        if levels:
            factors = []
            for name, pair in levels.items():
                field = f"doe.levels.{name}"
                if name not in UNITS:
                    raise ConfigError(field, "not a material parameter")
                if not isinstance(pair, list) or len(pair) != 2:
                    raise ConfigError(field, "must be [low, high]")
                low = Material.to_si(name, _number(field + "[0]", pair[0]))
                high = Material.to_si(name, _number(field + "[1]", pair[1]))
                try:
                    factors.append(FactorSpec(name, low, high))
                except ValueError as e:
                    raise ConfigError(field, str(e)) from e
        else:
            fraction = _number("doe.fraction", 0.1 if fraction is None else fraction, 0, strict=True)
            factors = factors_from_initial({n: getattr(self.base, n) for n in SCREENABLE}, fraction)
        self.factors = factors

    def _calibration(self, section):
        _known("calibration", section, ("parameters", "a0", "b0", "mcmc", "burn_in"))
        parameters = section.get("parameters", {})
        if not isinstance(parameters, dict) or not parameters:
            raise ConfigError("calibration.parameters", "at least one calibrated parameter is needed")
        names, lower, upper, initial = [], [], [], []
        for name, spec in parameters.items():
            field = f"calibration.parameters.{name}"
            if name not in UNITS:
                raise ConfigError(field, "not a material parameter")
            if not isinstance(spec, dict):
                raise ConfigError(field, "must be an object with lower, upper and optional initial")
            _known(field, spec, ("lower", "upper", "initial"))
            for key in ("lower", "upper"):
                if key not in spec:
                    raise ConfigError(f"{field}.{key}", "every calibrated parameter needs bounds")
            names.append(name)
            lower.append(Material.to_si(name, _number(f"{field}.lower", spec["lower"])))
            upper.append(Material.to_si(name, _number(f"{field}.upper", spec["upper"])))
            if spec.get("initial") is None:
                initial.append(getattr(self.base, name))
            else:
                initial.append(Material.to_si(name, _number(f"{field}.initial", spec["initial"])))
        self.calibrated = names
        a0 = _number("calibration.a0", section.get("a0", 1e-3), 0, strict=True)
        b0 = _number("calibration.b0", section.get("b0", 1e-3), 0, strict=True)
        try:
            self.prior = PriorSpec(names, lower, upper, initial, a0, b0)
        except ValueError as e:
            raise ConfigError("calibration.parameters", str(e)) from e
        start = self.base.with_values(names, initial)
        if start.problems():
            raise ConfigError("calibration.parameters", "initial values: " + "; ".join(start.problems()))
        self.mcmc = self._mcmc("calibration.mcmc", section.get("mcmc", {}))
        self.burn_in = _number("calibration.burn_in", section.get("burn_in"), 0, integer=True, allow_none=True)

    @staticmethod
    def _mcmc(field, section, base=None):
        allowed = {f for f in McmcSettings.__dataclass_fields__}
        _known(field, section, allowed)
        values = base.as_dict() if base is not None else {}
        values.update(section)
        for key, value in values.items():
            if key == "residual_mode":
                continue
            integer = isinstance(McmcSettings.__dataclass_fields__[key].default, int)
            values[key] = _number(f"{field}.{key}", value, integer=integer, allow_none=(key == "sigma2_initial"))
        settings = McmcSettings(**values)
        problems = settings.problems()
        if problems:
            key, message = problems[0]
            raise ConfigError(f"{field}.{key}", message)
        return settings

    def _propagation(self, section):
        _known("propagation", section, ("method", "coverage", "band_mode", "n_samples", "stresses_MPa"))
        self.method = section.get("method", "direct")
        if self.method not in METHODS:
            raise ConfigError("propagation.method", f"must be one of {', '.join(METHODS)}")
        self.coverage = _number("propagation.coverage", section.get("coverage", 0.95), 0, strict=True)
        if not self.coverage < 1:
            raise ConfigError("propagation.coverage", "must lie in (0, 1)")
        self.band_mode = section.get("band_mode", "curvewise")
        if self.band_mode not in BAND_MODES:
            raise ConfigError("propagation.band_mode", f"must be one of {', '.join(BAND_MODES)}")
        self.n_samples = _number("propagation.n_samples", section.get("n_samples", 1000), 200, integer=True)
        stresses = section.get("stresses_MPa")
        self.band_stresses = self.stresses if stresses is None else _stresses("propagation.stresses_MPa", stresses)

    def _infogain(self, section):
        _known("infogain", section, ("candidates", "direction", "noise_sd", "mcmc"))
        self.direction = section.get("direction", "posterior_prior")
        if self.direction not in KL_DIRECTIONS:
            raise ConfigError("infogain.direction", f"must be one of {', '.join(KL_DIRECTIONS)}")
        self.noise_sd = _number("infogain.noise_sd", section.get("noise_sd", 0.0), 0)
        self.infogain_mcmc = self._mcmc("infogain.mcmc", section.get("mcmc", {}), base=self.mcmc)
        candidates = []
        for i, spec in enumerate(section.get("candidates", [])):
            field = f"infogain.candidates[{i}]"
            if not isinstance(spec, dict):
                raise ConfigError(field, "must be an object")
            _known(field, spec, ("name", "stresses_MPa", "samples_per_condition"))
            stresses = _stresses(f"{field}.stresses_MPa", spec.get("stresses_MPa"))
            per = _number(f"{field}.samples_per_condition", spec.get("samples_per_condition", 1), 1, integer=True)
            candidates.append(DesignCandidate(str(spec.get("name", f"candidate{i + 1}")), stresses, per))
        names = [c.name for c in candidates]
        if len(set(names)) != len(names):
            raise ConfigError("infogain.candidates", "candidate names must be unique")
        self.candidates = candidates

    @property
    def json_repr(self):
        return self.raw
