'''
This module implements the ExperimentalDataset object, one measured transformation strain -
temperature loop recorded under a single isobaric condition.

Each isobaric run is its own dataset; a calibration combines several of them.

Files are CSV with the stress on a leading comment line:

    # stress_MPa=150
    branch,T_K,eps_t
    cooling,360.0,0.0
    ...

A ``stress_MPa`` column holding one constant value is accepted in place of the comment line.
'''

import io
import logging
import os
import numpy as np
import pandas as pd

from .HysteresisLoop import HysteresisLoop, TemperatureGrid
from .Material import MPA
from .utils import recursive_encoder

logger = logging.getLogger(__name__)

MIN_POINTS = 10
REQUIRED_COLUMNS = ("branch", "T_K", "eps_t")
STRESS_KEY = "stress_MPa"


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


def read_stress_header(path):
    """
    Read a loop or dataset CSV.

    :param path: path to the CSV
    :return: (stress in Pa, DataFrame of the rows)
    :raises ParseError: stress missing or unreadable
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    first, _, rest = text.partition("\n")
    stress = None
    body = text
    header_line = 1
    if first.startswith("#"):
        key, _, value = first.lstrip("#").strip().partition("=")
        if key.strip() != STRESS_KEY:
            raise ParseError(f"{path}: line 1: expected '# {STRESS_KEY}=<value>', got '{first}'")
        try:
            stress = float(value) * MPA
        except ValueError as e:
            raise ParseError(f"{path}: line 1: bad stress value '{value.strip()}'") from e
        body = rest
        header_line = 2
    try:
        frame = pd.read_csv(io.StringIO(body), skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"{path}: {e}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    if stress is None:
        if STRESS_KEY not in frame.columns:
            raise ParseError(f"{path}: no '# {STRESS_KEY}=' line and no {STRESS_KEY} column")
        values = pd.to_numeric(frame[STRESS_KEY], errors="coerce").to_numpy()
        if np.isnan(values).any() or np.unique(values).size != 1:
            raise ParseError(f"{path}: column {STRESS_KEY} must hold one numeric value")
        stress = float(values[0]) * MPA
    frame.attrs["header_line"] = header_line
    return stress, frame


class ExperimentalDataset:
    """
    One isobaric hysteresis loop as measured: transformation strain sampled
    at cooling temperatures (strictly decreasing) and heating temperatures
    (strictly increasing).
    """

    def __init__(self, stress, cooling_T, cooling_eps, heating_T, heating_eps, label=None):
        self.stress = float(stress)
        self.cooling_T = np.asarray(cooling_T, dtype=float)
        self.cooling_eps = np.asarray(cooling_eps, dtype=float)
        self.heating_T = np.asarray(heating_T, dtype=float)
        self.heating_eps = np.asarray(heating_eps, dtype=float)
        self.label = label if label else f"{self.stress / MPA:g}MPa"
        self.validate()

    def validate(self):
        if not (np.isfinite(self.stress) and self.stress > 0):
            raise ValidationError(f"{self.label}: stress must be > 0, got {self.stress}")
        for name, t, eps, sign in (
            ("cooling", self.cooling_T, self.cooling_eps, -1),
            ("heating", self.heating_T, self.heating_eps, 1),
        ):
            if t.shape != eps.shape or t.ndim != 1:
                raise ValidationError(f"{self.label}: {name} temperatures and strains differ in shape")
            if t.shape[0] < MIN_POINTS:
                raise ValidationError(
                    f"{self.label}: {name} branch has {t.shape[0]} points, at least {MIN_POINTS} needed"
                )
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(eps))):
                raise ValidationError(f"{self.label}: {name} branch has non-finite values")
            if np.any(t <= 0):
                raise ValidationError(f"{self.label}: {name} branch has non-positive temperatures")
            if not np.all(sign * np.diff(t) > 0):
                raise ValidationError(f"{self.label}: {name} temperatures are not strictly monotone")
        return self

    @property
    def n_points(self):
        return self.cooling_T.shape[0] + self.heating_T.shape[0]

    @property
    def eps_vector(self):
        return np.concatenate([self.cooling_eps, self.heating_eps])

    @property
    def temperature_range(self):
        both = np.concatenate([self.cooling_T, self.heating_T])
        return float(both.min()), float(both.max())

    def model_grid(self, p, n_grid=500, margin=15.0):
        """
        A simulation grid that spans both the measured temperatures and the
        complete transformation window of ``p`` at this stress.
        """
        lo, hi = self.temperature_range
        window = TemperatureGrid.around(self.stress, p, margin, n_grid)
        return TemperatureGrid(max(hi, window.T_max), min(lo, window.T_min), n_grid)

    def residuals(self, loop):
        """Model minus measured strain at every measured temperature."""
        on_data = loop.resample(self.cooling_T, self.heating_T)
        return on_data.eps_vector - self.eps_vector

    def squared_distance(self, loop):
        r = self.residuals(loop)
        return float(np.dot(r, r))

    @staticmethod
    def from_loop(loop, label=None):
        return ExperimentalDataset(
            loop.stress,
            loop.cooling.T, loop.cooling.eps_t,
            loop.heating.T, loop.heating.eps_t,
            label=label,
        )

    def to_frame(self):
        return pd.DataFrame({
            "branch": ["cooling"] * self.cooling_T.shape[0] + ["heating"] * self.heating_T.shape[0],
            "T_K": np.concatenate([self.cooling_T, self.heating_T]),
            "eps_t": self.eps_vector,
        })

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {STRESS_KEY}={self.stress / MPA!r}\n")
            self.to_frame().to_csv(fh, index=False, float_format="%.17g")
        return path

    @property
    def json_repr(self):
        return recursive_encoder({
            "label": self.label,
            "stress": self.stress,
            "cooling_T": self.cooling_T,
            "cooling_eps": self.cooling_eps,
            "heating_T": self.heating_T,
            "heating_eps": self.heating_eps,
        })

    @staticmethod
    def load_dataset(data):
        return ExperimentalDataset(
            data["stress"], data["cooling_T"], data["cooling_eps"],
            data["heating_T"], data["heating_eps"], label=data["label"],
        )

    def __eq__(self, other):
        if not isinstance(other, ExperimentalDataset):
            return NotImplemented
        return (
            self.stress == other.stress
            and np.array_equal(self.cooling_T, other.cooling_T)
            and np.array_equal(self.cooling_eps, other.cooling_eps)
            and np.array_equal(self.heating_T, other.heating_T)
            and np.array_equal(self.heating_eps, other.heating_eps)
        )


def _collapse(frame, descending):
    """Sort one branch by temperature and average strains at repeated temperatures."""
    grouped = frame.groupby("T_K", sort=True)["eps_t"].mean()
    if descending:
        grouped = grouped.iloc[::-1]
    return grouped.index.to_numpy(dtype=float), grouped.to_numpy(dtype=float)


def ingest_dataset(path, label=None):
    """
    Read and validate one experimental dataset.

    Args:
        path (str): CSV with header branch,T_K,eps_t and the stress as
            '# stress_MPa=<value>' (or a constant stress_MPa column)
        label (str, optional): provenance label, defaults to the file name

    Returns:
        ExperimentalDataset

    Raises:
        ParseError: missing column, unknown branch or non-numeric value, with the file row
        ValidationError: too few points or otherwise unusable branches
    """
    stress, frame = read_stress_header(path)
    header_line = frame.attrs.get("header_line", 1)
    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise ParseError(f"{path}: missing column '{column}'")
    frame = frame.copy()
    frame["branch"] = frame["branch"].astype(str).str.strip().str.lower()
    for column in ("T_K", "eps_t"):
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            row = header_line + 1 + int(bad[0])
            raise ParseError(f"{path}: row {row}: column '{column}' is not a number")
        frame[column] = values
    unknown = np.flatnonzero(~frame["branch"].isin(HysteresisLoop.branches).to_numpy())
    if unknown.size:
        row = header_line + 1 + int(unknown[0])
        raise ParseError(
            f"{path}: row {row}: unknown branch '{frame['branch'].iloc[unknown[0]]}'"
        )
    cooling_T, cooling_eps = _collapse(frame[frame["branch"] == "cooling"], descending=True)
    heating_T, heating_eps = _collapse(frame[frame["branch"] == "heating"], descending=False)
    n_dupes = len(frame) - cooling_T.shape[0] - heating_T.shape[0]
    if n_dupes:
        logger.info("%s: averaged %d rows at repeated temperatures", path, n_dupes)
    if label is None:
        label = os.path.splitext(os.path.basename(str(path)))[0]
    return ExperimentalDataset(stress, cooling_T, cooling_eps, heating_T, heating_eps, label=label)
