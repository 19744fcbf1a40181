'''
This module implements the two-level complete factorial screening of material parameters:
the DesignMatrix of every low/high combination, its evaluation against a reference loop,
and the main-effects analysis of variance (AnovaTable) used to rank the factors.

The response of a design row is the squared distance between the loop simulated with that
row's parameters and the loop simulated with every factor at the midpoint of its levels.
Interactions are not estimated; they are pooled into the error term.
'''

import dataclasses
import logging
import multiprocessing as mp
import numpy as np
import pandas as pd

from . import numerics
from .HysteresisLoop import (
    TemperatureGrid, simulate_isobaric_loop, loop_distance, IncompleteTransformation,
    RootBracketFailure,
)
from .Material import UNITS, MaterialParameters, InfeasibleParameters, derive_coefficients
from .utils import FLOAT_FORMAT

logger = logging.getLogger(__name__)

MAX_FACTORS = 20
RESPONSE = "response"
ANOVA_COLUMNS = ("Source", "Sum sq.", "d.f.", "Mean sq.", "F", "Prob>F", "log10(Prob>F)")
ERROR_SOURCE = "Error"
TOTAL_SOURCE = "Total"


class TooManyFactors(ValueError):
    pass


class InfeasibleDesign(ValueError):
    pass


class DegenerateResponse(ValueError):
    pass


class IncompleteDesign(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class FactorSpec:
    """Name of a MaterialParameters field with its low and high level (SI units)."""
    name: str
    low: float
    high: float

    def __post_init__(self):
        if self.name not in UNITS:
            raise ValueError(f"{self.name} is not a material parameter")
        if not self.low < self.high:
            raise ValueError(f"factor {self.name}: low level {self.low} must be below high level {self.high}")

    @property
    def midpoint(self):
        return 0.5 * (self.low + self.high)

    def level(self, index):
        return self.high if index else self.low


def factors_from_initial(initial, fraction=0.1):
    """
    Build factors with levels initial -/+ fraction * |initial|.

    :param initial: dict of parameter name -> initial value
    :param fraction: relative half-width of the levels
    :return: list of FactorSpec in the order of ``initial``
    """
    if not fraction > 0:
        raise ValueError(f"fraction must be > 0, got {fraction}")
    factors = []
    for name, value in initial.items():
        half = fraction * abs(value)
        factors.append(FactorSpec(name, value - half, value + half))
    return factors


class DesignMatrix:
    """
    The 2^N level combinations of N factors in lexicographic order (first
    factor varies slowest; 0 is the low level), with one response slot per row.
    """

    def __init__(self, factors, levels, responses=None):
        self.factors = list(factors)
        self.levels = np.asarray(levels, dtype=np.int8)
        n_rows = self.levels.shape[0]
        if responses is None:
            responses = np.full(n_rows, np.nan)
        self.responses = np.asarray(responses, dtype=float)
        if self.levels.shape != (n_rows, len(self.factors)) or self.responses.shape != (n_rows,):
            raise ValueError("levels, factors and responses do not agree in shape")
        low = np.array([f.low for f in self.factors])
        high = np.array([f.high for f in self.factors])
        self._values = np.where(self.levels == 1, high, low)

    @property
    def factor_names(self):
        return [f.name for f in self.factors]

    @property
    def n_rows(self):
        return self.levels.shape[0]

    @property
    def values(self):
        """(rows, factors) array of level values, built once with the design."""
        return self._values

    @property
    def midpoints(self):
        return np.array([f.midpoint for f in self.factors])

    def row_parameters(self, index, base):
        return base.with_values(self.factor_names, self.values[index])

    def reference_parameters(self, base):
        return base.with_values(self.factor_names, self.midpoints)

    def to_frame(self):
        frame = pd.DataFrame(self.values, columns=self.factor_names)
        frame[RESPONSE] = self.responses
        return frame

    def save(self, path):
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def load(path):
        frame = pd.read_csv(path)
        names = [c for c in frame.columns if c != RESPONSE]
        factors, levels = [], []
        for name in names:
            column = frame[name].to_numpy(dtype=float)
            distinct = np.unique(column)
            if distinct.size != 2:
                raise ValueError(f"{path}: factor column {name} must hold exactly two levels")
            factors.append(FactorSpec(name, float(distinct[0]), float(distinct[1])))
            levels.append(column == distinct[1])
        responses = frame[RESPONSE].to_numpy(dtype=float) if RESPONSE in frame else None
        return DesignMatrix(factors, np.column_stack(levels).astype(np.int8), responses)


def generate_full_factorial(factors):
    """
    Enumerate every low/high combination of the factors.

    Args:
        factors (list): FactorSpec objects, 1 to 20 of them with distinct names

    Returns:
        DesignMatrix: 2^N rows, lexicographically ordered
    """
    n = len(factors)
    if n > MAX_FACTORS:
        raise TooManyFactors(f"{n} factors requested, at most {MAX_FACTORS} are supported")
    if n < 1:
        raise ValueError("a factorial design needs at least one factor")
    names = [f.name for f in factors]
    if len(set(names)) != n:
        raise ValueError(f"duplicate factor names in {names}")
    rows = np.arange(2 ** n)[:, None]
    shifts = np.arange(n - 1, -1, -1)[None, :]
    return DesignMatrix(factors, (rows >> shifts) & 1)


def _row_problems(params):
    found = params.problems()
    if not found:
        try:
            derive_coefficients(params)
        except InfeasibleParameters as e:
            found.append(str(e))
    return found


def check_feasibility(design, base):
    """
    :raises InfeasibleDesign: listing the rows whose parameters violate
        the material invariants
    """
    offending = []
    for i in range(design.n_rows):
        found = _row_problems(design.row_parameters(i, base))
        if found:
            offending.append((i, found[0]))
    if offending:
        shown = "; ".join(f"row {i}: {msg}" for i, msg in offending[:10])
        more = f" (and {len(offending) - 10} more)" if len(offending) > 10 else ""
        raise InfeasibleDesign(f"{len(offending)} infeasible design rows: {shown}{more}")


def design_response(params, stress, grid, reference_loop):
    """Squared loop distance between params and the reference loop."""
    return loop_distance(simulate_isobaric_loop(stress, grid, params), reference_loop)


def _evaluate_row(args):
    index, params, stress, grid, reference_loop = args
    try:
        return index, design_response(params, stress, grid, reference_loop), None
    except (IncompleteTransformation, RootBracketFailure, InfeasibleParameters) as e:
        return index, np.nan, str(e)


def evaluate_design(design, stress, base, grid=None, jobs=1, n_grid=500, margin=15.0):
    """
    Fill design.responses with the distance of every row's loop to the
    reference (all factors at their midpoints) loop.

    A row whose solve fails is logged and gets a NaN response; the rest of
    the batch still runs.

    :param design: DesignMatrix
    :param stress: applied stress in Pa
    :param base: MaterialParameters supplying every non-factor value
    :param grid: TemperatureGrid, by default one covering every row
    :param jobs: worker processes
    :return: the response array
    """
    reference = design.reference_parameters(base).validate()
    check_feasibility(design, base)
    rows = [design.row_parameters(i, base) for i in range(design.n_rows)]
    if grid is None:
        grid = TemperatureGrid.covering([stress], [reference] + rows, margin, n_grid)
    reference_loop = simulate_isobaric_loop(stress, grid, reference)
    tasks = [(i, p, stress, grid, reference_loop) for i, p in enumerate(rows)]
    logger.info("evaluating %d design rows at %g MPa on %d worker(s)", len(tasks), stress / 1e6, jobs)
    responses = np.full(design.n_rows, np.nan)
    step = max(1, len(tasks) // 10)
    done = 0
    if jobs > 1:
        with mp.Pool(jobs) as workers:
            results = workers.imap_unordered(_evaluate_row, tasks, chunksize=max(1, len(tasks) // (8 * jobs)))
            for index, value, error in results:
                done = _record(responses, index, value, error, done, step, len(tasks))
    else:
        for task in tasks:
            index, value, error = _evaluate_row(task)
            done = _record(responses, index, value, error, done, step, len(tasks))
    design.responses = responses
    failed = int(np.isnan(responses).sum())
    if failed:
        logger.warning("%d of %d design rows failed to solve", failed, design.n_rows)
    return responses


def _record(responses, index, value, error, done, step, total):
    responses[index] = value
    if error is not None:
        logger.warning("design row %d failed: %s", index, error)
    done += 1
    if done % step == 0 or done == total:
        logger.info("design rows: %d/%d", done, total)
    return done


@dataclasses.dataclass
class AnovaRow:
    source: str
    ss: float
    df: int
    ms: float = np.nan
    f: float = np.nan
    p: float = np.nan
    log10_p: float = np.nan


class AnovaTable:
    """
    Main-effects analysis of variance: one row per factor plus the Error and
    Total rows. Factor rows are kept ranked by ascending p-value.
    """

    def __init__(self, factor_rows, error, total):
        self.factor_rows = sorted(
            factor_rows, key=lambda r: (r.log10_p, -r.f if np.isfinite(r.f) else -np.inf)
        )
        self.error = error
        self.total = total

    @property
    def sources(self):
        return [r.source for r in self.factor_rows]

    def row(self, source):
        for r in self.factor_rows + [self.error, self.total]:
            if r.source == source:
                return r
        raise KeyError(source)

    def to_frame(self):
        records = []
        for r in self.factor_rows + [self.error, self.total]:
            records.append(dict(zip(ANOVA_COLUMNS, (r.source, r.ss, r.df, r.ms, r.f, r.p, r.log10_p))))
        return pd.DataFrame.from_records(records, columns=list(ANOVA_COLUMNS))

    def save(self, path):
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def load(path):
        frame = pd.read_csv(path)
        rows = [
            AnovaRow(str(rec["Source"]), float(rec["Sum sq."]), int(rec["d.f."]), float(rec["Mean sq."]),
                     float(rec["F"]), float(rec["Prob>F"]), float(rec["log10(Prob>F)"]))
            for rec in frame.to_dict(orient="records")
        ]
        by_source = {r.source: r for r in rows}
        error = by_source.pop(ERROR_SOURCE)
        total = by_source.pop(TOTAL_SOURCE)
        return AnovaTable(list(by_source.values()), error, total)

    def __eq__(self, other):
        if not isinstance(other, AnovaTable):
            return NotImplemented
        return self.to_frame().equals(other.to_frame())


def anova_main_effects(design, responses=None):
    """
    N-way main-effects ANOVA with one observation per level combination.

    For factor j, SS_j = sum over levels of n_level * (level mean - grand mean)^2.
    SS_E = SS_T - sum SS_j collects every interaction. F_j = MS_j / MS_E and the
    p-value is the upper F tail.

    Args:
        design (DesignMatrix): the design, with responses filled in
        responses (array, optional): overrides design.responses

    Returns:
        AnovaTable

    Raises:
        IncompleteDesign: a response is missing
        DegenerateResponse: every response is identical
    """
    y = np.asarray(design.responses if responses is None else responses, dtype=float)
    if y.shape != (design.n_rows,):
        raise ValueError(f"expected {design.n_rows} responses, got {y.shape}")
    missing = np.flatnonzero(~np.isfinite(y))
    if missing.size:
        raise IncompleteDesign(f"{missing.size} rows have no response, first at row {int(missing[0])}")
    centered = y - y.mean()
    ss_total = float(np.dot(centered, centered))
    if ss_total == 0.0:
        raise DegenerateResponse("all responses are identical; total sum of squares is zero")
    df_total = design.n_rows - 1

    factor_rows = []
    for j, factor in enumerate(design.factors):
        column = design.levels[:, j]
        counts = np.bincount(column, minlength=2).astype(float)
        sums = np.bincount(column, weights=centered, minlength=2)
        present = counts > 0
        ss = float(np.sum(sums[present] ** 2 / counts[present]))
        factor_rows.append(AnovaRow(factor.name, ss, int(present.sum()) - 1))

    df_error = df_total - sum(r.df for r in factor_rows)
    if df_error < 1:
        raise numerics.InvalidDof(f"the design leaves {df_error} error degrees of freedom")
    ss_error = max(0.0, ss_total - sum(r.ss for r in factor_rows))
    ms_error = ss_error / df_error
    for r in factor_rows:
        r.ms = r.ss / r.df if r.df else 0.0
        if r.ms == 0.0:
            r.f = 0.0
        elif ms_error == 0.0:
            r.f = np.inf
        else:
            r.f = r.ms / ms_error
        r.p = numerics.f_survival(r.f, max(r.df, 1), df_error)
        r.log10_p = numerics.log10_f_survival(r.f, max(r.df, 1), df_error)
    error = AnovaRow(ERROR_SOURCE, ss_error, df_error, ms_error)
    total = AnovaRow(TOTAL_SOURCE, ss_total, df_total)
    return AnovaTable(factor_rows, error, total)


def rank_and_select(table, alpha=0.05):
    """
    Factors ranked by ascending p-value and cut at the significance level.

    A factor is selected when p < alpha; alpha >= 1 keeps every factor.

    :return: (ranked factor names, selected factor names)
    """
    ranked = table.sources
    selected = [r.source for r in table.factor_rows if r.p < alpha or alpha >= 1.0]
    return ranked, selected


def screening_figure(table, path, alpha=0.05):
    """Bar chart of -log10(p) per factor with the significance cut."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import seaborn as sns
    frame = table.to_frame().iloc[:-2]
    # p underflowed to 0 is drawn at the double-precision floor
    frame = frame.assign(score=(-frame["log10(Prob>F)"]).replace(np.inf, 350.0))
    fig, ax = plt.subplots(figsize=(8, 4))
    sns.barplot(data=frame, x="Source", y="score", ax=ax, color="tab:blue")
    if 0 < alpha < 1:
        ax.axhline(-np.log10(alpha), color="k", linestyle="--", linewidth=1)
    ax.set_ylabel("-log10(Prob>F)")
    ax.set_xlabel("")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
