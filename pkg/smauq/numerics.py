"""
Statistical and linear-algebra kernels shared by the rest of smauq.

Everything here is a pure function of its inputs. Randomness always comes in
through an explicit ``numpy.random.Generator`` so that a pipeline run can be
repeated bit for bit from its seed.
"""

import math
import numpy as np
import scipy.linalg
import scipy.special

SYMMETRY_RTOL = 1e-10


class NotPositiveDefinite(ValueError):
    pass


class InvalidDof(ValueError):
    pass


class InvalidHyperparameter(ValueError):
    pass


class DegenerateSample(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class GaussianSummary:
    """
    A mean vector and a variance-covariance matrix, the Gaussian stand-in
    for a cloud of samples. Priors, posteriors and proposals all travel
    through the pipeline in this form.
    """

    def __init__(self, mean, covariance, names=None):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        self.covariance = np.atleast_2d(np.asarray(covariance, dtype=float)).copy()
        d = self.mean.shape[0]
        if self.covariance.shape != (d, d):
            raise DimensionMismatch(
                f"covariance shape {self.covariance.shape} does not match mean of length {d}"
            )
        scale = max(np.abs(self.covariance).max(), np.finfo(float).tiny)
        if np.abs(self.covariance - self.covariance.T).max() > SYMMETRY_RTOL * scale:
            raise ValueError("covariance is not symmetric")
        if np.any(np.diag(self.covariance) < 0):
            raise ValueError("covariance has a negative diagonal entry")
        self.names = list(names) if names is not None else [f"x{i}" for i in range(d)]

    @property
    def dimension(self):
        return self.mean.shape[0]

    @property
    def std(self):
        return np.sqrt(np.diag(self.covariance))

    @staticmethod
    def fit(samples, names=None):
        """
        Fit the equivalent normal distribution to a (n, d) array of samples.
        """
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] < 2:
            raise DegenerateSample("at least two samples are needed to fit a covariance")
        covariance = np.atleast_2d(np.cov(samples, rowvar=False))
        covariance = 0.5 * (covariance + covariance.T)
        return GaussianSummary(samples.mean(axis=0), covariance, names=names)

    def serialize(self):
        return {
            "names": list(self.names),
            "mean": [float(x) for x in self.mean],
            "covariance": [[float(x) for x in row] for row in self.covariance],
        }

    @staticmethod
    def deserialize(data):
        return GaussianSummary(data["mean"], data["covariance"], names=data.get("names"))

    def __eq__(self, other):
        if not isinstance(other, GaussianSummary):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
        )


def cholesky(matrix):
    """
    Lower-triangular factor L with L @ L.T == matrix.

    :param matrix: symmetric positive definite (d, d) array
    :return: L as a (d, d) array
    :raises NotPositiveDefinite: if a pivot is not strictly positive
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"matrix is not square: {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(str(e)) from e


def mvn_sample(gaussian, rng):
    """
    Draw mean + L z with z standard normal. Exactly d normals are consumed
    from ``rng`` per call.
    """
    lower = cholesky(gaussian.covariance)
    z = rng.standard_normal(gaussian.dimension)
    return gaussian.mean + lower @ z


def f_survival(f_ratio, d1, d2):
    """
    Upper-tail probability P(F > f_ratio) of the F(d1, d2) distribution,
    written through the regularized incomplete beta function
    I_x(d2/2, d1/2) with x = d2 / (d2 + d1 F).

    Args:
        f_ratio (float): the F statistic, >= 0. np.inf gives 0.
        d1 (int): numerator degrees of freedom
        d2 (int): denominator degrees of freedom

    Returns:
        float: the p-value
    """
    _check_dof(d1, d2)
    if f_ratio < 0 or np.isnan(f_ratio):
        raise ValueError(f"F ratio must be >= 0, got {f_ratio}")
    if f_ratio == 0:
        return 1.0
    if np.isinf(f_ratio):
        return 0.0
    x = d2 / (d2 + d1 * f_ratio)
    return float(scipy.special.betainc(0.5 * d2, 0.5 * d1, x))


def log10_f_survival(f_ratio, d1, d2):
    """
    log10 of f_survival. Tails that underflow double precision fall back
    to the leading term of the incomplete beta series,
    I_x(a, b) ~ x^a (1-x)^b / (a B(a, b)), evaluated in log space.
    """
    p = f_survival(f_ratio, d1, d2)
    if p > 0:
        return math.log10(p)
    if np.isinf(f_ratio):
        return -np.inf
    a, b = 0.5 * d2, 0.5 * d1
    log_x = math.log(d2) - math.log(d2 + d1 * f_ratio)
    log_1mx = math.log(d1 * f_ratio) - math.log(d2 + d1 * f_ratio)
    ln_p = a * log_x + b * log_1mx - math.log(a) - scipy.special.betaln(a, b)
    return ln_p / math.log(10)


def _check_dof(d1, d2):
    if d1 < 1 or d2 < 1:
        raise InvalidDof(f"degrees of freedom must be >= 1, got ({d1}, {d2})")


def inverse_gamma_sample(shape, scale, rng):
    """
    One draw from the inverse-gamma density proportional to
    x^-(shape+1) exp(-scale / x), taken as scale / Gamma(shape, 1).
    """
    if not (shape > 0 and scale > 0):
        raise InvalidHyperparameter(
            f"inverse-gamma shape and scale must be > 0, got ({shape}, {scale})"
        )
    return float(scale / rng.gamma(shape, 1.0))


def pearson(x, y):
    """
    Linear correlation coefficient cov(X, Y) / (sd_X sd_Y).

    :raises DegenerateSample: if either vector is constant
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch(f"pearson needs two vectors of equal length, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise DegenerateSample("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise DegenerateSample("pearson is undefined for a constant sample")
    rho = np.dot(dx, dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))


def kl_mvn(n1, n2):
    """
    Kullback-Leibler divergence D(n1 || n2) between two multivariate
    normals, in nats:

        0.5 [ln(|S2|/|S1|) - d + tr(S2^-1 S1) + (m2-m1)^T S2^-1 (m2-m1)]

    Determinants come from the Cholesky factors.
    """
    if n1.dimension != n2.dimension:
        raise DimensionMismatch(f"dimensions differ: {n1.dimension} vs {n2.dimension}")
    d = n1.dimension
    l1 = cholesky(n1.covariance)
    l2 = cholesky(n2.covariance)
    logdet1 = 2.0 * np.sum(np.log(np.diag(l1)))
    logdet2 = 2.0 * np.sum(np.log(np.diag(l2)))
    # S2^-1 S1 via two triangular solves against L2
    w = scipy.linalg.solve_triangular(l2, n1.covariance, lower=True)
    trace_term = np.trace(scipy.linalg.solve_triangular(l2.T, w, lower=False))
    diff = scipy.linalg.solve_triangular(l2, n2.mean - n1.mean, lower=True)
    kl = 0.5 * (logdet2 - logdet1 - d + trace_term + float(np.dot(diff, diff)))
    return max(0.0, float(kl))
