"""Least squares with the residual diagnostic battery.

Fits use a column-pivoted QR decomposition; the normal-equations inverse is
never formed from X'X directly.
"""

import logging
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import TypeAlias

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .config import RANK_TOLERANCE_FACTOR, SIGNIFICANCE_LEVEL, STAR_5PCT, STAR_10PCT
from .exceptions import DegenerateSample, DimensionMismatch, InvalidDesign, RankDeficient

logger = logging.getLogger(__name__)

# Type aliases
Vector: TypeAlias = np.ndarray
Matrix: TypeAlias = np.ndarray
RowKey: TypeAlias = tuple[str, int]

INTERCEPT = "const"


class Decision(StrEnum):
    REJECT = "reject"
    RETAIN = "retain"
    UNAVAILABLE = "n/a"


@dataclass(frozen=True)
class DesignMatrix:
    """Response vector and regressor matrix with named columns."""

    response: Vector
    regressors: Matrix
    column_names: tuple[str, ...]
    row_keys: tuple[RowKey, ...] = ()

    def __post_init__(self) -> None:
        y = np.array(self.response, dtype=float).reshape(-1)
        x = np.array(self.regressors, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"response has {y.shape[0]} rows but regressors have shape {x.shape}"
            )
        n, k = x.shape
        if len(self.column_names) != k:
            raise DimensionMismatch(f"{len(self.column_names)} column names for {k} columns")
        if len(set(self.column_names)) != k:
            raise InvalidDesign(f"column names must be unique: {self.column_names}")
        if not k >= 1 or not n > k:
            raise InvalidDesign(f"need n > k >= 1, got n={n}, k={k}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise InvalidDesign("design contains non-finite entries")
        keys = tuple(self.row_keys)
        if keys and len(keys) != n:
            raise DimensionMismatch(f"{len(keys)} row keys for {n} rows")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "regressors", x)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "row_keys", keys)

    @property
    def n(self) -> int:
        return self.regressors.shape[0]

    @property
    def k(self) -> int:
        return self.regressors.shape[1]

    @property
    def intercept_index(self) -> int | None:
        """Index of the first all-ones column, if any."""
        for j in range(self.k):
            if np.all(self.regressors[:, j] == 1.0):
                return j
        return None

    @property
    def has_intercept(self) -> bool:
        return self.intercept_index is not None

    def column(self, name: str) -> Vector:
        return self.regressors[:, self.column_names.index(name)]

    def with_response(self, response: Vector) -> "DesignMatrix":
        return DesignMatrix(response, self.regressors, self.column_names, self.row_keys)

    def to_frame(self) -> pd.DataFrame:
        index = pd.MultiIndex.from_tuples(self.row_keys, names=["region_id", "year"]) if self.row_keys else None
        frame = pd.DataFrame(self.regressors, columns=list(self.column_names), index=index)
        frame.insert(0, "response", self.response)
        return frame


@dataclass(frozen=True)
class QrSolution:
    """Least-squares solution plus the factorization later tests reuse."""

    coefficients: Vector
    residuals: Vector
    q: Matrix  # n x k orthonormal basis of the column space
    xtx_inv: Matrix  # (X'X)^-1 in the original column order

    def project(self, v: Vector) -> Vector:
        """Orthogonal projection of v onto the column space of X."""
        return self.q @ (self.q.T @ v)

    def annihilate(self, v: Vector) -> Vector:
        """M v with M = I - X (X'X)^-1 X'."""
        return v - self.project(v)


def qr_solve(regressors: Matrix, response: Vector, column_names: tuple[str, ...]) -> QrSolution:
    """Solve min ||y - X b|| with a pivoted QR, rejecting rank-deficient X."""
    x = np.asarray(regressors, dtype=float)
    y = np.asarray(response, dtype=float)
    n, k = x.shape
    q, r, pivot = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_TOLERANCE_FACTOR * max(n, k) * np.finfo(float).eps * (diag[0] if k else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < k or diag[0] == 0.0:
        dependent = [column_names[j] for j in pivot[rank:]] or list(column_names)
        raise RankDeficient(dependent)

    coef_pivoted = linalg.solve_triangular(r, q.T @ y)
    coefficients = np.empty(k)
    coefficients[pivot] = coef_pivoted

    r_inv = linalg.solve_triangular(r, np.eye(k))
    inv_pivoted = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(pivot, pivot)] = inv_pivoted

    residuals = y - x @ coefficients
    return QrSolution(coefficients=coefficients, residuals=residuals, q=q, xtx_inv=xtx_inv)


@dataclass(frozen=True)
class TestStat:
    """A named test statistic with its reference-distribution p-value."""

    name: str
    statistic: float
    df: int | None
    p_value: float
    decision_at_5pct: Decision
    df_denominator: int | None = None

    __test__ = False  # not a pytest class

    @classmethod
    def chi2(cls, name: str, statistic: float, df: int) -> "TestStat":
        p_value = float(stats.chi2.sf(statistic, df))
        return cls(name, float(statistic), df, p_value, _decide(p_value, 0.05))

    @classmethod
    def f_dist(cls, name: str, statistic: float, df_num: int, df_den: int) -> "TestStat":
        p_value = float(stats.f.sf(statistic, df_num, df_den))
        return cls(name, float(statistic), df_num, p_value, _decide(p_value, 0.05), df_den)

    @classmethod
    def unavailable(cls, name: str, df: int | None = None) -> "TestStat":
        """Placeholder for a statistic that could not be computed."""
        return cls(name, float("nan"), df, float("nan"), Decision.UNAVAILABLE)

    def rejects(self, alpha: float = SIGNIFICANCE_LEVEL) -> bool:
        return self.p_value < alpha


def _decide(p_value: float, alpha: float) -> Decision:
    return Decision.REJECT if p_value < alpha else Decision.RETAIN


def significance_marker(p_value: float) -> str:
    """Star convention of the report tables: * at 5%, ** at 10%."""
    if p_value < STAR_5PCT:
        return "*"
    if p_value < STAR_10PCT:
        return "**"
    return ""


@dataclass(frozen=True)
class OlsFit:
    column_names: tuple[str, ...]
    coefficients: Vector
    std_errors: Vector
    t_stats: Vector
    p_values: Vector
    residuals: Vector
    fitted: Vector
    sigma2: float
    r_squared: float
    see: float
    df: int
    log_likelihood: float
    hat_inputs: QrSolution = field(repr=False)

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def k(self) -> int:
        return self.coefficients.shape[0]

    @property
    def r_squared_defined(self) -> bool:
        return not np.isnan(self.r_squared)

    @property
    def covariance(self) -> Matrix:
        return self.sigma2 * self.hat_inputs.xtx_inv

    @property
    def ssr(self) -> float:
        return float(self.residuals @ self.residuals)

    @property
    def aic(self) -> float:
        return -2.0 * self.log_likelihood + 2.0 * self.k

    @property
    def schwarz(self) -> float:
        return -2.0 * self.log_likelihood + self.k * np.log(self.n)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "coefficient": self.coefficients,
                "std_error": self.std_errors,
                "t_stat": self.t_stats,
                "p_value": self.p_values,
            },
            index=pd.Index(self.column_names, name="term"),
        )


def gaussian_log_likelihood(residuals: Vector) -> float:
    """Gaussian log-likelihood at the ML variance e'e/n."""
    n = residuals.shape[0]
    sigma2_ml = float(residuals @ residuals) / n
    return -0.5 * n * (np.log(2.0 * np.pi) + np.log(sigma2_ml) + 1.0)


def r_squared(response: Vector, residuals: Vector, centered: bool = True) -> float:
    """Coefficient of determination; NaN when total variation is zero."""
    base = response - response.mean() if centered else response
    tss = float(base @ base)
    if tss == 0.0:
        return float("nan")
    return 1.0 - float(residuals @ residuals) / tss


def ols_fit(design: DesignMatrix) -> OlsFit:
    solution = qr_solve(design.regressors, design.response, design.column_names)
    n, k = design.n, design.k
    df = n - k
    e = solution.residuals
    sigma2 = float(e @ e) / df
    std_errors = np.sqrt(sigma2 * np.diag(solution.xtx_inv))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = solution.coefficients / std_errors
    p_values = 2.0 * stats.t.sf(np.abs(t_stats), df)

    r2 = r_squared(design.response, e, centered=design.has_intercept)
    if np.isnan(r2):
        logger.info("R-squared undefined: response has zero total variation")

    with np.errstate(divide="ignore"):
        loglik = gaussian_log_likelihood(e)

    return OlsFit(
        column_names=design.column_names,
        coefficients=solution.coefficients,
        std_errors=std_errors,
        t_stats=t_stats,
        p_values=p_values,
        residuals=e,
        fitted=design.response - e,
        sigma2=sigma2,
        r_squared=r2,
        see=float(np.sqrt(sigma2)),
        df=df,
        log_likelihood=float(loglik),
        hat_inputs=solution,
    )


def jarque_bera(residuals: Vector) -> TestStat:
    e = np.asarray(residuals, dtype=float)
    n = e.shape[0]
    if n < 4:
        raise DegenerateSample(f"Jarque-Bera needs at least 4 observations, got {n}")
    if np.ptp(e) == 0.0:
        raise DegenerateSample("Jarque-Bera undefined for constant residuals")
    z = e - e.mean()
    m2 = float(np.mean(z**2))
    skewness = float(np.mean(z**3)) / m2**1.5
    kurtosis = float(np.mean(z**4)) / m2**2
    statistic = n * (skewness**2 / 6.0 + (kurtosis - 3.0) ** 2 / 24.0)
    return TestStat.chi2("JB", statistic, 2)


def _auxiliary_ess(target: Vector, fit: OlsFit) -> tuple[float, float]:
    """Explained and total (centered) sums of squares of target regressed on X."""
    fitted = fit.hat_inputs.project(target)
    mean = target.mean()
    ess = float(np.sum((fitted - mean) ** 2))
    tss = float(np.sum((target - mean) ** 2))
    return ess, tss


def _check_pair(fit: OlsFit, design: DesignMatrix) -> None:
    if fit.n != design.n or fit.k != design.k:
        raise DimensionMismatch("fit was not produced from this design")
    if design.k < 2:
        raise InvalidDesign("heteroskedasticity tests need at least one regressor besides the intercept")


def breusch_pagan(fit: OlsFit, design: DesignMatrix) -> TestStat:
    """LM form: half the explained sum of squares of e^2/(e'e/n) on X."""
    _check_pair(fit, design)
    e = fit.residuals
    sigma2_ml = float(e @ e) / fit.n
    if sigma2_ml == 0.0:
        raise DegenerateSample("Breusch-Pagan undefined for zero residuals")
    ess, _ = _auxiliary_ess(e**2 / sigma2_ml, fit)
    return TestStat.chi2("BP", 0.5 * ess, design.k - 1)


def koenker_bassett(fit: OlsFit, design: DesignMatrix) -> TestStat:
    """Studentized variant: n times the R-squared of e^2 on X."""
    _check_pair(fit, design)
    squares = fit.residuals**2
    ess, tss = _auxiliary_ess(squares, fit)
    # e^2 constant up to rounding: nothing to explain
    floor = fit.n * (1e-10 * float(squares.mean())) ** 2
    r2_aux = 0.0 if tss <= floor else ess / tss
    return TestStat.chi2("KB", fit.n * r2_aux, design.k - 1)
