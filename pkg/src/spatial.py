"""Spatial diagnostics and maximum-likelihood spatial models.

The lag model is y = rho W y + X b + e and the error model is y = X b + u with
u = lambda W u + e. Both are estimated by maximizing a likelihood concentrated
in the single spatial parameter; the log-determinant comes from the cached
eigenvalues of W.
"""

import logging
from collections.abc import Callable, Sequence
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
from scipy import linalg, optimize, stats

from .config import (
    BOUNDARY_TOLERANCE,
    HESSIAN_STEP_FRACTION,
    LIKELIHOOD_GRID_POINTS,
    OPTIMIZER_TOLERANCE,
    SIGNIFICANCE_LEVEL,
)
from .exceptions import (
    DegenerateSample,
    DegenerateWeights,
    DimensionMismatch,
    NumericalBreakdown,
    OptimizerAtBoundary,
)
from .lsq_core import (
    DesignMatrix,
    OlsFit,
    QrSolution,
    TestStat,
    breusch_pagan,
    gaussian_log_likelihood,
    jarque_bera,
    koenker_bassett,
    ols_fit,
    qr_solve,
)
from .weights import Interval, SpatialWeights

logger = logging.getLogger(__name__)

# Type aliases
Profile: TypeAlias = Callable[[float], float]

LM_LAG = "LM_lag"
LM_ERROR = "LM_error"
RLM_LAG = "RLM_lag"
RLM_ERROR = "RLM_error"


class SpatialModel(StrEnum):
    OLS = "OLS"
    SAR = "SAR"
    SEM = "SEM"


def _check_size(values: np.ndarray, w: SpatialWeights) -> None:
    if values.shape[0] != w.n:
        raise DimensionMismatch(f"vector of length {values.shape[0]} for {w.n} x {w.n} weights")


# Moran's I


@dataclass(frozen=True)
class MoranResult:
    i_value: float
    expected_i: float
    variance_i: float
    z_score: float
    p_value: float


def morans_i(residuals: np.ndarray, w: SpatialWeights) -> MoranResult:
    """Global Moran's I with moments under the normality assumption."""
    values = np.asarray(residuals, dtype=float)
    _check_size(values, w)
    if np.ptp(values) == 0.0:
        raise DegenerateSample("Moran's I is undefined for a constant vector")
    s0 = w.s0
    if s0 == 0.0:
        raise DegenerateWeights("Moran's I needs at least one nonzero weight")

    n = w.n
    z = values - values.mean()
    i_value = (n / s0) * float(z @ w.lag(z)) / float(z @ z)

    matrix = w.matrix
    s1 = 0.5 * float(np.sum((matrix + matrix.T) ** 2))
    s2 = float(np.sum((matrix.sum(axis=1) + matrix.sum(axis=0)) ** 2))
    expected = -1.0 / (n - 1)
    variance = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / (s0 * s0 * (n * n - 1)) - expected**2
    z_score = (i_value - expected) / np.sqrt(variance)
    p_value = 2.0 * float(stats.norm.sf(abs(z_score)))
    return MoranResult(i_value, expected, float(variance), float(z_score), p_value)


def local_morans_i(values: np.ndarray, w: SpatialWeights) -> np.ndarray:
    """Local indicators I_i = n z_i (W z)_i / z'z; they sum to S0 times global I."""
    x = np.asarray(values, dtype=float)
    _check_size(x, w)
    if np.ptp(x) == 0.0:
        raise DegenerateSample("local Moran's I is undefined for a constant vector")
    z = x - x.mean()
    return w.n * z * w.lag(z) / float(z @ z)


# Lagrange multiplier tests


@dataclass(frozen=True)
class _LmTerms:
    d: float  # e'Wy / s2
    g: float  # e'We / s2
    trace: float  # tr(W'W + WW)
    big_d: float  # (WXb)'M(WXb) / s2 + trace


def _lm_terms(fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> _LmTerms:
    if fit.n != design.n or fit.k != design.k:
        raise DimensionMismatch("fit was not produced from this design")
    _check_size(design.response, w)
    if not w.standardized:
        logger.warning("LM tests computed with a weights matrix that is not row-standardized")

    matrix = w.matrix
    trace = float(np.sum(matrix * matrix) + np.sum(matrix * matrix.T))
    if trace == 0.0:
        raise DegenerateWeights("tr(W'W + WW) is zero")

    e = fit.residuals
    s2 = float(e @ e) / fit.n
    if s2 == 0.0:
        raise DegenerateSample("LM tests are undefined for zero residuals")
    wxb = w.lag(fit.fitted)
    m_wxb = fit.hat_inputs.annihilate(wxb)
    return _LmTerms(
        d=float(e @ w.lag(design.response)) / s2,
        g=float(e @ w.lag(e)) / s2,
        trace=trace,
        big_d=float(m_wxb @ m_wxb) / s2 + trace,
    )


def _require_robust_denominator(terms: _LmTerms) -> None:
    if terms.big_d - terms.trace <= 1e-12 * terms.big_d:
        raise NumericalBreakdown("robust LM denominator vanishes: WXb lies in the column space of X")


def lm_lag(fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> TestStat:
    terms = _lm_terms(fit, design, w)
    return TestStat.chi2(LM_LAG, terms.d**2 / terms.big_d, 1)


def lm_error(fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> TestStat:
    terms = _lm_terms(fit, design, w)
    return TestStat.chi2(LM_ERROR, terms.g**2 / terms.trace, 1)


def robust_lm_lag(fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> TestStat:
    terms = _lm_terms(fit, design, w)
    _require_robust_denominator(terms)
    return TestStat.chi2(RLM_LAG, (terms.d - terms.g) ** 2 / (terms.big_d - terms.trace), 1)


def robust_lm_error(fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> TestStat:
    terms = _lm_terms(fit, design, w)
    _require_robust_denominator(terms)
    ratio = terms.trace / terms.big_d
    statistic = (terms.g - ratio * terms.d) ** 2 / (terms.trace * (1.0 - ratio))
    return TestStat.chi2(RLM_ERROR, statistic, 1)


def _guarded(test: Callable[[OlsFit, DesignMatrix, SpatialWeights], TestStat], name: str,
             fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> TestStat:
    try:
        return test(fit, design, w)
    except NumericalBreakdown as exc:
        logger.warning("%s not available: %s", name, exc)
        return TestStat.unavailable(name, 1)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Residual battery of the cross-section table, in its column order."""

    jarque_bera: TestStat
    breusch_pagan: TestStat
    koenker_bassett: TestStat
    moran: MoranResult
    lm_lag: TestStat
    robust_lm_lag: TestStat
    lm_error: TestStat
    robust_lm_error: TestStat

    COLUMNS = ("JB", "BP", "KB", "M'I", "LM_l", "LMR_l", "LM_e", "LMR_e")

    def columns(self) -> list[tuple[str, float, float]]:
        """(label, statistic, p-value) triples in table order."""
        return [
            ("JB", self.jarque_bera.statistic, self.jarque_bera.p_value),
            ("BP", self.breusch_pagan.statistic, self.breusch_pagan.p_value),
            ("KB", self.koenker_bassett.statistic, self.koenker_bassett.p_value),
            ("M'I", self.moran.i_value, self.moran.p_value),
            ("LM_l", self.lm_lag.statistic, self.lm_lag.p_value),
            ("LMR_l", self.robust_lm_lag.statistic, self.robust_lm_lag.p_value),
            ("LM_e", self.lm_error.statistic, self.lm_error.p_value),
            ("LMR_e", self.robust_lm_error.statistic, self.robust_lm_error.p_value),
        ]


def run_diagnostics(fit: OlsFit, design: DesignMatrix, w: SpatialWeights) -> DiagnosticsReport:
    return DiagnosticsReport(
        jarque_bera=jarque_bera(fit.residuals),
        breusch_pagan=breusch_pagan(fit, design),
        koenker_bassett=koenker_bassett(fit, design),
        moran=morans_i(fit.residuals, w),
        lm_lag=lm_lag(fit, design, w),
        robust_lm_lag=_guarded(robust_lm_lag, RLM_LAG, fit, design, w),
        lm_error=lm_error(fit, design, w),
        robust_lm_error=_guarded(robust_lm_error, RLM_ERROR, fit, design, w),
    )


# Maximum likelihood


@dataclass(frozen=True)
class SpatialFit:
    model: SpatialModel
    rho_or_lambda: float
    column_names: tuple[str, ...]
    coefficients: np.ndarray
    coefficient_std_errors: np.ndarray
    parameter_std_error: float
    sigma2: float
    log_likelihood: float
    interval: Interval
    residuals: np.ndarray
    fitted: np.ndarray
    pseudo_r_squared: float
    ols_log_likelihood: float
    covariance: np.ndarray = field(repr=False)  # order: coefficients, parameter, sigma2

    @property
    def parameter_name(self) -> str:
        return "rho" if self.model is SpatialModel.SAR else "lambda"

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def k(self) -> int:
        # spatial parameter counts as a coefficient
        return self.coefficients.shape[0] + 1

    @property
    def p_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.coefficients / self.coefficient_std_errors
        return 2.0 * stats.norm.sf(np.abs(z))

    @property
    def parameter_p_value(self) -> float:
        return 2.0 * float(stats.norm.sf(abs(self.rho_or_lambda / self.parameter_std_error)))

    @property
    def aic(self) -> float:
        return -2.0 * self.log_likelihood + 2.0 * self.k

    @property
    def schwarz(self) -> float:
        return -2.0 * self.log_likelihood + self.k * np.log(self.n)

    def lr_test(self) -> TestStat:
        """Likelihood ratio against the OLS model, chi-squared with 1 df."""
        statistic = max(0.0, 2.0 * (self.log_likelihood - self.ols_log_likelihood))
        return TestStat.chi2(f"LR_{self.parameter_name}", statistic, 1)


def _full_constant(n: int) -> float:
    return -0.5 * n * (np.log(2.0 * np.pi) + 1.0)


class _LagProfile:
    """Concentrated likelihood of the lag model; y - rho Wy is linear in rho."""

    def __init__(self, design: DesignMatrix, w: SpatialWeights) -> None:
        self.design = design
        self.w = w
        self.wy = w.lag(design.response)
        base = qr_solve(design.regressors, design.response, design.column_names)
        lagged = qr_solve(design.regressors, self.wy, design.column_names)
        self.b0, self.e0 = base.coefficients, base.residuals
        self.b1, self.e1 = lagged.coefficients, lagged.residuals

    def sigma2(self, rho: float) -> float:
        e = self.e0 - rho * self.e1
        return float(e @ e) / self.design.n

    def __call__(self, rho: float) -> float:
        n = self.design.n
        return _full_constant(n) - 0.5 * n * np.log(self.sigma2(rho)) + self.w.log_determinant(rho)

    def coefficients(self, rho: float) -> np.ndarray:
        return self.b0 - rho * self.b1

    def full(self, beta: np.ndarray, rho: float, sigma2: float) -> float:
        n = self.design.n
        e = self.design.response - rho * self.wy - self.design.regressors @ beta
        return -0.5 * n * np.log(2.0 * np.pi * sigma2) + self.w.log_determinant(rho) - float(e @ e) / (2.0 * sigma2)


class _ErrorProfile:
    """Concentrated likelihood of the error model via spatially filtered regressions."""

    def __init__(self, design: DesignMatrix, w: SpatialWeights) -> None:
        self.design = design
        self.w = w
        self.wy = w.lag(design.response)
        self.wx = w.lag(design.regressors)

    def filtered_fit(self, lam: float) -> QrSolution:
        y = self.design.response - lam * self.wy
        x = self.design.regressors - lam * self.wx
        return qr_solve(x, y, self.design.column_names)

    def sigma2(self, lam: float) -> float:
        e = self.filtered_fit(lam).residuals
        return float(e @ e) / self.design.n

    def __call__(self, lam: float) -> float:
        n = self.design.n
        return _full_constant(n) - 0.5 * n * np.log(self.sigma2(lam)) + self.w.log_determinant(lam)

    def coefficients(self, lam: float) -> np.ndarray:
        return self.filtered_fit(lam).coefficients

    def full(self, beta: np.ndarray, lam: float, sigma2: float) -> float:
        n = self.design.n
        u = self.design.response - self.design.regressors @ beta
        e = u - lam * self.w.lag(u)
        return -0.5 * n * np.log(2.0 * np.pi * sigma2) + self.w.log_determinant(lam) - float(e @ e) / (2.0 * sigma2)


def _profile(model: SpatialModel, design: DesignMatrix, w: SpatialWeights) -> _LagProfile | _ErrorProfile:
    _check_size(design.response, w)
    if model is SpatialModel.SAR:
        return _LagProfile(design, w)
    if model is SpatialModel.SEM:
        return _ErrorProfile(design, w)
    raise ValueError(f"no likelihood for model {model}")


def concentrated_log_likelihood(model: SpatialModel, parameter: float, design: DesignMatrix, w: SpatialWeights) -> float:
    """Log-likelihood with b and sigma^2 profiled out, constants included."""
    return float(_profile(model, design, w)(parameter))


def concentrated_sigma2(model: SpatialModel, parameter: float, design: DesignMatrix, w: SpatialWeights) -> float:
    return _profile(model, design, w).sigma2(parameter)


def _maximize(profile: Profile, interval: Interval, name: str) -> float:
    """Grid scan over the open interval, then bounded golden-section/parabolic refinement."""
    lo, hi = interval
    grid = np.linspace(lo, hi, LIKELIHOOD_GRID_POINTS + 2)[1:-1]
    values = np.array([profile(p) for p in grid])
    best = int(np.nanargmax(values))
    inset = (hi - lo) * 1e-12
    left = grid[best - 1] if best > 0 else lo + inset
    right = grid[best + 1] if best < grid.size - 1 else hi - inset
    result = optimize.minimize_scalar(
        lambda p: -profile(p),
        bounds=(left, right),
        method="bounded",
        options={"xatol": OPTIMIZER_TOLERANCE},
    )
    estimate = float(result.x)
    logger.debug("%s search: grid best %.6f, refined %.10f", name, grid[best], estimate)
    if estimate - lo < BOUNDARY_TOLERANCE or hi - estimate < BOUNDARY_TOLERANCE:
        raise OptimizerAtBoundary(name, estimate, interval)
    return estimate


def _numerical_hessian(f: Callable[[np.ndarray], float], theta: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Central second differences of f at theta."""
    p = theta.size
    hessian = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            ei = np.zeros(p)
            ej = np.zeros(p)
            ei[i] = steps[i]
            ej[j] = steps[j]
            value = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
            hessian[i, j] = hessian[j, i] = value
    return hessian


def _ml_fit(model: SpatialModel, design: DesignMatrix, w: SpatialWeights) -> SpatialFit:
    profile = _profile(model, design, w)
    interval = w.admissible_interval()
    name = "rho" if model is SpatialModel.SAR else "lambda"
    estimate = _maximize(profile, interval, name)

    beta = profile.coefficients(estimate)
    sigma2 = profile.sigma2(estimate)
    log_likelihood = float(profile(estimate))

    k = design.k
    theta = np.concatenate([beta, [estimate, sigma2]])
    width = interval[1] - interval[0]
    steps = np.concatenate(
        [1e-4 * np.maximum(np.abs(beta), 1.0), [HESSIAN_STEP_FRACTION * width, 1e-4 * sigma2]]
    )

    def full(t: np.ndarray) -> float:
        return profile.full(t[:k], t[k], t[k + 1])

    information = -_numerical_hessian(full, theta, steps)
    try:
        covariance = linalg.inv(information)
    except linalg.LinAlgError:
        logger.warning("%s information matrix is singular; using a pseudo-inverse", model)
        covariance = linalg.pinv(information)
    variances = np.diag(covariance)
    if np.any(variances[: k + 1] <= 0.0):
        logger.warning("%s information matrix is not positive definite at the optimum", model)
    std_errors = np.sqrt(np.where(variances > 0.0, variances, np.nan))

    y = design.response
    if model is SpatialModel.SAR:
        fitted = estimate * profile.wy + design.regressors @ beta
    else:
        fitted = design.regressors @ beta
    residuals = y - fitted
    pseudo_r2 = float(np.corrcoef(y, fitted)[0, 1] ** 2) if np.ptp(fitted) > 0.0 else float("nan")

    ols_loglik = gaussian_log_likelihood(qr_solve(design.regressors, y, design.column_names).residuals)

    logger.info("%s fit: %s = %.6f, logL = %.6f", model, name, estimate, log_likelihood)
    return SpatialFit(
        model=model,
        rho_or_lambda=estimate,
        column_names=design.column_names,
        coefficients=beta,
        coefficient_std_errors=std_errors[:k],
        parameter_std_error=float(std_errors[k]),
        sigma2=sigma2,
        log_likelihood=log_likelihood,
        interval=interval,
        residuals=residuals,
        fitted=fitted,
        pseudo_r_squared=pseudo_r2,
        ols_log_likelihood=float(ols_loglik),
        covariance=covariance,
    )


def ml_sar(design: DesignMatrix, w: SpatialWeights) -> SpatialFit:
    """Spatial lag model by maximum likelihood."""
    return _ml_fit(SpatialModel.SAR, design, w)


def ml_sem(design: DesignMatrix, w: SpatialWeights) -> SpatialFit:
    """Spatial error model by maximum likelihood."""
    return _ml_fit(SpatialModel.SEM, design, w)


# Specification search


@dataclass(frozen=True)
class TrailEntry:
    step: int
    name: str
    statistic: float
    p_value: float
    decision: str


@dataclass(frozen=True)
class SpecSearchResult:
    chosen: SpatialModel
    trail: tuple[TrailEntry, ...]
    significance_level: float
    ols: OlsFit = field(repr=False)
    spatial_fit: SpatialFit | None = field(default=None, repr=False)


def _significant(entry: TrailEntry, alpha: float) -> bool:
    return bool(entry.p_value < alpha)


def replay_trail(trail: Sequence[TrailEntry], alpha: float) -> SpatialModel:
    """Decision rule of the forward search, as a pure function of the recorded tests."""
    by_name = {entry.name: entry for entry in trail}
    lag = _significant(by_name[LM_LAG], alpha)
    error = _significant(by_name[LM_ERROR], alpha)
    if not lag and not error:
        return SpatialModel.OLS
    if lag and not error:
        return SpatialModel.SAR
    if error and not lag:
        return SpatialModel.SEM

    robust_lag, robust_error = by_name.get(RLM_LAG), by_name.get(RLM_ERROR)
    if robust_lag is None or robust_error is None or np.isnan(robust_lag.p_value) or np.isnan(robust_error.p_value):
        raise NumericalBreakdown("both LM tests are significant but the robust tests are unavailable")
    if robust_lag.p_value != robust_error.p_value:
        return SpatialModel.SAR if robust_lag.p_value < robust_error.p_value else SpatialModel.SEM
    return SpatialModel.SAR if robust_lag.statistic >= robust_error.statistic else SpatialModel.SEM


def _entry(step: int, test: TestStat, alpha: float) -> TrailEntry:
    if np.isnan(test.p_value):
        decision = "unavailable"
    else:
        decision = "reject" if test.p_value < alpha else "retain"
    return TrailEntry(step, test.name, test.statistic, test.p_value, decision)


def spec_search(design: DesignMatrix, w: SpatialWeights, alpha: float = SIGNIFICANCE_LEVEL) -> SpecSearchResult:
    """Forward specification search: OLS, LM tests, robust LM tests, then ML fit of the winner."""
    fit = ols_fit(design)
    trail = (
        _entry(2, lm_lag(fit, design, w), alpha),
        _entry(2, lm_error(fit, design, w), alpha),
        _entry(5, _guarded(robust_lm_lag, RLM_LAG, fit, design, w), alpha),
        _entry(5, _guarded(robust_lm_error, RLM_ERROR, fit, design, w), alpha),
    )
    chosen = replay_trail(trail, alpha)
    logger.info("Specification search chose %s at alpha=%.3f", chosen, alpha)

    spatial_fit = None
    if chosen is SpatialModel.SAR:
        spatial_fit = ml_sar(design, w)
    elif chosen is SpatialModel.SEM:
        spatial_fit = ml_sem(design, w)
    return SpecSearchResult(chosen, trail, alpha, fit, spatial_fit)
