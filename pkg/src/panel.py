"""Fixed-effects (LSDV) and random-effects (GLS) panel estimators with the Hausman test."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import Literal

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .config import SIGNIFICANCE_LEVEL, THETA_LIMIT_TOLERANCE
from .exceptions import DimensionMismatch, InvalidDesign, UnbalancedPanel
from .lsq_core import DesignMatrix, OlsFit, TestStat, ols_fit, qr_solve, r_squared

logger = logging.getLogger(__name__)


class PanelMethod(StrEnum):
    LSDV = "LSDV"
    GLS = "GLS"


class Preferred(StrEnum):
    FE = "FE"
    RE = "RE"


@dataclass(frozen=True)
class VarianceComponents:
    sigma2_u: float
    sigma2_e: float
    theta: float
    method: str  # "swamy-arora" or "pooled-residual"
    clamped: bool = False


@dataclass(frozen=True)
class PanelFit:
    method: PanelMethod
    names: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    region_effects: dict[str, float] | VarianceComponents
    r_squared: float
    see: float
    df: int
    ssr: float
    residuals: np.ndarray = field(repr=False)
    n_regions: int = 0
    n_periods: int = 0
    intercept_name: str | None = None

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.std_errors

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * stats.t.sf(np.abs(self.t_stats), self.df)

    @property
    def _slope_mask(self) -> np.ndarray:
        return np.array([name != self.intercept_name for name in self.names])

    @property
    def slope_names(self) -> tuple[str, ...]:
        return tuple(name for name in self.names if name != self.intercept_name)

    @property
    def slope_coefficients(self) -> np.ndarray:
        return self.coefficients[self._slope_mask]

    @property
    def slope_covariance(self) -> np.ndarray:
        mask = self._slope_mask
        return self.covariance[np.ix_(mask, mask)]

    @property
    def theta(self) -> float | None:
        return self.region_effects.theta if isinstance(self.region_effects, VarianceComponents) else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "coefficient": self.coefficients,
                "std_error": self.std_errors,
                "t_stat": self.t_stats,
                "p_value": self.p_values,
            },
            index=pd.Index(self.names, name="term"),
        )


@dataclass(frozen=True)
class HausmanResult:
    statistic: float
    df: int
    p_value: float
    preferred: Preferred
    degenerate_flag: bool = False
    compared: tuple[str, ...] = ()

    @classmethod
    def from_statistic(
        cls,
        statistic: float,
        df: int,
        alpha: float = SIGNIFICANCE_LEVEL,
        degenerate_flag: bool = False,
        compared: tuple[str, ...] = (),
    ) -> "HausmanResult":
        p_value = float(stats.chi2.sf(statistic, df))
        preferred = Preferred.RE if p_value > alpha else Preferred.FE
        return cls(float(statistic), df, p_value, preferred, degenerate_flag, compared)


@dataclass(frozen=True)
class _PanelStructure:
    codes: np.ndarray  # region position of every row
    regions: tuple[str, ...]
    n_periods: int

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def means(self, values: np.ndarray) -> np.ndarray:
        """Region means of a vector or matrix, one row per region."""
        sums = np.zeros((self.n_regions,) + values.shape[1:])
        np.add.at(sums, self.codes, values)
        return sums / self.n_periods

    def demean(self, values: np.ndarray, theta: float = 1.0) -> np.ndarray:
        return values - theta * self.means(values)[self.codes]


def _structure(design: DesignMatrix) -> _PanelStructure:
    if not design.row_keys:
        raise DimensionMismatch("panel estimators need region x year row keys")
    region_ids = [key[0] for key in design.row_keys]
    codes, uniques = pd.factorize(pd.Series(region_ids))
    years = sorted({key[1] for key in design.row_keys})
    present = set(design.row_keys)
    missing = [(str(r), int(y)) for r in uniques for y in years if (r, y) not in present]
    if missing or len(present) != design.n:
        raise UnbalancedPanel(missing)
    if len(uniques) < 2 or len(years) < 2:
        raise InvalidDesign("panel estimators need at least two regions and two periods")
    return _PanelStructure(np.asarray(codes), tuple(str(r) for r in uniques), len(years))


def _slope_columns(design: DesignMatrix) -> list[int]:
    return [j for j in range(design.k) if not np.all(design.regressors[:, j] == 1.0)]


def fe_lsdv(design: DesignMatrix, method: Literal["within", "dummies"] = "within") -> PanelFit:
    """Fixed effects by the within transformation or by explicit region dummies."""
    panel = _structure(design)
    slope_idx = _slope_columns(design)
    if not slope_idx:
        raise InvalidDesign("fixed effects need at least one time-varying regressor")
    names = tuple(design.column_names[j] for j in slope_idx)
    x = design.regressors[:, slope_idx]
    y = design.response
    n, k = x.shape
    df = n - k - panel.n_regions
    if df <= 0:
        raise InvalidDesign(f"no residual degrees of freedom: n={n}, slopes={k}, regions={panel.n_regions}")

    if method == "within":
        solution = qr_solve(panel.demean(x), panel.demean(y), names)
        beta = solution.coefficients
        residuals = solution.residuals
        ssr = float(residuals @ residuals)
        covariance = ssr / df * solution.xtx_inv
        sigma2 = ssr / df
        intercepts = panel.means(y) - panel.means(x) @ beta
    elif method == "dummies":
        dummies = np.zeros((n, panel.n_regions))
        dummies[np.arange(n), panel.codes] = 1.0
        dummy_names = tuple(f"region[{r}]" for r in panel.regions)
        fit = ols_fit(DesignMatrix(y, np.hstack([x, dummies]), names + dummy_names, design.row_keys))
        beta = fit.coefficients[:k]
        residuals = fit.residuals
        ssr = fit.ssr
        sigma2 = fit.sigma2
        covariance = fit.covariance[:k, :k]
        intercepts = fit.coefficients[k:]
    else:
        raise ValueError(f"unknown fixed-effects method: {method}")

    return PanelFit(
        method=PanelMethod.LSDV,
        names=names,
        coefficients=beta,
        covariance=covariance,
        region_effects=dict(zip(panel.regions, (float(a) for a in intercepts))),
        r_squared=r_squared(y, residuals, centered=True),
        see=float(np.sqrt(sigma2)),
        df=df,
        ssr=ssr,
        residuals=residuals,
        n_regions=panel.n_regions,
        n_periods=panel.n_periods,
    )


def pooled_ols(design: DesignMatrix) -> OlsFit:
    """OLS on the stacked panel, ignoring region effects."""
    _structure(design)
    return ols_fit(design)


def _variance_components(design: DesignMatrix, panel: _PanelStructure) -> VarianceComponents:
    slope_idx = _slope_columns(design)
    x_slopes = design.regressors[:, slope_idx]
    y = design.response
    slope_names = tuple(design.column_names[j] for j in slope_idx)
    n, k_slopes = x_slopes.shape
    t = panel.n_periods

    within = qr_solve(panel.demean(x_slopes), panel.demean(y), slope_names)
    within_df = n - panel.n_regions - k_slopes
    if within_df <= 0:
        raise InvalidDesign("no within degrees of freedom for the idiosyncratic variance")
    sigma2_e = float(within.residuals @ within.residuals) / within_df

    k_full = design.k
    if panel.n_regions > k_full:
        between = qr_solve(panel.means(design.regressors), panel.means(y), design.column_names)
        sigma2_b = float(between.residuals @ between.residuals) / (panel.n_regions - k_full)
        sigma2_u = sigma2_b - sigma2_e / t
        method = "swamy-arora"
    else:
        # Too few regions for the between regression: use region means of pooled residuals
        logger.warning(
            "Between regression needs more than %d regions (have %d); "
            "estimating the region variance from pooled residuals",
            k_full,
            panel.n_regions,
        )
        pooled = qr_solve(design.regressors, y, design.column_names)
        region_means = panel.means(pooled.residuals)
        sigma2_u = float(region_means @ region_means) / panel.n_regions - sigma2_e / t
        method = "pooled-residual"

    clamped = False
    if sigma2_u < 0.0:
        logger.warning("Estimated region variance %.6g is negative; clamped to zero", sigma2_u)
        sigma2_u = 0.0
        clamped = True

    if sigma2_e == 0.0:
        theta = 1.0 if sigma2_u > 0.0 else 0.0
    else:
        theta = 1.0 - np.sqrt(sigma2_e / (sigma2_e + t * sigma2_u))
    return VarianceComponents(sigma2_u, sigma2_e, float(theta), method, clamped)


def _within_limit(
    design: DesignMatrix, panel: _PanelStructure, components: VarianceComponents, df: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """GLS at theta = 1: within slopes, intercept from the grand means."""
    # the quasi-demeaned intercept column vanishes; c = mean(y) - mean(x) b holds for every theta
    slope_idx = _slope_columns(design)
    intercept_idx = design.intercept_index
    x = design.regressors[:, slope_idx]
    y = design.response
    within = qr_solve(panel.demean(x), panel.demean(y), tuple(design.column_names[j] for j in slope_idx))
    beta = within.coefficients
    x_bar = x.mean(axis=0)
    slope_cov = float(within.residuals @ within.residuals) / df * within.xtx_inv

    coefficients = np.empty(design.k)
    coefficients[slope_idx] = beta
    coefficients[intercept_idx] = float(y.mean() - x_bar @ beta)
    covariance = np.empty((design.k, design.k))
    covariance[np.ix_(slope_idx, slope_idx)] = slope_cov
    cross = -slope_cov @ x_bar
    covariance[slope_idx, intercept_idx] = cross
    covariance[intercept_idx, slope_idx] = cross
    total = components.sigma2_e + panel.n_periods * components.sigma2_u
    covariance[intercept_idx, intercept_idx] = total / design.n + float(x_bar @ slope_cov @ x_bar)
    return coefficients, covariance, within.residuals


def re_gls(design: DesignMatrix) -> PanelFit:
    """Random effects by OLS on quasi-demeaned data."""
    panel = _structure(design)
    components = _variance_components(design, panel)
    theta = components.theta

    intercept_idx = design.intercept_index
    y_star = panel.demean(design.response, theta)
    df = design.n - design.k
    if intercept_idx is not None and 1.0 - theta <= THETA_LIMIT_TOLERANCE:
        coefficients, covariance, residuals = _within_limit(design, panel, components, df)
        ssr = float(residuals @ residuals)
    else:
        x_star = panel.demean(design.regressors, theta)
        solution = qr_solve(x_star, y_star, design.column_names)
        coefficients = solution.coefficients
        residuals = solution.residuals
        ssr = float(residuals @ residuals)
        covariance = ssr / df * solution.xtx_inv
    sigma2 = ssr / df

    logger.info(
        "GLS variance components (%s): sigma2_u=%.6g sigma2_e=%.6g theta=%.4f",
        components.method,
        components.sigma2_u,
        components.sigma2_e,
        theta,
    )
    return PanelFit(
        method=PanelMethod.GLS,
        names=design.column_names,
        coefficients=coefficients,
        covariance=covariance,
        region_effects=components,
        r_squared=r_squared(y_star, residuals, centered=True),
        see=float(np.sqrt(sigma2)),
        df=df,
        ssr=ssr,
        residuals=residuals,
        n_regions=panel.n_regions,
        n_periods=panel.n_periods,
        intercept_name=design.column_names[intercept_idx] if intercept_idx is not None else None,
    )


def hausman_test(
    fe: PanelFit,
    re: PanelFit,
    alpha: float = SIGNIFICANCE_LEVEL,
    slopes: Sequence[str] | None = None,
) -> HausmanResult:
    """H = d' [V_FE - V_RE]^- d over the compared slopes."""
    compared = tuple(slopes) if slopes is not None else fe.slope_names
    for name in compared:
        if name not in fe.slope_names or name not in re.slope_names:
            raise DimensionMismatch(f"slope {name!r} is not estimated by both fits")
    if not compared:
        raise DimensionMismatch("no slopes to compare")

    fe_idx = [fe.slope_names.index(name) for name in compared]
    re_idx = [re.slope_names.index(name) for name in compared]
    difference = fe.slope_coefficients[fe_idx] - re.slope_coefficients[re_idx]
    v_diff = fe.slope_covariance[np.ix_(fe_idx, fe_idx)] - re.slope_covariance[np.ix_(re_idx, re_idx)]

    degenerate = False
    try:
        factor = linalg.cho_factor(v_diff)
        statistic = float(difference @ linalg.cho_solve(factor, difference))
    except linalg.LinAlgError:
        logger.warning("V_FE - V_RE is not positive definite; using a pseudo-inverse")
        degenerate = True
        statistic = float(difference @ linalg.pinv(v_diff) @ difference)

    return HausmanResult.from_statistic(statistic, len(compared), alpha, degenerate, compared)


def region_effects_f_test(fe: PanelFit, pooled: OlsFit) -> TestStat:
    """F-test that every region intercept is equal."""
    if fe.method is not PanelMethod.LSDV:
        raise DimensionMismatch("region effects test needs a fixed-effects fit")
    if pooled.n != fe.residuals.shape[0]:
        raise DimensionMismatch("fits were estimated on different samples")
    df_num = fe.n_regions - 1
    statistic = ((pooled.ssr - fe.ssr) / df_num) / (fe.ssr / fe.df)
    return TestStat.f_dist("F_regions", statistic, df_num, fe.df)
