"""Synthetic regional panels, spatial cross-sections and the Monte Carlo recovery harness."""

import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import partial
from pathlib import Path
from typing import TypeAlias

import numpy as np
import pandas as pd
from scipy import linalg, stats
from tqdm import tqdm

from .config import DEFAULT_SEED, DISTANCE_POWER
from .dataset import (
    VALUE_COLUMNS,
    MigrationVariables,
    PanelDataset,
    Region,
    build_migration_variables,
    design_columns,
    to_panel_design,
)
from .exceptions import (
    DimensionMismatch,
    InfeasibleBackSolve,
    MigrationError,
    ParameterOutOfRange,
    ScenarioError,
    SingularSystem,
)
from .lsq_core import INTERCEPT, DesignMatrix, ols_fit
from .panel import fe_lsdv, re_gls
from .spatial import SpatialModel, ml_sar, ml_sem, spec_search
from .weights import SpatialWeights, binary_contiguity_weights, inverse_distance_weights, row_standardize

logger = logging.getLogger(__name__)

# Type aliases
Seed: TypeAlias = int | np.random.SeedSequence
Estimate: TypeAlias = tuple[float, float]  # (value, standard error)

PANEL_ESTIMATORS = ("ols", "fe", "re")
SPATIAL_ESTIMATORS = ("sar", "sem", "specsearch")
ESTIMATORS = PANEL_ESTIMATORS + SPATIAL_ESTIMATORS
WEIGHT_KINDS = ("lattice", "inverse_distance")

COVERAGE_LEVEL = 0.95

# (national mean growth, regional differential sd) of the exogenous series
_GROWTH_SERIES = {
    "real_output": (0.02, 0.02),
    "wage_index": (0.03, 0.02),
    "housing_stock": (0.01, 0.01),
}
_NATIONAL_GROWTH_SD = 0.01
_UNEMPLOYMENT_RANGE = (0.05, 0.12)
_UNEMPLOYMENT_SD = 0.02
_AGRI_SHARE_RANGE = (0.05, 0.30)
_AGRI_SHARE_SD = 0.01
_BASE_LEVELS = {
    "active_pop": 5.0e5,
    "total_employment": 4.0e5,
    "real_output": 1.0e4,
    "wage_index": 100.0,
    "housing_stock": 2.0e5,
}


@dataclass(frozen=True)
class SimConfig:
    """Scenario of a simulation run; field names double as scenario-file keys."""

    n_regions: int = 20
    n_periods: int = 10  # usable periods; the panel holds one more year
    true_coefficients: tuple[float, ...] = (0.0, 0.5, -0.5, -0.1, 0.2, 0.1)
    sigma_e: float = 0.01
    sigma_u: float = 0.0
    rho: float = 0.0
    lam: float = 0.0
    master_seed: int = DEFAULT_SEED
    replications: int = 200
    estimator: str = "ols"
    include_wage: bool = True
    include_housing: bool = True
    weights: str = "lattice"
    distance_power: float = DISTANCE_POWER
    first_year: int = 1991

    def __post_init__(self) -> None:
        object.__setattr__(self, "true_coefficients", tuple(float(b) for b in self.true_coefficients))
        if self.n_regions < 2:
            raise ScenarioError("n_regions", "at least two regions are required")
        if self.n_periods < 1:
            raise ScenarioError("n_periods", "at least one usable period is required")
        if not self.true_coefficients:
            raise ScenarioError("true_coefficients", "at least the intercept is required")
        for name in ("sigma_e", "sigma_u"):
            if getattr(self, name) < 0.0:
                raise ScenarioError(name, "must be nonnegative")
        if self.rho != 0.0 and self.lam != 0.0:
            raise ScenarioError("lambda", "rho and lambda cannot both be nonzero")
        if self.replications < 1:
            raise ScenarioError("replications", "must be positive")
        if self.estimator not in ESTIMATORS:
            raise ScenarioError("estimator", f"must be one of {', '.join(ESTIMATORS)}")
        if self.weights not in WEIGHT_KINDS:
            raise ScenarioError("weights", f"must be one of {', '.join(WEIGHT_KINDS)}")
        if not self.distance_power > 0.0:
            raise ScenarioError("distance_power", "must be positive")
        if self.estimator in PANEL_ESTIMATORS:
            self._check_panel_coefficients()

    def _check_panel_coefficients(self) -> None:
        columns = design_columns(self.include_wage, self.include_housing)
        if len(self.true_coefficients) != len(columns):
            raise ScenarioError(
                "true_coefficients",
                f"expected {len(columns)} values for columns {', '.join(columns)}",
            )

    @property
    def coefficient_names(self) -> tuple[str, ...]:
        columns = design_columns(self.include_wage, self.include_housing)
        if len(self.true_coefficients) == len(columns):
            return columns
        return (INTERCEPT,) + tuple(f"x{j}" for j in range(1, len(self.true_coefficients)))


_SCENARIO_KEYS = {"lambda": "lam"}


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise ValueError(raw)


def load_scenario(path: Path | str) -> SimConfig:
    """Read `key = value` lines (with `#` comments) into a SimConfig."""
    path = Path(path)
    types = {f.name: f.type for f in fields(SimConfig)}
    values: dict[str, object] = {}
    for raw_line in path.read_text(encoding="utf-8").splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(line, "expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        name = _SCENARIO_KEYS.get(key, key)
        if name not in types or key == "lam":
            raise ScenarioError(key, "unknown key")
        if name in values:
            raise ScenarioError(key, "given more than once")
        kind = types[name]
        try:
            if name == "true_coefficients":
                parsed: object = tuple(float(part) for part in raw.split(","))
            elif kind in (bool, "bool"):
                parsed = _parse_bool(raw)
            elif kind in (int, "int"):
                parsed = int(raw)
            elif kind in (float, "float"):
                parsed = float(raw)
            else:
                parsed = raw
        except ValueError:
            raise ScenarioError(key, f"cannot parse {raw!r}") from None
        values[name] = parsed
    logger.debug("Scenario %s: %s", path.name, values)
    return SimConfig(**values)


def replication_seed(master_seed: int, replication: int) -> np.random.SeedSequence:
    """Counter-based child seed; replication r is reproducible on its own."""
    return np.random.SeedSequence(master_seed, spawn_key=(replication,))


def lattice_shape(n: int) -> tuple[int, int]:
    """Most square rows x cols grid holding exactly n cells."""
    rows = max(d for d in range(1, int(np.sqrt(n)) + 1) if n % d == 0)
    return rows, n // rows


def synthetic_regions(n: int) -> list[Region]:
    """Regions on a half-degree grid over mainland Portugal's latitude band."""
    rows, cols = lattice_shape(n)
    width = max(2, len(str(n)))
    return [
        Region(f"R{i + 1:0{width}d}", f"Region {i + 1}", latitude=37.0 + 0.5 * (i // cols), longitude=-9.0 + 0.5 * (i % cols))
        for i in range(n)
    ]


def lattice_weights_for(regions: Sequence[Region]) -> SpatialWeights:
    """Rook contiguity with regions placed row-major on the most square grid."""
    ids = [region.id for region in regions]
    rows, cols = lattice_shape(len(ids))
    pairs = []
    for i in range(rows):
        for j in range(cols):
            cell = i * cols + j
            if j + 1 < cols:
                pairs.append((ids[cell], ids[cell + 1]))
            if i + 1 < rows:
                pairs.append((ids[cell], ids[cell + cols]))
    return binary_contiguity_weights(pairs, ids)


def simulation_weights(config: SimConfig, regions: Sequence[Region] | None = None) -> SpatialWeights:
    """Row-standardized W for the scenario's regions."""
    regions = _scenario_regions(config, regions)
    if config.weights == "lattice":
        w = lattice_weights_for(regions)
    else:
        w = inverse_distance_weights(regions, config.distance_power)
    return row_standardize(w)


def _scenario_regions(config: SimConfig, regions: Sequence[Region] | None) -> list[Region]:
    if regions is None:
        return synthetic_regions(config.n_regions)
    if len(regions) != config.n_regions:
        raise DimensionMismatch(f"{len(regions)} regions supplied for n_regions={config.n_regions}")
    # same order the panel loader uses
    return sorted(regions, key=lambda region: region.id)


# Panel generation


def _differentials(rng: np.random.Generator, n_years: int, n_regions: int, sd: float) -> np.ndarray:
    """Regional deviations with zero cross-regional mean in every year."""
    raw = rng.normal(0.0, sd, size=(n_years, n_regions))
    return raw - raw.mean(axis=1, keepdims=True)


def _levels(base: np.ndarray, growth: np.ndarray) -> np.ndarray:
    """Compound a (years, regions) growth array onto base levels."""
    return np.vstack([base, base * np.cumprod(1.0 + growth, axis=0)])


@dataclass(frozen=True)
class SimulatedPanel:
    """Generated panel with the regressors and response it was built from."""

    panel: PanelDataset
    design: DesignMatrix  # intended stacked design, rows in (region, year) order
    region_effects: np.ndarray = field(repr=False)


def _spatial_solve(w: SpatialWeights, parameter: float, rhs: np.ndarray) -> np.ndarray:
    lo, hi = w.admissible_interval()
    if not lo < parameter < hi:
        raise ParameterOutOfRange(f"spatial parameter {parameter} outside ({lo:.6f}, {hi:.6f})")
    system = np.eye(w.n) - parameter * w.matrix
    try:
        return linalg.solve(system, rhs)
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"I - {parameter} W is singular: {exc}") from None


def simulate_panel_with_design(
    config: SimConfig,
    regions: Sequence[Region] | None = None,
    agri_mode: str = "share",
    seed: Seed | None = None,
) -> SimulatedPanel:
    """Draw a panel whose migration regressors equal a known design matrix."""
    config._check_panel_coefficients()
    regions = _scenario_regions(config, regions)
    rng = np.random.default_rng(config.master_seed if seed is None else seed)
    n, t = config.n_regions, config.n_periods
    shrink = (n - 1) / n  # maps a centered differential onto raw values

    series: dict[str, np.ndarray] = {}
    intended: dict[str, np.ndarray] = {}
    base = {name: level * np.exp(rng.normal(0.0, 0.5, size=n)) for name, level in _BASE_LEVELS.items()}

    for column, regressor in (("real_output", "r_diff"), ("wage_index", "s_diff"), ("housing_stock", "f_diff")):
        mean, sd = _GROWTH_SERIES[column]
        national = rng.normal(mean, _NATIONAL_GROWTH_SD, size=(t, 1))
        diffs = _differentials(rng, t, n, sd)
        growth = national + shrink * diffs
        if np.any(growth <= -1.0):
            raise InfeasibleBackSolve(f"{column} growth rate at or below -100%")
        series[column] = _levels(base[column], growth)
        intended[regressor] = diffs

    national_u = rng.uniform(*_UNEMPLOYMENT_RANGE, size=(t + 1, 1))
    diffs_u = _differentials(rng, t + 1, n, _UNEMPLOYMENT_SD)
    unemployment = national_u + shrink * diffs_u
    if np.any((unemployment < 0.0) | (unemployment > 1.0)):
        raise InfeasibleBackSolve("unemployment rate outside [0, 1]")
    series["unemployment_rate"] = unemployment
    intended["d_diff"] = diffs_u[1:]

    employment_trend = 1.01 ** np.arange(t + 1)[:, None]
    total_employment = base["total_employment"] * employment_trend
    share = rng.uniform(*_AGRI_SHARE_RANGE, size=n) + rng.normal(0.0, _AGRI_SHARE_SD, size=(t + 1, n))
    if np.any((share <= 0.0) | (share >= 1.0)):
        raise InfeasibleBackSolve("agricultural employment share outside (0, 1)")
    agri = share * total_employment
    series["total_employment"] = total_employment
    series["agri_employment"] = agri
    intended["a_share"] = share[1:] if agri_mode == "share" else agri[1:]
    series["active_pop"] = base["active_pop"] * 1.005 ** np.arange(t + 1)[:, None]

    # stacked regressors in (region, year) order
    columns = design_columns(config.include_wage, config.include_housing)
    x = np.column_stack(
        [np.ones(n * t) if name == INTERCEPT else intended[name].T.reshape(-1) for name in columns]
    )
    beta = np.asarray(config.true_coefficients)
    alpha = rng.normal(0.0, config.sigma_u, size=n) if config.sigma_u > 0.0 else np.zeros(n)
    noise = rng.normal(0.0, config.sigma_e, size=(t, n)) if config.sigma_e > 0.0 else np.zeros((t, n))

    mean_part = (x @ beta).reshape(n, t).T + alpha  # (years, regions)
    if config.rho != 0.0 or config.lam != 0.0:
        w = simulation_weights(config, regions)
        if config.rho != 0.0:
            sm_pa = _spatial_solve(w, config.rho, (mean_part + noise).T).T
        else:
            sm_pa = mean_part + _spatial_solve(w, config.lam, noise.T).T
    else:
        sm_pa = mean_part + noise

    net_migration = np.vstack([np.zeros(n), sm_pa * series["active_pop"][1:]])
    series["net_migration"] = net_migration

    region_ids = [region.id for region in regions]
    years = list(range(config.first_year, config.first_year + t + 1))
    index = pd.MultiIndex.from_product([region_ids, years], names=["region_id", "year"])
    observations = pd.DataFrame({column: series[column].T.reshape(-1) for column in VALUE_COLUMNS}, index=index)
    panel = PanelDataset(tuple(regions), tuple(years), observations)

    row_keys = tuple((region_id, year) for region_id in region_ids for year in years[1:])
    design = DesignMatrix(sm_pa.T.reshape(-1), x, columns, row_keys)
    return SimulatedPanel(panel, design, alpha)


def simulate_panel(
    config: SimConfig,
    regions: Sequence[Region] | None = None,
    agri_mode: str = "share",
    seed: Seed | None = None,
) -> PanelDataset:
    """Raw CSV-schema panel generated from the scenario's structural equation."""
    return simulate_panel_with_design(config, regions, agri_mode, seed).panel


def simulate_random_effects_panel(
    n_regions: int,
    n_periods: int,
    beta: Sequence[float],
    sigma_u: float,
    sigma_e: float,
    seed: Seed,
) -> DesignMatrix:
    """y_it = x_it'b + u_i + e_it with standard normal regressors and an intercept."""
    rng = np.random.default_rng(seed)
    n = n_regions * n_periods
    beta = np.asarray(beta, dtype=float)
    x = np.column_stack([np.ones(n), rng.standard_normal((n, beta.size - 1))])
    u = np.repeat(rng.normal(0.0, sigma_u, size=n_regions), n_periods)
    y = x @ beta + u + rng.normal(0.0, sigma_e, size=n)
    names = (INTERCEPT,) + tuple(f"x{j}" for j in range(1, beta.size))
    keys = tuple((f"R{i + 1:02d}", year) for i in range(n_regions) for year in range(1, n_periods + 1))
    return DesignMatrix(y, x, names, keys)


# Cross-sections


def _cross_section_regressors(
    n: int, k: int, rng: np.random.Generator, column_names: tuple[str, ...] | None
) -> tuple[np.ndarray, tuple[str, ...]]:
    x = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    names = column_names or (INTERCEPT,) + tuple(f"x{j}" for j in range(1, k))
    if len(names) != k:
        raise DimensionMismatch(f"{len(names)} column names for {k} coefficients")
    return x, tuple(names)


def simulate_sar_cross_section(
    n: int,
    w: SpatialWeights,
    rho: float,
    beta: Sequence[float],
    sigma: float,
    seed: Seed,
    column_names: tuple[str, ...] | None = None,
) -> DesignMatrix:
    """y = (I - rho W)^-1 (X b + e) by a direct linear solve."""
    if n != w.n:
        raise DimensionMismatch(f"n={n} but W is {w.n} x {w.n}")
    beta = np.asarray(beta, dtype=float)
    rng = np.random.default_rng(seed)
    x, names = _cross_section_regressors(n, beta.size, rng, column_names)
    noise = rng.normal(0.0, sigma, size=n) if sigma > 0.0 else np.zeros(n)
    y = _spatial_solve(w, rho, x @ beta + noise)
    return DesignMatrix(y, x, names, tuple((region_id, 0) for region_id in w.region_order))


def simulate_sem_cross_section(
    n: int,
    w: SpatialWeights,
    lam: float,
    beta: Sequence[float],
    sigma: float,
    seed: Seed,
    column_names: tuple[str, ...] | None = None,
) -> DesignMatrix:
    """y = X b + (I - lambda W)^-1 e."""
    if n != w.n:
        raise DimensionMismatch(f"n={n} but W is {w.n} x {w.n}")
    beta = np.asarray(beta, dtype=float)
    rng = np.random.default_rng(seed)
    x, names = _cross_section_regressors(n, beta.size, rng, column_names)
    noise = rng.normal(0.0, sigma, size=n) if sigma > 0.0 else np.zeros(n)
    y = x @ beta + _spatial_solve(w, lam, noise)
    return DesignMatrix(y, x, names, tuple((region_id, 0) for region_id in w.region_order))


# Monte Carlo


@dataclass(frozen=True)
class ReplicationOutcome:
    index: int
    estimates: dict[str, Estimate] = field(default_factory=dict)
    chosen: str | None = None
    error: str | None = None


@dataclass(frozen=True)
class RecoverySummary:
    estimator: str
    replications: int
    table: pd.DataFrame  # one row per parameter
    choice_counts: dict[str, int] = field(default_factory=dict)
    failures: int = 0

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        return path


def _panel_estimates(config: SimConfig, estimator: str, regions: Sequence[Region] | None, seed: Seed) -> dict[str, Estimate]:
    simulated = simulate_panel(config, regions, seed=seed)
    variables: MigrationVariables = build_migration_variables(simulated, agri_mode="share")
    design = to_panel_design(variables, config.include_wage, config.include_housing)
    if estimator == "ols":
        fit = ols_fit(design)
        return {name: (float(b), float(se)) for name, b, se in zip(fit.column_names, fit.coefficients, fit.std_errors)}
    panel_fit = fe_lsdv(design) if estimator == "fe" else re_gls(design)
    return {name: (float(b), float(se)) for name, b, se in zip(panel_fit.names, panel_fit.coefficients, panel_fit.std_errors)}


def _spatial_estimates(
    config: SimConfig, estimator: str, w: SpatialWeights, seed: Seed
) -> tuple[dict[str, Estimate], str | None]:
    names = config.coefficient_names
    if config.lam != 0.0 or estimator == "sem":
        design = simulate_sem_cross_section(w.n, w, config.lam, config.true_coefficients, config.sigma_e, seed, names)
    else:
        design = simulate_sar_cross_section(w.n, w, config.rho, config.true_coefficients, config.sigma_e, seed, names)

    chosen = None
    if estimator == "specsearch":
        result = spec_search(design, w)
        chosen = str(result.chosen)
        if result.spatial_fit is None:
            fit = result.ols
            return (
                {name: (float(b), float(se)) for name, b, se in zip(fit.column_names, fit.coefficients, fit.std_errors)},
                chosen,
            )
        spatial_fit = result.spatial_fit
    else:
        spatial_fit = ml_sar(design, w) if estimator == "sar" else ml_sem(design, w)

    estimates = {
        name: (float(b), float(se))
        for name, b, se in zip(spatial_fit.column_names, spatial_fit.coefficients, spatial_fit.coefficient_std_errors)
    }
    estimates[spatial_fit.parameter_name] = (spatial_fit.rho_or_lambda, spatial_fit.parameter_std_error)
    return estimates, chosen


def _replicate(
    index: int,
    config: SimConfig,
    estimator: str,
    w: SpatialWeights | None,
    regions: Sequence[Region] | None,
    same_seed: bool,
) -> ReplicationOutcome:
    seed = replication_seed(config.master_seed, 0 if same_seed else index)
    try:
        if estimator in PANEL_ESTIMATORS:
            return ReplicationOutcome(index, _panel_estimates(config, estimator, regions, seed))
        estimates, chosen = _spatial_estimates(config, estimator, w, seed)
        return ReplicationOutcome(index, estimates, chosen)
    except MigrationError as exc:
        logger.debug("Replication %d failed: %s", index, exc)
        return ReplicationOutcome(index, error=f"{type(exc).__name__}: {exc}")


def _true_values(config: SimConfig, estimator: str) -> dict[str, float]:
    truth = dict(zip(config.coefficient_names, config.true_coefficients))
    if estimator == "fe":
        # absorbed by the region intercepts
        truth.pop(INTERCEPT, None)
    if estimator == "sar" or (estimator == "specsearch" and config.lam == 0.0):
        truth["rho"] = config.rho
    if estimator == "sem" or (estimator == "specsearch" and config.lam != 0.0):
        truth["lambda"] = config.lam
    return truth


def _summarize(config: SimConfig, estimator: str, outcomes: Sequence[ReplicationOutcome]) -> pd.DataFrame:
    z = stats.norm.ppf(0.5 + COVERAGE_LEVEL / 2.0)
    rows = []
    for name, true in _true_values(config, estimator).items():
        pairs = [outcome.estimates[name] for outcome in outcomes if name in outcome.estimates]
        failures = len(outcomes) - len(pairs)
        if not pairs:
            rows.append({"parameter": name, "true": true, "mean": np.nan, "bias": np.nan, "rmse": np.nan,
                         "mc_se": np.nan, "coverage": np.nan, "failures": failures})
            continue
        values = np.array([value for value, _ in pairs])
        errors = np.array([se for _, se in pairs])
        # identical replications give exactly zero offsets
        offsets = values - values[0]
        mean = float(values[0] + offsets.mean())
        rows.append(
            {
                "parameter": name,
                "true": true,
                "mean": mean,
                "bias": mean - true,
                "rmse": float(np.sqrt(np.mean((values - true) ** 2))),
                "mc_se": float(offsets.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else np.nan,
                "coverage": float(np.mean(np.abs(values - true) <= z * errors)),
                "failures": failures,
            }
        )
    return pd.DataFrame(rows, columns=["parameter", "true", "mean", "bias", "rmse", "mc_se", "coverage", "failures"])


def monte_carlo_recovery(
    config: SimConfig,
    estimator: str | None = None,
    w: SpatialWeights | None = None,
    regions: Sequence[Region] | None = None,
    progress: bool = True,
    workers: int = 1,
    same_seed_every_replication: bool = False,
) -> RecoverySummary:
    """Bias, RMSE and interval coverage of an estimator over seeded replications."""
    estimator = config.estimator if estimator is None else estimator
    if estimator not in ESTIMATORS:
        raise ScenarioError("estimator", f"must be one of {', '.join(ESTIMATORS)}")
    if estimator != config.estimator:
        config = replace(config, estimator=estimator)
    if config.replications < 2:
        raise ScenarioError("replications", "Monte Carlo recovery needs at least two replications")
    if estimator in SPATIAL_ESTIMATORS and w is None:
        w = simulation_weights(config, regions)

    run = partial(
        _replicate,
        config=config,
        estimator=estimator,
        w=w,
        regions=regions,
        same_seed=same_seed_every_replication,
    )
    indices = range(config.replications)
    desc = f"{estimator} replications"
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(tqdm(executor.map(run, indices), total=config.replications, desc=desc, disable=not progress))
    else:
        outcomes = [run(index) for index in tqdm(indices, desc=desc, disable=not progress)]
    outcomes.sort(key=lambda outcome: outcome.index)

    failures = sum(outcome.error is not None for outcome in outcomes)
    if failures:
        logger.warning("%d of %d replications failed", failures, config.replications)
    choice_counts: dict[str, int] = {}
    if estimator == "specsearch":
        choice_counts = {str(model): 0 for model in SpatialModel}
        for outcome in outcomes:
            if outcome.chosen is not None:
                choice_counts[outcome.chosen] += 1

    return RecoverySummary(
        estimator=estimator,
        replications=config.replications,
        table=_summarize(config, estimator, outcomes),
        choice_counts=choice_counts,
        failures=failures,
    )
