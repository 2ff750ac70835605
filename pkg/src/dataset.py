"""Regional panel ingestion and construction of the migration regressors."""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from pathlib import Path
from typing import TypeAlias

import numpy as np
import pandas as pd

from .config import AGRI_MODE, AGRI_MODES
from .exceptions import (
    DimensionMismatch,
    MissingColumn,
    NonPositiveDenominator,
    ParseError,
    SingleRegion,
    UnbalancedPanel,
    UnknownRegion,
)
from .lsq_core import INTERCEPT, DesignMatrix

logger = logging.getLogger(__name__)

# Type aliases
RegionId: TypeAlias = str
Year: TypeAlias = int

PANEL_COLUMNS = (
    "region_id",
    "year",
    "net_migration",
    "active_pop",
    "real_output",
    "unemployment_rate",
    "agri_employment",
    "total_employment",
    "wage_index",
    "housing_stock",
)
VALUE_COLUMNS = PANEL_COLUMNS[2:]
REGION_COLUMNS = ("region_id", "name", "nuts_level", "lat", "lon")

# Columns that divide or seed a growth rate
POSITIVE_COLUMNS = ("active_pop", "total_employment", "housing_stock", "real_output", "wage_index")

VARIABLE_COLUMNS = ("sm_pa", "r_diff", "d_diff", "a_share", "s_diff", "f_diff")


class NutsLevel(StrEnum):
    II = "II"
    III = "III"


@dataclass(frozen=True)
class Region:
    id: RegionId
    name: str
    nuts_level: NutsLevel = NutsLevel.II
    latitude: float | None = None
    longitude: float | None = None

    def __post_init__(self) -> None:
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range for {self.id}: {self.latitude}")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range for {self.id}: {self.longitude}")

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None and self.longitude is not None


@dataclass(frozen=True)
class PanelDataset:
    """Balanced region x year table of raw regional variables."""

    regions: tuple[Region, ...]
    years: tuple[Year, ...]
    observations: pd.DataFrame  # MultiIndex (region_id, year), VALUE_COLUMNS

    @property
    def region_ids(self) -> tuple[RegionId, ...]:
        return tuple(region.id for region in self.regions)

    def values(self, column: str) -> np.ndarray:
        """Column as a (n_years, n_regions) array in panel order."""
        series = self.observations[column]
        return series.to_numpy().reshape(len(self.regions), len(self.years)).T.copy()

    def to_frame(self) -> pd.DataFrame:
        return self.observations.copy()


@dataclass(frozen=True)
class MigrationVariables:
    """Regression variables per region x usable year."""

    region_ids: tuple[RegionId, ...]
    years: tuple[Year, ...]  # usable years: the first panel year is consumed
    frame: pd.DataFrame  # MultiIndex (region_id, year), VARIABLE_COLUMNS
    agri_mode: str = "share"

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()


def _data_line(row_position: int) -> int:
    # header occupies line 1
    return row_position + 2


def _read_csv(path: Path, required: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise MissingColumn(required, str(path)) from None
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MissingColumn(missing, str(path))
    return frame


def _to_float(text: str) -> float:
    # float() rounds correctly, so %.17g text reads back to the same double
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_numeric(frame: pd.DataFrame, column: str, integer: bool = False) -> pd.Series:
    raw = frame[column].str.strip()
    parsed = raw.map(_to_float).astype(float)
    bad = ~np.isfinite(parsed)
    if integer:
        bad |= parsed.notna() & (parsed != np.floor(parsed))
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"cannot parse {column}={raw.iloc[position]!r}", _data_line(position))
    return parsed.astype(int) if integer else parsed.astype(float)


def load_regions_csv(path: Path | str) -> list[Region]:
    """Read the regions file: region_id,name,nuts_level,lat,lon."""
    path = Path(path)
    frame = _read_csv(path, REGION_COLUMNS)
    lat = _parse_numeric(frame, "lat")
    lon = _parse_numeric(frame, "lon")
    regions: list[Region] = []
    seen: set[str] = set()
    for position, row in enumerate(frame.itertuples(index=False)):
        region_id = str(row.region_id).strip()
        if not region_id:
            raise ParseError("empty region_id", _data_line(position))
        if region_id in seen:
            raise ParseError(f"duplicate region_id {region_id}", _data_line(position))
        seen.add(region_id)
        level = str(row.nuts_level).strip().upper()
        try:
            nuts_level = NutsLevel(level)
        except ValueError:
            raise ParseError(f"nuts_level must be II or III, got {level!r}", _data_line(position)) from None
        try:
            region = Region(region_id, str(row.name).strip(), nuts_level, float(lat.iloc[position]), float(lon.iloc[position]))
        except ValueError as exc:
            raise ParseError(str(exc), _data_line(position)) from None
        regions.append(region)
    logger.debug("Loaded %d regions from %s", len(regions), path)
    return regions


def load_panel_csv(path: Path | str, regions: Sequence[Region] | None = None) -> PanelDataset:
    """Load and validate a balanced panel CSV."""
    path = Path(path)
    frame = _read_csv(path, PANEL_COLUMNS)
    frame["region_id"] = frame["region_id"].str.strip()
    empty = frame["region_id"] == ""
    if empty.any():
        raise ParseError("empty region_id", _data_line(int(np.flatnonzero(empty.to_numpy())[0])))

    data = pd.DataFrame({"region_id": frame["region_id"], "year": _parse_numeric(frame, "year", integer=True)})
    for column in VALUE_COLUMNS:
        data[column] = _parse_numeric(frame, column)

    duplicated = data.duplicated(["region_id", "year"])
    if duplicated.any():
        position = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise ParseError(
            f"duplicate row for ({data['region_id'].iloc[position]}, {data['year'].iloc[position]})",
            _data_line(position),
        )

    rate = data["unemployment_rate"]
    out_of_range = (rate < 0.0) | (rate > 1.0)
    if out_of_range.any():
        position = int(np.flatnonzero(out_of_range.to_numpy())[0])
        raise ParseError(f"unemployment_rate must lie in [0, 1], got {rate.iloc[position]}", _data_line(position))

    for column in POSITIVE_COLUMNS:
        bad = data[column] <= 0.0
        if bad.any():
            position = int(np.flatnonzero(bad.to_numpy())[0])
            key = (str(data["region_id"].iloc[position]), int(data["year"].iloc[position]))
            raise NonPositiveDenominator(column, key, float(data[column].iloc[position]))

    if regions is None:
        region_ids = sorted(data["region_id"].unique())
        region_list = [Region(region_id, region_id) for region_id in region_ids]
    else:
        region_list = sorted(regions, key=lambda region: region.id)
        known = {region.id for region in region_list}
        for region_id in data["region_id"].unique():
            if region_id not in known:
                raise UnknownRegion(str(region_id))
        region_ids = [region.id for region in region_list]

    years = sorted(int(y) for y in data["year"].unique())
    full_index = pd.MultiIndex.from_product([region_ids, years], names=["region_id", "year"])
    data = data.set_index(["region_id", "year"]).sort_index()
    missing = full_index.difference(data.index)
    if len(missing) > 0:
        raise UnbalancedPanel([(str(r), int(y)) for r, y in missing])

    observations = data.reindex(full_index)[list(VALUE_COLUMNS)]
    logger.info("Loaded panel %s: %d regions x %d years", path.name, len(region_ids), len(years))
    return PanelDataset(tuple(region_list), tuple(years), observations)


def write_panel_csv(panel: PanelDataset, path: Path | str) -> Path:
    """Write the panel in (region, year) order with round-trip float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = panel.observations.reset_index()[list(PANEL_COLUMNS)]
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def growth_rate(value_t: float, value_prev: float) -> float:
    """Proportional change (value_t - value_prev) / value_prev."""
    if not value_prev > 0.0:
        raise NonPositiveDenominator("previous value", None, value_prev)
    return (value_t - value_prev) / value_prev


def external_average(values: Mapping[RegionId, float], self_id: RegionId) -> float:
    """Unweighted mean of the variable over every region except self_id."""
    if len(values) < 2:
        raise SingleRegion()
    if self_id not in values:
        raise UnknownRegion(self_id)
    others = [value for region_id, value in values.items() if region_id != self_id]
    return float(np.mean(others))


def growth_rates(levels: np.ndarray) -> np.ndarray:
    """Row-wise growth of a (n_years, n_regions) level array; drops the first year."""
    previous = levels[:-1]
    if np.any(previous <= 0.0):
        raise NonPositiveDenominator("previous value", None, float(previous.min()))
    return (levels[1:] - previous) / previous


def internal_minus_external(values: np.ndarray) -> np.ndarray:
    """x_i minus the mean over the other regions, row by row of a (years, regions) array."""
    n_regions = values.shape[1]
    if n_regions < 2:
        raise SingleRegion()
    totals = values.sum(axis=1, keepdims=True)
    return values - (totals - values) / (n_regions - 1)


def build_migration_variables(panel: PanelDataset, agri_mode: str = AGRI_MODE) -> MigrationVariables:
    if agri_mode not in AGRI_MODES:
        raise ValueError(f"agri_mode must be one of {AGRI_MODES}, got {agri_mode!r}")
    if len(panel.regions) < 2:
        raise SingleRegion()
    if len(panel.years) < 2:
        raise DimensionMismatch("at least two panel years are needed to form growth rates")

    current = slice(1, None)
    sm_pa = panel.values("net_migration")[current] / panel.values("active_pop")[current]
    r_diff = internal_minus_external(growth_rates(panel.values("real_output")))
    d_diff = internal_minus_external(panel.values("unemployment_rate")[current])
    agri = panel.values("agri_employment")[current]
    a_share = agri / panel.values("total_employment")[current] if agri_mode == "share" else agri
    s_diff = internal_minus_external(growth_rates(panel.values("wage_index")))
    f_diff = internal_minus_external(growth_rates(panel.values("housing_stock")))

    usable_years = panel.years[1:]
    index = pd.MultiIndex.from_product([panel.region_ids, usable_years], names=["region_id", "year"])
    # arrays are (years, regions); the index runs region-major
    columns = {
        name: array.T.reshape(-1)
        for name, array in zip(VARIABLE_COLUMNS, (sm_pa, r_diff, d_diff, a_share, s_diff, f_diff))
    }
    frame = pd.DataFrame(columns, index=index)
    return MigrationVariables(panel.region_ids, tuple(usable_years), frame, agri_mode)


def design_columns(include_wage: bool = True, include_housing: bool = True) -> tuple[str, ...]:
    columns = [INTERCEPT, "r_diff", "d_diff", "a_share"]
    if include_wage:
        columns.append("s_diff")
    if include_housing:
        columns.append("f_diff")
    return tuple(columns)


def _design_from_frame(frame: pd.DataFrame, include_wage: bool, include_housing: bool) -> DesignMatrix:
    columns = design_columns(include_wage, include_housing)
    regressors = np.column_stack(
        [np.ones(len(frame)) if name == INTERCEPT else frame[name].to_numpy() for name in columns]
    )
    row_keys = tuple((str(r), int(y)) for r, y in frame.index)
    return DesignMatrix(frame["sm_pa"].to_numpy(), regressors, columns, row_keys)


def to_panel_design(
    variables: MigrationVariables, include_wage: bool = True, include_housing: bool = True
) -> DesignMatrix:
    """Stacked design over every region x usable year, rows in (region, year) order."""
    return _design_from_frame(variables.frame, include_wage, include_housing)


def to_cross_section_design(
    variables: MigrationVariables,
    year: Year | None = None,
    include_wage: bool = False,
    include_housing: bool = True,
) -> DesignMatrix:
    """Single-year design with one row per region, in region order."""
    chosen = variables.years[-1] if year is None else int(year)
    if chosen not in variables.years:
        raise DimensionMismatch(f"year {chosen} is not a usable year; choose from {list(variables.years)}")
    frame = variables.frame.xs(chosen, level="year", drop_level=False)
    return _design_from_frame(frame, include_wage, include_housing)
