"""Pipeline orchestration shared by the command line and the notebook."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TypeAlias

import numpy as np

from .config import AGRI_MODE, DISTANCE_POWER, SIGNIFICANCE_LEVEL
from .dataset import (
    MigrationVariables,
    PanelDataset,
    build_migration_variables,
    load_panel_csv,
    load_regions_csv,
    to_cross_section_design,
    to_panel_design,
)
from .exceptions import DimensionMismatch, InvalidWeights, ParameterOutOfRange
from .lsq_core import DesignMatrix, OlsFit, TestStat, ols_fit
from .panel import HausmanResult, PanelFit, fe_lsdv, hausman_test, pooled_ols, re_gls, region_effects_f_test
from .report import ReportDocument, diagnostics_table, ols_table, panel_table, spatial_table, specsearch_table
from .spatial import DiagnosticsReport, SpatialFit, SpatialModel, SpecSearchResult, ml_sar, ml_sem, run_diagnostics, spec_search
from .weights import SpatialWeights, inverse_distance_weights, read_weights_csv, row_standardize

logger = logging.getLogger(__name__)

# Type aliases
Year: TypeAlias = int | None


@dataclass(frozen=True)
class PanelComparison:
    """Fixed and random effects fits with the tests that compare them."""

    fe: PanelFit
    re: PanelFit
    pooled: OlsFit
    hausman: HausmanResult
    region_test: TestStat


def align_weights(w: SpatialWeights, region_ids: tuple[str, ...]) -> SpatialWeights:
    """Reorder W to the given region order."""
    if w.region_order == region_ids:
        return w
    if set(w.region_order) != set(region_ids):
        missing = sorted(set(region_ids) - set(w.region_order))
        extra = sorted(set(w.region_order) - set(region_ids))
        raise DimensionMismatch(f"weights regions differ from panel regions; missing {missing}, extra {extra}")
    position = [w.region_order.index(region_id) for region_id in region_ids]
    matrix = w.matrix[np.ix_(position, position)]
    return SpatialWeights(region_ids, matrix, w.standardized, w.zero_rows)


def load_weights(
    regions_path: Path | str | None = None,
    weights_path: Path | str | None = None,
    power: float = DISTANCE_POWER,
    standardize: bool = True,
) -> SpatialWeights | None:
    """Inverse-distance W from a regions file, or an explicit weights file."""
    if regions_path is not None and weights_path is not None:
        raise InvalidWeights("give either a regions file or a weights file, not both")
    if regions_path is not None:
        regions = sorted(load_regions_csv(regions_path), key=lambda region: region.id)
        w = inverse_distance_weights(regions, power)
    elif weights_path is not None:
        w = read_weights_csv(weights_path)
    else:
        return None
    return row_standardize(w) if standardize else w


@dataclass
class MigrationAnalysis:
    """Runs the estimators of both tables on one panel."""

    panel: PanelDataset
    weights: SpatialWeights | None = None
    agri_mode: str = AGRI_MODE
    include_wage: bool = True
    include_housing: bool = True
    alpha: float = SIGNIFICANCE_LEVEL
    variables: MigrationVariables = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ParameterOutOfRange(f"significance level must lie in (0, 1), got {self.alpha}")
        self.variables = build_migration_variables(self.panel, self.agri_mode)
        if self.weights is not None:
            self.weights = align_weights(self.weights, self.panel.region_ids)

    @classmethod
    def from_files(
        cls,
        panel_path: Path | str,
        regions_path: Path | str | None = None,
        weights_path: Path | str | None = None,
        power: float = DISTANCE_POWER,
        standardize: bool = True,
        **options,
    ) -> "MigrationAnalysis":
        regions = load_regions_csv(regions_path) if regions_path is not None else None
        panel = load_panel_csv(panel_path, regions)
        weights = load_weights(regions_path, weights_path, power, standardize)
        return cls(panel, weights, **options)

    def panel_design(self) -> DesignMatrix:
        return to_panel_design(self.variables, self.include_wage, self.include_housing)

    def cross_section_design(self, year: Year = None) -> DesignMatrix:
        return to_cross_section_design(self.variables, year, self.include_wage, self.include_housing)

    def _require_weights(self) -> SpatialWeights:
        if self.weights is None:
            raise InvalidWeights("spatial analysis needs a regions file or a weights file")
        return self.weights

    # Estimation

    def ols(self, year: Year = None) -> tuple[OlsFit, DesignMatrix]:
        """Pooled OLS over the panel, or a single-year cross-section when a year is given."""
        if year is None:
            design = self.panel_design()
            return pooled_ols(design), design
        design = self.cross_section_design(year)
        return ols_fit(design), design

    def panel_models(self, restrict: tuple[str, ...] | None = None) -> PanelComparison:
        design = self.panel_design()
        fe = fe_lsdv(design)
        re = re_gls(design)
        pooled = pooled_ols(design)
        compared = None
        if restrict:
            compared = tuple(name for name in fe.slope_names if name not in restrict)
        return PanelComparison(
            fe=fe,
            re=re,
            pooled=pooled,
            hausman=hausman_test(fe, re, self.alpha, compared),
            region_test=region_effects_f_test(fe, pooled),
        )

    def diagnostics(self, year: Year = None) -> tuple[OlsFit, DiagnosticsReport]:
        design = self.cross_section_design(year)
        fit = ols_fit(design)
        return fit, run_diagnostics(fit, design, self._require_weights())

    def specification_search(self, year: Year = None) -> SpecSearchResult:
        return spec_search(self.cross_section_design(year), self._require_weights(), self.alpha)

    def spatial_fit(self, model: SpatialModel, year: Year = None) -> SpatialFit:
        design = self.cross_section_design(year)
        w = self._require_weights()
        return ml_sar(design, w) if model is SpatialModel.SAR else ml_sem(design, w)

    # Reports

    def panel_report(self, restrict: tuple[str, ...] | None = None) -> ReportDocument:
        models = self.panel_models(restrict)
        years = self.variables.years
        title = f"Panel estimations of net migration, {len(self.panel.regions)} regions, {years[0]}-{years[-1]}"
        return panel_table(models.fe, models.re, models.hausman, models.region_test, title)

    def ols_report(self, year: Year = None) -> ReportDocument:
        fit, _ = self.ols(year)
        scope = "pooled panel" if year is None else f"cross-section {year}"
        return ols_table(fit, title=f"OLS estimates of net migration ({scope})")

    def diagnostics_report(self, year: Year = None, with_coefficients: bool = True) -> ReportDocument:
        fit, battery = self.diagnostics(year)
        chosen = self.variables.years[-1] if year is None else year
        if with_coefficients:
            return ols_table(fit, battery, title=f"OLS estimates with spatial diagnostics, cross-section {chosen}")
        return diagnostics_table(battery, title=f"Residual diagnostics, cross-section {chosen}")

    def specsearch_report(self, year: Year = None) -> ReportDocument:
        return specsearch_table(self.specification_search(year))

    def spatial_report(self, model: SpatialModel, year: Year = None) -> ReportDocument:
        return spatial_table(self.spatial_fit(model, year))
