"""Plain-text estimation tables with machine-readable JSON sidecars."""

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypeAlias

import numpy as np
from tabulate import tabulate

from .config import REPORT_DECIMALS
from .lsq_core import INTERCEPT, OlsFit, TestStat, significance_marker
from .panel import HausmanResult, PanelFit, VarianceComponents
from .simulate import RecoverySummary
from .spatial import DiagnosticsReport, SpatialFit, SpatialModel, SpecSearchResult

logger = logging.getLogger(__name__)

# Type aliases
Row: TypeAlias = tuple[str, ...]

STAR_LEGEND = "* significant at 5%; ** significant at 10%. Figures in brackets are t-statistics."

# Equation terms of the migration regressors
TERM_LABELS = {
    "r_diff": "(r_I - r_E)",
    "d_diff": "(D_I - D_E)",
    "a_share": "(A_I)",
    "s_diff": "(s_I - s_E)",
    "f_diff": "(f_I - f_E)",
}


@dataclass(frozen=True)
class ReportDocument:
    title: str
    equation: str
    headers: Row
    rows: tuple[Row, ...]
    footnotes: tuple[str, ...] = ()
    data: dict[str, Any] = field(default_factory=dict, repr=False)  # full-precision sidecar

    def table(self) -> str:
        return tabulate(self.rows, headers=self.headers, tablefmt="plain", disable_numparse=True, stralign="right")

    def render(self) -> str:
        lines = [self.title, ""]
        if self.equation:
            lines += [self.equation, ""]
        lines.append(self.table())
        if self.footnotes:
            lines += [""] + list(self.footnotes)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {"title": self.title, "equation": self.equation, **self.data}
        return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"

    def write(self, output_dir: Path | str, stem: str) -> tuple[Path, Path]:
        """Write `<stem>.txt` and `<stem>.json` with LF line endings."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        text_path = output_dir / f"{stem}.txt"
        json_path = output_dir / f"{stem}.json"
        text_path.write_text(self.render(), encoding="utf-8", newline="\n")
        json_path.write_text(self.to_json(), encoding="utf-8", newline="\n")
        logger.info("Wrote %s and %s", text_path, json_path)
        return text_path, json_path


def _jsonable(value: Any) -> Any:
    """Plain JSON types; NaN becomes null."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    return value


def number(value: float, decimals: int = REPORT_DECIMALS) -> str:
    if value is None or not np.isfinite(value):
        return "n/a"
    text = f"{value:.{decimals}f}"
    # no negative zero in the tables
    return text[1:] if text.startswith("-") and float(text) == 0.0 else text


def coefficient_cell(estimate: float, t_stat: float, p_value: float, decimals: int = REPORT_DECIMALS) -> str:
    """`estimate<stars> (t)` as printed in the estimation tables."""
    marker = significance_marker(p_value) if np.isfinite(p_value) else ""
    return f"{number(estimate, decimals)}{marker} ({number(t_stat, decimals)})"


def statistic_cell(test: TestStat, decimals: int = REPORT_DECIMALS) -> str:
    marker = significance_marker(test.p_value) if np.isfinite(test.p_value) else ""
    return f"{number(test.statistic, decimals)}{marker}"


def coefficient_headers(k: int) -> Row:
    return tuple(f"c{j}" for j in range(k))


def equation_line(column_names: Sequence[str], model: SpatialModel = SpatialModel.OLS) -> str:
    terms = []
    for j, name in enumerate(column_names):
        if name == INTERCEPT:
            terms.append(f"c{j}")
        else:
            terms.append(f"c{j}{TERM_LABELS.get(name, f'({name})')}_t")
    rhs = " + ".join(terms)
    if model is SpatialModel.SAR:
        rhs = f"rho W(SM/PA) + {rhs}"
    elif model is SpatialModel.SEM:
        rhs = f"{rhs} + u, u = lambda W u + e"
    return f"(SM/PA)_t = {rhs}"


def _term_footnote(column_names: Sequence[str]) -> str:
    return "Terms: " + ", ".join(f"c{j} = {name}" for j, name in enumerate(column_names))


def panel_table(
    fe: PanelFit,
    re: PanelFit,
    hausman: HausmanResult,
    region_test: TestStat | None = None,
    title: str = "Panel estimations of the net migration equation",
) -> ReportDocument:
    """LSDV and GLS rows with G.L., R2, SEE and the Hausman statistic."""
    names = re.names
    headers = ("",) + coefficient_headers(len(names)) + ("G.L.", "R2", "SEE", "T.H.")

    fe_cells = {name: coefficient_cell(b, t, p) for name, b, t, p in zip(fe.names, fe.coefficients, fe.t_stats, fe.p_values)}
    fe_row = tuple("(#)" if name == re.intercept_name else fe_cells.get(name, "") for name in names)
    re_row = tuple(coefficient_cell(b, t, p) for b, t, p in zip(re.coefficients, re.t_stats, re.p_values))
    th = f"{number(hausman.statistic)} ({number(hausman.p_value)})"
    rows = (
        ("LSDV",) + fe_row + (str(fe.df), number(fe.r_squared), number(fe.see), th),
        ("GLS",) + re_row + (str(re.df), number(re.r_squared), number(re.see), ""),
    )

    footnotes = [
        "LSDV: fixed effects; GLS: random effects. G.L.: degrees of freedom; SEE: standard error of the estimate; "
        "T.H.: Hausman test (p-value).",
        STAR_LEGEND,
        _term_footnote(names),
        f"Hausman: chi2({hausman.df}) over {', '.join(hausman.compared)}; preferred model {hausman.preferred}.",
    ]
    if hausman.degenerate_flag:
        footnotes.append("Hausman covariance difference not positive definite; pseudo-inverse used.")
    if region_test is not None:
        footnotes.append(
            f"(#) region intercepts, equality test F({region_test.df}, {region_test.df_denominator}) = "
            f"{number(region_test.statistic)} ({number(region_test.p_value)})."
        )
    components = re.region_effects
    if isinstance(components, VarianceComponents):
        clamped = " (clamped at zero)" if components.clamped else ""
        footnotes.append(
            f"GLS variance components ({components.method}): sigma2_u = {components.sigma2_u:.6g}{clamped}, "
            f"sigma2_e = {components.sigma2_e:.6g}, theta = {number(components.theta)}."
        )

    data = {
        "fe": _panel_data(fe),
        "re": _panel_data(re),
        "hausman": {
            "statistic": hausman.statistic,
            "df": hausman.df,
            "p_value": hausman.p_value,
            "preferred": str(hausman.preferred),
            "degenerate": hausman.degenerate_flag,
            "compared": list(hausman.compared),
        },
    }
    if region_test is not None:
        data["region_effects_f"] = _test_data(region_test)
    return ReportDocument(title, equation_line(names), headers, rows, tuple(footnotes), data)


def _panel_data(fit: PanelFit) -> dict[str, Any]:
    effects = fit.region_effects
    return {
        "method": str(fit.method),
        "coefficients": dict(zip(fit.names, fit.coefficients)),
        "std_errors": dict(zip(fit.names, fit.std_errors)),
        "p_values": dict(zip(fit.names, fit.p_values)),
        "df": fit.df,
        "r_squared": fit.r_squared,
        "see": fit.see,
        "ssr": fit.ssr,
        "region_effects": (
            {
                "sigma2_u": effects.sigma2_u,
                "sigma2_e": effects.sigma2_e,
                "theta": effects.theta,
                "method": effects.method,
                "clamped": effects.clamped,
            }
            if isinstance(effects, VarianceComponents)
            else dict(effects)
        ),
    }


def _test_data(test: TestStat) -> dict[str, Any]:
    return {
        "statistic": test.statistic,
        "df": test.df,
        "df_denominator": test.df_denominator,
        "p_value": test.p_value,
        "decision_at_5pct": str(test.decision_at_5pct),
    }


def _ols_data(fit: OlsFit) -> dict[str, Any]:
    return {
        "coefficients": dict(zip(fit.column_names, fit.coefficients)),
        "std_errors": dict(zip(fit.column_names, fit.std_errors)),
        "p_values": dict(zip(fit.column_names, fit.p_values)),
        "df": fit.df,
        "r_squared": fit.r_squared,
        "see": fit.see,
        "log_likelihood": fit.log_likelihood,
        "aic": fit.aic,
        "schwarz": fit.schwarz,
    }


def ols_table(
    fit: OlsFit,
    diagnostics: DiagnosticsReport | None = None,
    title: str = "OLS estimates of the net migration equation",
) -> ReportDocument:
    """Coefficients, the optional residual battery, R2 and SEE in one row."""
    headers = ("",) + coefficient_headers(fit.k)
    row = tuple(coefficient_cell(b, t, p) for b, t, p in zip(fit.coefficients, fit.t_stats, fit.p_values))
    if diagnostics is not None:
        headers += DiagnosticsReport.COLUMNS
        row += tuple(_diagnostic_cells(diagnostics))
    headers += ("R2", "SEE")
    row += (number(fit.r_squared), number(fit.see))

    footnotes = [STAR_LEGEND, _term_footnote(fit.column_names), f"n = {fit.n}, degrees of freedom = {fit.df}."]
    data: dict[str, Any] = {"ols": _ols_data(fit)}
    if diagnostics is not None:
        footnotes.insert(0, _diagnostics_legend(diagnostics))
        data["diagnostics"] = _diagnostics_data(diagnostics)
    return ReportDocument(title, equation_line(fit.column_names), headers, (("OLS",) + row,), tuple(footnotes), data)


def _diagnostic_cells(diagnostics: DiagnosticsReport) -> list[str]:
    cells = []
    for _, statistic, p_value in diagnostics.columns():
        marker = significance_marker(p_value) if np.isfinite(p_value) else ""
        cells.append(f"{number(statistic)}{marker}")
    return cells


def _diagnostics_legend(diagnostics: DiagnosticsReport) -> str:
    moran = diagnostics.moran
    return (
        "JB: Jarque-Bera; BP: Breusch-Pagan; KB: Koenker-Bassett; M'I: Moran's I of the residuals "
        f"(z = {number(moran.z_score)}, E[I] = {number(moran.expected_i)}); LM_l/LMR_l: (robust) LM spatial lag; "
        "LM_e/LMR_e: (robust) LM spatial error; n/a: not computable."
    )


def _diagnostics_data(diagnostics: DiagnosticsReport) -> dict[str, Any]:
    moran = diagnostics.moran
    data = {
        label: {"statistic": statistic, "p_value": p_value}
        for label, statistic, p_value in diagnostics.columns()
    }
    data["M'I"].update({"expected": moran.expected_i, "variance": moran.variance_i, "z_score": moran.z_score})
    return data


def diagnostics_table(diagnostics: DiagnosticsReport, title: str = "Residual diagnostics") -> ReportDocument:
    """Statistic and p-value rows in the battery's column order."""
    columns = diagnostics.columns()
    headers = ("",) + tuple(label for label, _, _ in columns)
    rows = (
        ("statistic",) + tuple(_diagnostic_cells(diagnostics)),
        ("p-value",) + tuple(number(p) for _, _, p in columns),
    )
    footnotes = (_diagnostics_legend(diagnostics), "* significant at 5%; ** significant at 10%.")
    return ReportDocument(title, "", headers, rows, footnotes, {"diagnostics": _diagnostics_data(diagnostics)})


def _spatial_data(fit: SpatialFit) -> dict[str, Any]:
    return {
        "model": str(fit.model),
        "coefficients": dict(zip(fit.column_names, fit.coefficients)),
        "std_errors": dict(zip(fit.column_names, fit.coefficient_std_errors)),
        "p_values": dict(zip(fit.column_names, fit.p_values)),
        fit.parameter_name: fit.rho_or_lambda,
        f"{fit.parameter_name}_std_error": fit.parameter_std_error,
        "sigma2": fit.sigma2,
        "log_likelihood": fit.log_likelihood,
        "aic": fit.aic,
        "schwarz": fit.schwarz,
        "pseudo_r_squared": fit.pseudo_r_squared,
        "interval": list(fit.interval),
        "lr_test": _test_data(fit.lr_test()),
    }


def spatial_table(fit: SpatialFit, title: str | None = None) -> ReportDocument:
    """Maximum-likelihood fit with z-statistics in brackets."""
    with np.errstate(divide="ignore", invalid="ignore"):
        z = fit.coefficients / fit.coefficient_std_errors
        z_param = fit.rho_or_lambda / fit.parameter_std_error
    headers = ("",) + coefficient_headers(len(fit.column_names)) + (fit.parameter_name, "logL", "AIC", "SC", "R2", "LR")
    lr = fit.lr_test()
    row = (
        (str(fit.model),)
        + tuple(coefficient_cell(b, t, p) for b, t, p in zip(fit.coefficients, z, fit.p_values))
        + (
            coefficient_cell(fit.rho_or_lambda, z_param, fit.parameter_p_value),
            number(fit.log_likelihood),
            number(fit.aic),
            number(fit.schwarz),
            number(fit.pseudo_r_squared),
            statistic_cell(lr),
        )
    )
    footnotes = (
        STAR_LEGEND.replace("t-statistics", "z-statistics"),
        _term_footnote(fit.column_names),
        f"R2: squared correlation of observed and fitted values; LR: likelihood ratio against OLS, "
        f"chi2(1) p = {number(lr.p_value)}; admissible {fit.parameter_name} interval "
        f"({number(fit.interval[0])}, {number(fit.interval[1])}).",
    )
    title = title or f"Maximum likelihood {fit.model} estimates"
    return ReportDocument(title, equation_line(fit.column_names, fit.model), headers, (row,), footnotes, {"fit": _spatial_data(fit)})


def specsearch_table(result: SpecSearchResult, title: str = "Forward specification search") -> ReportDocument:
    headers = ("step", "test", "statistic", "p-value", "decision")
    rows = tuple(
        (str(entry.step), entry.name, number(entry.statistic), number(entry.p_value), entry.decision)
        for entry in result.trail
    )
    footnotes = [f"alpha = {result.significance_level:g}; chosen model: {result.chosen}."]
    data: dict[str, Any] = {
        "chosen": str(result.chosen),
        "alpha": result.significance_level,
        "trail": [
            {"step": e.step, "name": e.name, "statistic": e.statistic, "p_value": e.p_value, "decision": e.decision}
            for e in result.trail
        ],
        "ols": _ols_data(result.ols),
    }
    if result.spatial_fit is not None:
        fit = result.spatial_fit
        footnotes.append(
            f"{fit.model}: {fit.parameter_name} = {number(fit.rho_or_lambda)} "
            f"(se {number(fit.parameter_std_error)}), logL = {number(fit.log_likelihood)}."
        )
        data["spatial_fit"] = _spatial_data(fit)
    return ReportDocument(title, "", headers, rows, tuple(footnotes), data)


def recovery_table(summary: RecoverySummary, title: str | None = None) -> ReportDocument:
    """Monte Carlo bias, RMSE and coverage per parameter."""
    headers = ("parameter", "true", "mean", "bias", "rmse", "mc_se", "coverage", "failures")
    rows = tuple(
        (
            str(record["parameter"]),
            number(record["true"], 4),
            number(record["mean"], 4),
            number(record["bias"], 4),
            number(record["rmse"], 4),
            number(record["mc_se"], 4),
            number(record["coverage"], 3),
            str(int(record["failures"])),
        )
        for record in summary.table.to_dict("records")
    )
    footnotes = [f"{summary.replications} replications; {summary.failures} failed."]
    if summary.choice_counts:
        counts = ", ".join(f"{model} {count}" for model, count in summary.choice_counts.items())
        footnotes.append(f"Models chosen: {counts}.")
    data = {
        "estimator": summary.estimator,
        "replications": summary.replications,
        "failures": summary.failures,
        "choice_counts": summary.choice_counts,
        "table": summary.table.to_dict("records"),
    }
    title = title or f"Monte Carlo recovery: {summary.estimator}"
    return ReportDocument(title, "", headers, rows, tuple(footnotes), data)
