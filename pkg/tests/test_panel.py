"""Fixed effects, random effects, the Hausman test and the region effects F-test."""

import numpy as np
import pytest

from conftest import build_panel_design
from src.exceptions import DimensionMismatch, InvalidDesign, RankDeficient, UnbalancedPanel
from src.lsq_core import DesignMatrix
from src.panel import (
    PanelFit,
    PanelMethod,
    Preferred,
    VarianceComponents,
    fe_lsdv,
    hausman_test,
    pooled_ols,
    re_gls,
    region_effects_f_test,
)
from src.simulate import replication_seed, simulate_random_effects_panel


def manual_fit(coefficients, covariance, method=PanelMethod.LSDV, names=("x1", "x2")) -> PanelFit:
    return PanelFit(
        method=method,
        names=tuple(names),
        coefficients=np.asarray(coefficients, dtype=float),
        covariance=np.asarray(covariance, dtype=float),
        region_effects={},
        r_squared=0.5,
        see=1.0,
        df=50,
        ssr=1.0,
        residuals=np.zeros(3),
    )


# Fixed effects


def test_fixed_effects_recover_exact_slope_and_intercepts(rng):
    n_regions, n_periods = 3, 4
    alpha = np.array([1.0, -2.0, 0.5])
    x = rng.standard_normal(n_regions * n_periods)
    y = 2.0 * x + np.repeat(alpha, n_periods)
    fit = fe_lsdv(build_panel_design(x, y, n_regions, n_periods))

    assert fit.method is PanelMethod.LSDV
    assert fit.names == ("x1",)
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(list(fit.region_effects.values()), alpha, atol=1e-12)
    assert list(fit.region_effects) == ["R00", "R01", "R02"]
    assert fit.df == 12 - 1 - 3


def test_within_and_dummy_variable_forms_agree(rng, make_panel_design):
    design = make_panel_design(rng, 4, 5, slopes=(1.5, -0.7), effects=[0.0, 1.0, 2.0, -1.0])
    within = fe_lsdv(design, method="within")
    dummies = fe_lsdv(design, method="dummies")

    np.testing.assert_allclose(within.coefficients, dummies.coefficients, rtol=1e-10)
    np.testing.assert_allclose(within.covariance, dummies.covariance, rtol=1e-9)
    assert within.ssr == pytest.approx(dummies.ssr, rel=1e-10)
    assert within.df == dummies.df == 20 - 2 - 4
    np.testing.assert_allclose(
        list(within.region_effects.values()), list(dummies.region_effects.values()), rtol=1e-9, atol=1e-12
    )
    with pytest.raises(ValueError):
        fe_lsdv(design, method="between")


def test_time_invariant_regressor_is_rank_deficient(rng):
    n_regions, n_periods = 4, 3
    x = rng.standard_normal(n_regions * n_periods)
    z = np.repeat([1.0, 2.0, 3.0, 4.0], n_periods)
    y = x + rng.standard_normal(x.size)
    design = build_panel_design(np.column_stack([x, z]), y, n_regions, n_periods, names=("x", "z"))
    with pytest.raises(RankDeficient) as info:
        fe_lsdv(design)
    assert info.value.columns == ("z",)


def test_fixed_effects_without_residual_df(rng):
    x = rng.standard_normal((4, 2))
    design = build_panel_design(x, x.sum(axis=1) + 1.0, 2, 2)
    with pytest.raises(InvalidDesign):
        fe_lsdv(design)


# Panel structure


def test_unbalanced_and_unkeyed_designs(rng, make_panel_design):
    design = make_panel_design(rng, 3, 3, slopes=(1.0,))
    trimmed = DesignMatrix(design.response[:-1], design.regressors[:-1], design.column_names, design.row_keys[:-1])
    with pytest.raises(UnbalancedPanel) as info:
        fe_lsdv(trimmed)
    assert info.value.missing == (("R02", 2002),)

    unkeyed = DesignMatrix(design.response, design.regressors, design.column_names)
    with pytest.raises(DimensionMismatch):
        re_gls(unkeyed)
    with pytest.raises(DimensionMismatch):
        pooled_ols(unkeyed)


# Random effects


def test_negative_region_variance_is_clamped_and_gls_equals_pooled_ols(rng, caplog):
    n_regions, n_periods = 5, 4
    x = rng.standard_normal((n_regions, n_periods))
    e = rng.standard_normal((n_regions, n_periods))
    e -= e.mean(axis=1, keepdims=True)
    y = 0.8 * x + e
    design = build_panel_design(x.reshape(-1), y.reshape(-1), n_regions, n_periods)

    with caplog.at_level("WARNING"):
        fit = re_gls(design)
    components = fit.region_effects
    assert isinstance(components, VarianceComponents)
    assert components.clamped
    assert components.sigma2_u == 0.0
    assert fit.theta == 0.0
    assert "clamped" in caplog.text

    pooled = pooled_ols(design)
    np.testing.assert_allclose(fit.coefficients, pooled.coefficients, atol=1e-10)
    assert fit.df == pooled.df


def test_large_region_variance_drives_gls_to_fixed_effects(rng, make_panel_design):
    effects = 1000.0 * rng.standard_normal(30)
    design = make_panel_design(rng, 30, 10, slopes=(1.0, -0.5), effects=effects)
    re = re_gls(design)
    fe = fe_lsdv(design)
    assert re.theta > 0.99
    assert re.region_effects.method == "swamy-arora"
    np.testing.assert_allclose(re.slope_coefficients, fe.coefficients, atol=1e-3)
    assert re.intercept_name == "const"
    assert re.slope_names == ("x1", "x2")


def test_gls_is_ols_on_quasi_demeaned_data(rng, make_panel_design):
    design = make_panel_design(rng, 12, 5, slopes=(0.7,), effects=rng.standard_normal(12), constant=2.0)
    fit = re_gls(design)
    theta = fit.theta
    assert 0.0 < theta < 1.0

    def quasi(values):
        by_region = values.reshape(12, 5, -1)
        return (by_region - theta * by_region.mean(axis=1, keepdims=True)).reshape(60, -1)

    expected, *_ = np.linalg.lstsq(quasi(design.regressors), quasi(design.response).ravel(), rcond=None)
    np.testing.assert_allclose(fit.coefficients, expected, rtol=1e-9)
    assert fit.df == 60 - 2


def test_few_regions_fall_back_to_pooled_residual_components(rng, make_panel_design, caplog):
    design = make_panel_design(rng, 3, 10, slopes=(1.0, 0.5, -0.5), effects=[1.0, 0.0, -1.0])
    with caplog.at_level("WARNING"):
        fit = re_gls(design)
    assert fit.region_effects.method == "pooled-residual"
    assert "pooled residuals" in caplog.text


def test_exact_within_fit_gives_fixed_effects_slopes(rng):
    n_regions, n_periods = 8, 5
    alpha = rng.standard_normal(n_regions)
    x = rng.standard_normal(n_regions * n_periods)
    y = 2.0 * x + np.repeat(alpha, n_periods)
    design = build_panel_design(x, y, n_regions, n_periods)

    fit = re_gls(design)
    assert fit.theta == pytest.approx(1.0, abs=1e-8)
    assert fit.names == ("const", "x1")
    assert fit.slope_coefficients[0] == pytest.approx(fe_lsdv(design).coefficients[0], abs=1e-10)
    assert fit.slope_coefficients[0] == pytest.approx(2.0, abs=1e-10)
    assert fit.coefficients[0] == pytest.approx(y.mean() - 2.0 * x.mean(), abs=1e-10)
    assert fit.std_errors[0] > 0.0


@pytest.mark.parametrize("seed", range(5))
def test_gls_slope_lies_between_pooled_and_fixed_effects(seed, make_panel_design):
    rng = np.random.default_rng(seed)
    design = make_panel_design(rng, 10, 4, slopes=(0.8,), effects=rng.standard_normal(10), constant=1.0)
    re = re_gls(design).slope_coefficients[0]
    pooled = pooled_ols(design).coefficients[1]
    fe = fe_lsdv(design).coefficients[0]
    assert min(pooled, fe) - 1e-12 <= re <= max(pooled, fe) + 1e-12


@pytest.mark.slow
def test_random_effects_monte_carlo_recovers_coefficients():
    beta = np.array([1.0, -0.5])
    estimates, covered = [], []
    for r in range(200):
        design = simulate_random_effects_panel(20, 10, beta, sigma_u=1.0, sigma_e=0.5, seed=replication_seed(99, r))
        fit = re_gls(design)
        estimates.append(fit.coefficients)
        covered.append(np.abs(fit.coefficients - beta) <= 1.96 * fit.std_errors)
    bias = np.array(estimates).mean(axis=0) - beta
    assert np.all(np.abs(bias) < 0.05)
    coverage = np.mean(covered, axis=0)
    assert coverage[1] > 0.88


# Hausman


def test_hausman_zero_when_estimates_coincide():
    fe = manual_fit([1.0, 2.0], np.diag([2.0, 2.0]))
    re = manual_fit([1.0, 2.0], np.eye(2), method=PanelMethod.GLS)
    result = hausman_test(fe, re)
    assert result.statistic == pytest.approx(0.0)
    assert result.p_value == pytest.approx(1.0)
    assert result.preferred is Preferred.RE


def test_hausman_statistic_and_df():
    fe = manual_fit([2.0, 3.0], np.diag([2.0, 2.0]))
    re = manual_fit([1.0, 2.0], np.eye(2), method=PanelMethod.GLS)
    result = hausman_test(fe, re)
    assert result.statistic == pytest.approx(2.0)
    assert result.df == 2
    assert result.p_value == pytest.approx(np.exp(-1.0))
    assert not result.degenerate_flag
    assert result.compared == ("x1", "x2")


def test_hausman_four_slopes():
    names = ("a", "b", "c", "d")
    h = 6.157
    fe = manual_fit([np.sqrt(h), 0.0, 0.0, 0.0], 2.0 * np.eye(4), names=names)
    re = manual_fit(np.zeros(4), np.eye(4), method=PanelMethod.GLS, names=names)
    result = hausman_test(fe, re)
    assert result.statistic == pytest.approx(h)
    assert result.p_value == pytest.approx(np.exp(-h / 2.0) * (1.0 + h / 2.0), rel=1e-10)
    assert result.p_value == pytest.approx(0.1878, abs=1e-3)
    assert result.preferred is Preferred.RE
    assert hausman_test(fe, re, alpha=0.20).preferred is Preferred.FE


def test_hausman_degenerate_covariance_difference(caplog):
    fe = manual_fit([1.0, 2.0], np.eye(2))
    re = manual_fit([0.5, 2.5], np.eye(2), method=PanelMethod.GLS)
    with caplog.at_level("WARNING"):
        result = hausman_test(fe, re)
    assert result.degenerate_flag
    assert np.isfinite(result.statistic)
    assert "pseudo-inverse" in caplog.text


def test_hausman_restricted_and_mismatched_slopes():
    fe = manual_fit([2.0, 3.0], np.diag([2.0, 2.0]))
    re = manual_fit([1.0, 2.0], np.eye(2), method=PanelMethod.GLS)
    restricted = hausman_test(fe, re, slopes=("x2",))
    assert restricted.df == 1
    assert restricted.statistic == pytest.approx(1.0)
    with pytest.raises(DimensionMismatch):
        hausman_test(fe, re, slopes=("z",))


def test_hausman_invariant_to_rescaling_a_regressor():
    d_fe, d_re = np.array([0.4, -0.2]), np.array([0.1, 0.3])
    v_fe = np.array([[2.0, 0.3], [0.3, 1.0]])
    v_re = 0.5 * np.eye(2)
    base = hausman_test(manual_fit(d_fe, v_fe), manual_fit(d_re, v_re, method=PanelMethod.GLS))

    scale = np.diag([1.0, 0.1])  # second regressor multiplied by 10
    scaled = hausman_test(
        manual_fit(scale @ d_fe, scale @ v_fe @ scale),
        manual_fit(scale @ d_re, scale @ v_re @ scale, method=PanelMethod.GLS),
    )
    assert scaled.statistic == pytest.approx(base.statistic, rel=1e-10)


# Region effects F-test


def test_region_effects_f_test(rng, make_panel_design):
    design = make_panel_design(rng, 8, 6, slopes=(1.0,), effects=3.0 * rng.standard_normal(8))
    fe = fe_lsdv(design)
    pooled = pooled_ols(design)
    test = region_effects_f_test(fe, pooled)
    expected = ((pooled.ssr - fe.ssr) / 7) / (fe.ssr / fe.df)
    assert test.statistic == pytest.approx(expected)
    assert test.df == 7
    assert test.df_denominator == fe.df == 48 - 1 - 8
    assert test.rejects()

    with pytest.raises(DimensionMismatch):
        region_effects_f_test(re_gls(design), pooled)
