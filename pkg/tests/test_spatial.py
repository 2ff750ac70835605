"""Moran's I, LM tests, ML lag/error models and the specification search."""

import numpy as np
import pytest

from src.exceptions import DegenerateSample, NumericalBreakdown, OptimizerAtBoundary
from src.lsq_core import Decision, DesignMatrix, gaussian_log_likelihood, ols_fit
from src.simulate import (
    SimConfig,
    monte_carlo_recovery,
    replication_seed,
    simulate_sar_cross_section,
    simulate_sem_cross_section,
)
from src.spatial import (
    LM_ERROR,
    LM_LAG,
    RLM_ERROR,
    RLM_LAG,
    DiagnosticsReport,
    SpatialModel,
    TrailEntry,
    _maximize,
    concentrated_log_likelihood,
    concentrated_sigma2,
    lm_error,
    lm_lag,
    local_morans_i,
    ml_sar,
    ml_sem,
    morans_i,
    replay_trail,
    robust_lm_error,
    robust_lm_lag,
    run_diagnostics,
    spec_search,
)
from src.weights import binary_contiguity_weights, rook_lattice_weights, row_standardize


@pytest.fixture
def cycle_8():
    ids = [f"c{i}" for i in range(8)]
    pairs = [(ids[i], ids[(i + 1) % 8]) for i in range(8)]
    return row_standardize(binary_contiguity_weights(pairs, ids))


@pytest.fixture
def orthogonal_residual_design():
    """y = 2 + e with e an eigenvector of the 8-cycle for eigenvalue 0, orthogonal to X."""
    e = np.array([1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0])
    x = np.array([1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0])
    return DesignMatrix(2.0 + e, np.column_stack([np.ones(8), x]), ("const", "x"))


# Moran's I


def test_checkerboard_has_perfect_negative_autocorrelation():
    w = rook_lattice_weights(2, 2)
    result = morans_i(np.array([1.0, -1.0, -1.0, 1.0]), w)
    assert result.i_value == pytest.approx(-1.0, abs=1e-12)
    assert result.expected_i == pytest.approx(-1.0 / 3.0)


def test_linear_trend_on_a_path():
    w = binary_contiguity_weights([("a", "b"), ("b", "c"), ("c", "d")], ["a", "b", "c", "d"])
    result = morans_i(np.array([1.0, 2.0, 3.0, 4.0]), w)
    assert result.i_value == pytest.approx(1.0 / 3.0)
    assert result.expected_i == pytest.approx(-1.0 / 3.0)
    assert result.variance_i > 0.0


def test_local_indicators_sum_to_global(rng, lattice_7):
    values = rng.standard_normal(49)
    local = local_morans_i(values, lattice_7)
    assert local.sum() == pytest.approx(lattice_7.s0 * morans_i(values, lattice_7).i_value)


@pytest.mark.parametrize("scale, shift", [(3.0, 0.0), (0.01, -5.0), (250.0, 1e3)])
def test_moran_is_invariant_to_affine_transforms(rng, lattice_7, scale, shift):
    z = rng.standard_normal(49)
    expected = morans_i(z, lattice_7).i_value
    assert morans_i(scale * z + shift, lattice_7).i_value == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_moran_lies_within_the_eigenvalue_bounds(seed):
    rng = np.random.default_rng(seed)
    n = 12
    ids = [f"n{i}" for i in range(n)]
    pairs = [(ids[i], ids[(i + step) % n]) for i in range(n) for step in (1, 3)]
    w = row_standardize(binary_contiguity_weights(pairs, ids))
    omega_min, omega_max = w.real_eigenvalue_bounds
    assert omega_max == pytest.approx(1.0, abs=1e-8)
    for _ in range(20):
        i_value = morans_i(rng.standard_normal(n), w).i_value
        assert omega_min - 1e-8 <= i_value <= 1.0 + 1e-8
        assert i_value >= 1.0 / omega_min - 1e-8


def test_moran_of_constant_vector():
    with pytest.raises(DegenerateSample):
        morans_i(np.ones(4), rook_lattice_weights(2, 2))


# LM tests


def test_lm_statistics_vanish_for_orthogonal_residuals(orthogonal_residual_design, cycle_8):
    design = orthogonal_residual_design
    fit = ols_fit(design)
    np.testing.assert_allclose(fit.residuals, design.response - 2.0, atol=1e-12)
    assert lm_lag(fit, design, cycle_8).statistic == pytest.approx(0.0, abs=1e-20)
    assert lm_error(fit, design, cycle_8).statistic == pytest.approx(0.0, abs=1e-20)


def test_lm_statistics_match_matrix_formulas():
    ids = ["a", "b", "c", "d", "e"]
    w = row_standardize(binary_contiguity_weights([("a", "b"), ("b", "c"), ("c", "d"), ("d", "e"), ("a", "c")], ids))
    x = np.array([0.5, 1.7, -0.3, 2.2, 1.1])
    y = np.array([1.2, 3.9, 0.4, 4.1, 2.0])
    design = DesignMatrix(y, np.column_stack([np.ones(5), x]), ("const", "x"))
    fit = ols_fit(design)

    W = w.matrix
    X = design.regressors
    xtx_inv = np.linalg.inv(X.T @ X)
    b = xtx_inv @ X.T @ y
    M = np.eye(5) - X @ xtx_inv @ X.T
    e = M @ y
    s2 = e @ e / 5
    T = np.trace(W.T @ W + W @ W)
    d = e @ W @ y / s2
    g = e @ W @ e / s2
    wxb = W @ X @ b
    D = wxb @ M @ wxb / s2 + T
    expected = {
        "lag": d**2 / D,
        "error": g**2 / T,
        "robust_lag": (d - g) ** 2 / (D - T),
        "robust_error": (g - T / D * d) ** 2 / (T * (1.0 - T / D)),
    }

    assert lm_lag(fit, design, w).statistic == pytest.approx(expected["lag"], rel=1e-9)
    assert lm_error(fit, design, w).statistic == pytest.approx(expected["error"], rel=1e-9)
    assert robust_lm_lag(fit, design, w).statistic == pytest.approx(expected["robust_lag"], rel=1e-9)
    assert robust_lm_error(fit, design, w).statistic == pytest.approx(expected["robust_error"], rel=1e-9)


def test_robust_tests_unavailable_when_wxb_in_column_space(orthogonal_residual_design, cycle_8, caplog):
    design = orthogonal_residual_design
    fit = ols_fit(design)
    with pytest.raises(NumericalBreakdown):
        robust_lm_lag(fit, design, cycle_8)
    with caplog.at_level("WARNING"):
        battery = run_diagnostics(fit, design, cycle_8)
    assert battery.robust_lm_lag.decision_at_5pct is Decision.UNAVAILABLE
    assert np.isnan(battery.robust_lm_error.p_value)
    assert "not available" in caplog.text


def test_intercept_only_design_breaks_robust_lag(rng, lattice_7):
    design = DesignMatrix(rng.standard_normal(49), np.ones((49, 1)), ("const",))
    with pytest.raises(NumericalBreakdown):
        robust_lm_lag(ols_fit(design), design, lattice_7)


def test_planted_lag_dependence_is_detected(lattice_10):
    design = simulate_sar_cross_section(100, lattice_10, 0.7, (1.0, 0.5), 1.0, seed=11)
    fit = ols_fit(design)
    assert lm_lag(fit, design, lattice_10).rejects()


def test_diagnostics_columns_follow_table_order(rng, lattice_7):
    design = simulate_sar_cross_section(49, lattice_7, 0.0, (1.0, 0.5, -0.5), 1.0, seed=5)
    battery = run_diagnostics(ols_fit(design), design, lattice_7)
    assert [label for label, _, _ in battery.columns()] == list(DiagnosticsReport.COLUMNS)
    assert DiagnosticsReport.COLUMNS == ("JB", "BP", "KB", "M'I", "LM_l", "LMR_l", "LM_e", "LMR_e")


@pytest.mark.slow
@pytest.mark.parametrize("test", [lm_lag, lm_error, robust_lm_lag, robust_lm_error])
def test_lm_size_under_the_null(test, lattice_10):
    reps = 500
    rejections = 0
    for r in range(reps):
        design = simulate_sar_cross_section(100, lattice_10, 0.0, (1.0, 0.5), 1.0, seed=replication_seed(2024, r))
        rejections += test(ols_fit(design), design, lattice_10).rejects(0.05)
    assert 0.03 <= rejections / reps <= 0.07


# Maximum likelihood


@pytest.mark.parametrize("model", [SpatialModel.SAR, SpatialModel.SEM])
def test_concentrated_likelihood_at_zero_is_ols(model, lattice_7):
    design = simulate_sem_cross_section(49, lattice_7, 0.3, (1.0, -1.0), 1.0, seed=3)
    expected = gaussian_log_likelihood(ols_fit(design).residuals)
    assert concentrated_log_likelihood(model, 0.0, design, lattice_7) == pytest.approx(expected, rel=1e-12)


def test_sar_fit_is_a_likelihood_maximum(lattice_7):
    design = simulate_sar_cross_section(49, lattice_7, 0.5, (1.0, 2.0), 1.0, seed=21)
    fit = ml_sar(design, lattice_7)
    assert fit.parameter_name == "rho"
    lo, hi = fit.interval
    assert lo < fit.rho_or_lambda < hi
    for offset in (-0.01, 0.01):
        assert concentrated_log_likelihood(SpatialModel.SAR, fit.rho_or_lambda + offset, design, lattice_7) <= (
            fit.log_likelihood + 1e-9
        )
    assert fit.lr_test().statistic >= 0.0
    assert np.all(fit.coefficient_std_errors > 0.0)
    assert fit.parameter_std_error > 0.0


def test_maximize_interior_and_boundary():
    assert _maximize(lambda p: -((p - 0.3) ** 2), (-1.0, 1.0), "rho") == pytest.approx(0.3, abs=1e-6)
    with pytest.raises(OptimizerAtBoundary) as info:
        _maximize(lambda p: p, (-1.0, 1.0), "lambda")
    assert info.value.parameter == "lambda"


@pytest.mark.slow
def test_sar_recovery(lattice_7):
    estimates = [
        ml_sar(simulate_sar_cross_section(49, lattice_7, 0.5, (1.0, 2.0), 1.0, seed=replication_seed(7, r)), lattice_7).rho_or_lambda
        for r in range(200)
    ]
    assert 0.45 <= np.mean(estimates) <= 0.55


@pytest.mark.slow
def test_sem_recovery(lattice_7):
    estimates = [
        ml_sem(simulate_sem_cross_section(49, lattice_7, 0.5, (1.0, 2.0), 1.0, seed=replication_seed(8, r)), lattice_7).rho_or_lambda
        for r in range(200)
    ]
    assert 0.4 <= np.mean(estimates) <= 0.6


def test_filtered_regression_variance_at_fixed_lambda(lattice_7):
    design = simulate_sem_cross_section(49, lattice_7, 0.3, (1.0, -1.0), 1.0, seed=13)
    filt = np.eye(49) - 0.3 * lattice_7.matrix
    y, x = filt @ design.response, filt @ design.regressors
    b, *_ = np.linalg.lstsq(x, y, rcond=None)
    residuals = y - x @ b
    expected = residuals @ residuals / 49
    assert concentrated_sigma2(SpatialModel.SEM, 0.3, design, lattice_7) == pytest.approx(expected, rel=1e-9)


def test_lag_estimate_near_zero_without_dependence():
    w = row_standardize(rook_lattice_weights(20, 20))
    design = simulate_sar_cross_section(400, w, 0.0, (1.0, 2.0), 1.0, seed=17)
    fit = ml_sar(design, w)
    ols = ols_fit(design)
    assert abs(fit.rho_or_lambda) < 0.1
    assert np.all(np.abs(fit.coefficients - ols.coefficients) < ols.std_errors)


# Specification search


def trail(lag_p, error_p, robust_lag_p=np.nan, robust_error_p=np.nan, robust_lag_stat=1.0, robust_error_stat=1.0):
    return (
        TrailEntry(2, LM_LAG, 1.0, lag_p, ""),
        TrailEntry(2, LM_ERROR, 1.0, error_p, ""),
        TrailEntry(5, RLM_LAG, robust_lag_stat, robust_lag_p, ""),
        TrailEntry(5, RLM_ERROR, robust_error_stat, robust_error_p, ""),
    )


def test_replay_trail_decisions():
    assert replay_trail(trail(0.5, 0.5), 0.05) is SpatialModel.OLS
    assert replay_trail(trail(0.01, 0.5), 0.05) is SpatialModel.SAR
    assert replay_trail(trail(0.5, 0.01), 0.05) is SpatialModel.SEM
    assert replay_trail(trail(0.01, 0.01, 0.02, 0.30), 0.05) is SpatialModel.SAR
    assert replay_trail(trail(0.01, 0.01, 0.30, 0.02), 0.05) is SpatialModel.SEM
    assert replay_trail(trail(0.01, 0.01, 0.0, 0.0, 9.0, 12.0), 0.05) is SpatialModel.SEM
    assert replay_trail(trail(0.03, 0.5), 0.01) is SpatialModel.OLS
    with pytest.raises(NumericalBreakdown):
        replay_trail(trail(0.01, 0.01), 0.05)


def test_spec_search_picks_the_lag_model(lattice_10):
    design = simulate_sar_cross_section(100, lattice_10, 0.7, (1.0, 2.0), 1.0, seed=31)
    result = spec_search(design, lattice_10)
    assert result.chosen is replay_trail(result.trail, result.significance_level)
    assert result.chosen is SpatialModel.SAR
    assert result.spatial_fit is not None
    assert result.spatial_fit.model is SpatialModel.SAR
    assert [entry.name for entry in result.trail] == [LM_LAG, LM_ERROR, RLM_LAG, RLM_ERROR]


def test_spec_search_choice_is_replayable_for_error_data(lattice_10):
    design = simulate_sem_cross_section(100, lattice_10, 0.7, (1.0, 2.0), 1.0, seed=41)
    result = spec_search(design, lattice_10)
    assert result.chosen is replay_trail(result.trail, result.significance_level)
    assert (result.spatial_fit is None) == (result.chosen is SpatialModel.OLS)


@pytest.mark.slow
def test_spec_search_keeps_ols_under_the_null():
    config = SimConfig(
        n_regions=100,
        true_coefficients=(1.0, 0.2),
        sigma_e=1.0,
        estimator="specsearch",
        replications=200,
        master_seed=4242,
    )
    summary = monte_carlo_recovery(config, progress=False)
    assert summary.choice_counts["OLS"] >= 180
    assert sum(summary.choice_counts.values()) + summary.failures == 200
