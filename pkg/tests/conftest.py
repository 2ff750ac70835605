"""Shared fixtures: seeded generators, lattices and small simulated panels."""

from collections.abc import Callable, Sequence

import numpy as np
import pytest

from src.dataset import write_panel_csv
from src.lsq_core import INTERCEPT, DesignMatrix
from src.simulate import SimConfig, simulate_panel, simulation_weights
from src.weights import SpatialWeights, rook_lattice_weights, row_standardize, write_weights_csv

PanelFactory = Callable[..., DesignMatrix]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def lattice_7() -> SpatialWeights:
    return row_standardize(rook_lattice_weights(7, 7))


@pytest.fixture
def lattice_10() -> SpatialWeights:
    return row_standardize(rook_lattice_weights(10, 10))


def build_panel_design(
    x: np.ndarray,
    y: np.ndarray,
    n_regions: int,
    n_periods: int,
    names: Sequence[str] | None = None,
    intercept: bool = True,
) -> DesignMatrix:
    """Stack (region, period) rows; x has one column per slope."""
    x = np.asarray(x, dtype=float).reshape(n_regions * n_periods, -1)
    names = tuple(names or (f"x{j + 1}" for j in range(x.shape[1])))
    if intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])
        names = (INTERCEPT,) + names
    keys = tuple((f"R{i:02d}", 2000 + t) for i in range(n_regions) for t in range(n_periods))
    return DesignMatrix(np.asarray(y, dtype=float).reshape(-1), x, names, keys)


@pytest.fixture
def make_panel_design() -> PanelFactory:
    """Factory for y_it = x_it'b + a_i + e_it designs with an intercept."""

    def factory(
        rng: np.random.Generator,
        n_regions: int,
        n_periods: int,
        slopes: Sequence[float],
        effects: np.ndarray | None = None,
        sigma: float = 1.0,
        constant: float = 0.0,
    ) -> DesignMatrix:
        n = n_regions * n_periods
        x = rng.standard_normal((n, len(slopes)))
        alpha = np.zeros(n_regions) if effects is None else np.asarray(effects, dtype=float)
        y = constant + x @ np.asarray(slopes) + np.repeat(alpha, n_periods) + sigma * rng.standard_normal(n)
        return build_panel_design(x, y, n_regions, n_periods)

    return factory


@pytest.fixture
def small_config() -> SimConfig:
    return SimConfig(n_regions=12, n_periods=4, sigma_u=0.005, master_seed=777)


@pytest.fixture
def panel_files(tmp_path, small_config):
    """Simulated panel CSV and matching row-standardized weights CSV."""
    panel_path = write_panel_csv(simulate_panel(small_config), tmp_path / "panel.csv")
    weights_path = write_weights_csv(simulation_weights(small_config), tmp_path / "weights.csv")
    return panel_path, weights_path
