"""Configuration settings for the migration toolkit."""

import logging
import os
from pathlib import Path
from typing import TypeAlias

from dotenv import load_dotenv

from .exceptions import ConfigError

if hasattr(logging, "getLevelNamesMapping"):
    _level_names_mapping = logging.getLevelNamesMapping
else:  # Python < 3.11
    def _level_names_mapping() -> dict[str, int]:
        return logging._nameToLevel.copy()

# Type aliases
Probability: TypeAlias = float
Tolerance: TypeAlias = float

# Paths
PROJECT_ROOT = Path(__file__).parent.parent
DATA_DIR = PROJECT_ROOT / "data"

# Values in a project-level .env override the defaults below
load_dotenv(PROJECT_ROOT / ".env")


def _env_float(key: str, default: float) -> float:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(key, raw) from None


def _env_int(key: str, default: int) -> int:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, raw) from None


def _env_choice(key: str, default: str, choices: tuple[str, ...]) -> str:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    value = raw.strip().lower()
    if value not in choices:
        raise ConfigError(key, raw)
    return value


OUTPUT_DIR = Path(os.getenv("MIGRATION_OUTPUT_DIR", str(PROJECT_ROOT / "output")))

# Hypothesis testing
SIGNIFICANCE_LEVEL: Probability = _env_float("MIGRATION_ALPHA", 0.05)
STAR_5PCT: Probability = 0.05  # marker "*"
STAR_10PCT: Probability = 0.10  # marker "**"

# Dataset construction
AGRI_MODES = ("share", "headcount")
AGRI_MODE = _env_choice("MIGRATION_AGRI_MODE", "share", AGRI_MODES)

# Spatial weights
DISTANCE_POWER = _env_float("MIGRATION_DISTANCE_POWER", 1.0)
EARTH_RADIUS_KM = 6371.0088  # mean radius of the WGS84 ellipsoid
ROW_SUM_TOLERANCE: Tolerance = 1e-12
WEIGHTS_CSV_DIGITS = 12  # significant digits

# Least squares
RANK_TOLERANCE_FACTOR: Tolerance = 1.0  # multiplies max(n, k) * eps * |R[0, 0]|

# Random effects
THETA_LIMIT_TOLERANCE: Tolerance = 1e-8  # 1 - theta below this uses the within slopes

# Maximum likelihood search
LIKELIHOOD_GRID_POINTS = 201
OPTIMIZER_TOLERANCE: Tolerance = 1e-8
BOUNDARY_TOLERANCE: Tolerance = 1e-6
HESSIAN_STEP_FRACTION = 1e-5  # of the admissible interval width

# Simulation
DEFAULT_SEED = _env_int("MIGRATION_SEED", 20070101)

# Reports
REPORT_DECIMALS = 3

LOG_LEVEL = os.getenv("MIGRATION_LOG_LEVEL", "WARNING").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int | None = None) -> None:
    """Configure the root logger once for command-line use."""
    resolved = LOG_LEVEL if level is None else level
    if isinstance(resolved, str) and resolved not in _level_names_mapping():
        raise ConfigError("MIGRATION_LOG_LEVEL", resolved)
    logging.basicConfig(level=resolved, format=LOG_FORMAT, force=True)
