"""Spatial weight matrices over regions."""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import TypeAlias

import numpy as np
import pandas as pd
from scipy import linalg

from .config import DISTANCE_POWER, EARTH_RADIUS_KM, ROW_SUM_TOLERANCE, WEIGHTS_CSV_DIGITS
from .dataset import Region
from .exceptions import (
    CoincidentCoordinates,
    DegenerateWeights,
    DimensionMismatch,
    InvalidWeights,
    MissingCoordinates,
    ParameterOutOfRange,
    ParseError,
    SelfPair,
    UnknownRegion,
)

logger = logging.getLogger(__name__)

# Type aliases
RegionPair: TypeAlias = tuple[str, str]
Interval: TypeAlias = tuple[float, float]

_IMAGINARY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SpatialWeights:
    """n x n nonnegative weights with zero diagonal."""

    region_order: tuple[str, ...]
    matrix: np.ndarray
    standardized: bool = False
    zero_rows: tuple[str, ...] = ()  # isolated regions left at zero by row_standardize

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        order = tuple(self.region_order)
        n = len(order)
        if n < 2:
            raise InvalidWeights("a weights matrix needs at least two regions")
        if matrix.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {matrix.shape} does not match {n} regions")
        if len(set(order)) != n:
            raise InvalidWeights("region ids must be unique")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0.0):
            raise InvalidWeights("weights must be finite and nonnegative")
        if np.any(np.diag(matrix) != 0.0):
            raise InvalidWeights("weights diagonal must be zero")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "region_order", order)

    @property
    def n(self) -> int:
        return len(self.region_order)

    @property
    def s0(self) -> float:
        return float(self.matrix.sum())

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.T, rtol=0.0, atol=1e-14))

    def lag(self, values: np.ndarray) -> np.ndarray:
        """Spatial lag W v."""
        return self.matrix @ values

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of W, computed once and cached."""
        if self.is_symmetric:
            values = linalg.eigvalsh(self.matrix).astype(complex)
        else:
            values = linalg.eigvals(self.matrix)
        values.setflags(write=False)
        return values

    @cached_property
    def real_eigenvalue_bounds(self) -> Interval:
        """Smallest and largest real eigenvalue."""
        real = self.eigenvalues[np.abs(self.eigenvalues.imag) <= _IMAGINARY_TOLERANCE].real
        if real.size == 0 or (real.min() >= 0.0 and real.max() <= 0.0):
            raise DegenerateWeights("weights matrix has no nonzero real eigenvalue")
        return float(real.min()), float(real.max())

    def admissible_interval(self) -> Interval:
        """Open interval (1/w_min, 1/w_max) on which I - rho W is nonsingular."""
        omega_min, omega_max = self.real_eigenvalue_bounds
        if omega_min >= 0.0 or omega_max <= 0.0:
            raise DegenerateWeights("eigenvalues of W do not bracket zero")
        return 1.0 / omega_min, 1.0 / omega_max

    def log_determinant(self, parameter: float) -> float:
        """ln|I - parameter W| from the cached eigenvalues."""
        return float(np.sum(np.log(1.0 - parameter * self.eigenvalues)).real)

    def to_frame(self) -> pd.DataFrame:
        index = pd.Index(self.region_order, name="region_id")
        return pd.DataFrame(self.matrix, index=index, columns=list(self.region_order))


def great_circle_km(lat1: float, lon1: float, lat2: float, lon2: float, radius: float = EARTH_RADIUS_KM) -> float:
    """Haversine distance on a sphere of the given radius."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlambda = np.radians(lon2 - lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlambda / 2.0) ** 2
    return float(2.0 * radius * np.arcsin(np.sqrt(min(1.0, a))))


def inverse_distance_weights(regions: Sequence[Region], power: float = DISTANCE_POWER) -> SpatialWeights:
    """w_ij = 1 / d(i, j)^power with d the great-circle distance in km."""
    if not power > 0.0:
        raise ParameterOutOfRange(f"distance power must be positive, got {power}")
    if len(regions) < 2:
        raise InvalidWeights("a weights matrix needs at least two regions")
    for region in regions:
        if not region.has_coordinates:
            raise MissingCoordinates(region.id)

    n = len(regions)
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            a, b = regions[i], regions[j]
            distance = great_circle_km(a.latitude, a.longitude, b.latitude, b.longitude)
            if distance == 0.0:
                raise CoincidentCoordinates(a.id, b.id)
            matrix[i, j] = matrix[j, i] = distance ** -power
    return SpatialWeights(tuple(region.id for region in regions), matrix)


def _region_ids(regions: Sequence[Region | str]) -> tuple[str, ...]:
    return tuple(region.id if isinstance(region, Region) else str(region) for region in regions)


def binary_contiguity_weights(adjacency: Iterable[RegionPair], regions: Sequence[Region | str]) -> SpatialWeights:
    """Symmetric 0/1 weights from an explicit neighbour list."""
    order = _region_ids(regions)
    position = {region_id: i for i, region_id in enumerate(order)}
    matrix = np.zeros((len(order), len(order)))
    for first, second in adjacency:
        for region_id in (first, second):
            if region_id not in position:
                raise UnknownRegion(region_id)
        if first == second:
            raise SelfPair(first)
        i, j = position[first], position[second]
        matrix[i, j] = matrix[j, i] = 1.0
    return SpatialWeights(order, matrix)


def rook_lattice_weights(rows: int, cols: int) -> SpatialWeights:
    """Binary rook contiguity on a rows x cols grid, cells in row-major order."""
    ids = [f"r{i}c{j}" for i in range(rows) for j in range(cols)]
    pairs: list[RegionPair] = []
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                pairs.append((f"r{i}c{j}", f"r{i}c{j + 1}"))
            if i + 1 < rows:
                pairs.append((f"r{i}c{j}", f"r{i + 1}c{j}"))
    return binary_contiguity_weights(pairs, ids)


def row_standardize(w: SpatialWeights) -> SpatialWeights:
    """Divide each nonzero row by its sum; isolated regions stay zero and are flagged."""
    sums = w.matrix.sum(axis=1)
    nonzero = sums > 0.0
    if w.standardized and np.all(np.abs(sums[nonzero] - 1.0) <= ROW_SUM_TOLERANCE):
        return w
    zero_rows = tuple(region_id for region_id, keep in zip(w.region_order, nonzero) if not keep)
    if zero_rows:
        logger.warning("Regions without neighbours left as zero rows: %s", ", ".join(zero_rows))
    matrix = np.array(w.matrix)
    matrix[nonzero] /= sums[nonzero, None]
    return replace(w, matrix=matrix, standardized=True, zero_rows=zero_rows)


def write_weights_csv(w: SpatialWeights, path: Path | str) -> Path:
    """Square matrix with a region-id header row and column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    w.to_frame().to_csv(path, float_format=f"%.{WEIGHTS_CSV_DIGITS}g", lineterminator="\n")
    return path


def read_weights_csv(path: Path | str) -> SpatialWeights:
    path = Path(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame = raw.set_index(raw.columns[0])
    frame.index = frame.index.str.strip()
    frame.columns = [str(c).strip() for c in frame.columns]
    if list(frame.index) != list(frame.columns):
        raise ParseError(f"row ids {list(frame.index)} do not match header ids {list(frame.columns)}")
    try:
        matrix = frame.to_numpy(dtype=float)
    except ValueError as exc:
        raise ParseError(f"non-numeric weight in {path.name}: {exc}") from None
    sums = matrix.sum(axis=1)
    standardized = bool(np.all(np.abs(sums[sums > 0.0] - 1.0) <= 1e-9))
    return SpatialWeights(tuple(frame.index), matrix, standardized=standardized)
