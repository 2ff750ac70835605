"""Exception hierarchy for the migration toolkit.

Input problems (bad files, bad parameters) derive from ``InputError``; failures
of the numerical machinery derive from ``NumericalError``. The CLI maps the two
branches to distinct exit codes.
"""

from collections.abc import Sequence

RegionYear = tuple[str, int]


class MigrationError(Exception):
    """Base class for every error raised by this package."""


class InputError(MigrationError):
    """The caller supplied data or parameters that violate a contract."""


class NumericalError(MigrationError):
    """An estimator or test could not be computed from valid-looking input."""


# Input errors


class ConfigError(InputError):
    def __init__(self, key: str, value: str) -> None:
        self.key = key
        self.value = value
        super().__init__(f"Invalid value for {key}: {value!r}")


class MissingColumn(InputError):
    def __init__(self, columns: Sequence[str], source: str = "") -> None:
        self.columns = tuple(columns)
        where = f" in {source}" if source else ""
        super().__init__(f"Missing column(s){where}: {', '.join(self.columns)}")


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class UnbalancedPanel(InputError):
    def __init__(self, missing: Sequence[RegionYear]) -> None:
        self.missing = tuple(missing)
        shown = ", ".join(f"({r}, {y})" for r, y in self.missing[:10])
        more = f" and {len(self.missing) - 10} more" if len(self.missing) > 10 else ""
        super().__init__(f"Panel is unbalanced; missing region-year pairs: {shown}{more}")


class NonPositiveDenominator(InputError):
    def __init__(self, column: str, key: RegionYear | None = None, value: float | None = None) -> None:
        self.column = column
        self.key = key
        self.value = value
        where = f" at ({key[0]}, {key[1]})" if key is not None else ""
        super().__init__(f"{column} must be positive{where}, got {value}")


class SingleRegion(InputError):
    def __init__(self) -> None:
        super().__init__("At least two regions are required for an external average")


class UnknownRegion(InputError):
    def __init__(self, region_id: str) -> None:
        self.region_id = region_id
        super().__init__(f"Unknown region: {region_id}")


class SelfPair(InputError):
    def __init__(self, region_id: str) -> None:
        self.region_id = region_id
        super().__init__(f"Region {region_id} cannot be its own neighbour")


class CoincidentCoordinates(InputError):
    def __init__(self, first: str, second: str) -> None:
        self.pair = (first, second)
        super().__init__(f"Regions {first} and {second} share the same coordinates")


class MissingCoordinates(InputError):
    def __init__(self, region_id: str) -> None:
        self.region_id = region_id
        super().__init__(f"Region {region_id} has no latitude/longitude")


class DimensionMismatch(InputError):
    pass


class InvalidDesign(InputError):
    pass


class InvalidWeights(InputError):
    pass


class ParameterOutOfRange(InputError):
    pass


class ScenarioError(InputError):
    def __init__(self, key: str, message: str) -> None:
        self.key = key
        super().__init__(f"Scenario key '{key}': {message}")


class InfeasibleBackSolve(InputError):
    pass


# Numerical errors


class RankDeficient(NumericalError):
    def __init__(self, columns: Sequence[str]) -> None:
        self.columns = tuple(columns)
        super().__init__(f"Regressor matrix is rank deficient; dependent column(s): {', '.join(self.columns)}")


class DegenerateSample(NumericalError):
    pass


class DegenerateWeights(NumericalError):
    pass


class NumericalBreakdown(NumericalError):
    pass


class OptimizerAtBoundary(NumericalError):
    def __init__(self, parameter: str, value: float, interval: tuple[float, float]) -> None:
        self.parameter = parameter
        self.value = value
        self.interval = interval
        super().__init__(
            f"{parameter} estimate {value:.8f} is at the boundary of "
            f"the admissible interval ({interval[0]:.6f}, {interval[1]:.6f})"
        )


class SingularSystem(NumericalError):
    pass
