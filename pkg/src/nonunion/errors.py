"""Exception hierarchy.

Three rough strata, mirrored by the CLI exit codes: configuration problems
(exit 1), data problems (exit 2), and numerical/convergence problems (exit 3).
"""


class NonunionError(Exception):
    """Base class for everything raised by this package."""


class ConfigError(NonunionError):
    """Invalid configuration or invalid arguments supplied by the caller."""


class InvalidConfigError(ConfigError):
    pass


class InvalidPlanError(ConfigError):
    pass


class InvalidFractionError(ConfigError):
    pass


class DataError(NonunionError):
    """Malformed or unusable input data."""


class UnknownColumnError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class CellError(DataError):
    """A bad cell; carries (row, column) for error reporting."""

    def __init__(self, row, column, message):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class TypeMismatchError(CellError):
    pass


class UnknownCategoryError(CellError):
    pass


class InvalidDateError(CellError):
    pass


class DegenerateSplitError(DataError):
    pass


class AllMissingColumnError(DataError):
    def __init__(self, name):
        super().__init__(f"column {name!r} has no observed values")
        self.name = name


class SchemaMismatchError(DataError):
    pass


class SingleClassError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class EmptyMatrixError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class UnachievableError(DataError):
    pass


class TooFewPairsError(DataError):
    pass


class AllZeroDifferencesError(DataError):
    pass


class TooFewPointsError(DataError):
    pass


class DegenerateMeanError(DataError):
    pass


class NumericalError(NonunionError):
    """Optimization or numerical failure."""


class DivergedError(NumericalError):
    pass


class DegenerateKernelError(NumericalError):
    pass
