"""Exception types raised across the package."""


class NpCopVarError(Exception):
    """Base class for all package errors."""

    code = "error"


class InvalidInputError(NpCopVarError, ValueError):
    code = "invalid-input"


class DomainError(NpCopVarError, ValueError):
    """An argument lies outside the mathematical domain of a function."""

    code = "domain"


class DegenerateSampleError(NpCopVarError, ValueError):
    code = "degenerate-sample"


class NoLocalDataError(NpCopVarError, ValueError):
    """The kernel weights around a conditioning value are numerically zero."""

    code = "no-local-data"


class BandwidthSelectionError(NpCopVarError, RuntimeError):
    code = "bandwidth-selection"


class SimulationError(NpCopVarError, RuntimeError):
    code = "simulation"
