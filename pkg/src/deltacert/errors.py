"""Exception hierarchy shared by every module of the toolkit."""


class DeltaCertError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(DeltaCertError, ValueError):
    """Non-finite, mis-shaped or otherwise unusable numeric input."""


class RegionTooLargeError(DeltaCertError):
    """A sample grid would exceed the configured sample cap."""


class DimensionMismatchError(InvalidInputError):
    pass


class InvalidStorageError(InvalidInputError):
    """Storage matrix is not positive definite."""


class SingularLoadError(DeltaCertError):
    """Constant-power load evaluated at (near) zero current."""


class IllPosedNetworkError(DeltaCertError):
    """``A_I + M_Y A_V`` is singular: the port variables do not determine the circuit."""


class WellPosednessError(DeltaCertError):
    """The algebraic Jacobian ``dg/du`` is singular at the evaluation point."""


class AlgebraicSolveError(DeltaCertError):
    """Newton iteration on ``g(x, u) = 0`` did not converge."""


class EquilibriumNotFoundError(DeltaCertError):
    pass


class GridTooSmallError(DeltaCertError):
    """No boundary of the dissipative region was detected inside the grid."""


class ConfigError(DeltaCertError):
    """Configuration problem, located by key path and (when known) line/column."""

    def __init__(self, message, path=(), line=None, column=None):
        self.path = tuple(path)
        self.line = line
        self.column = column
        self.message = message
        where = ".".join(str(p) for p in self.path) or "<root>"
        if line is not None:
            loc = f"{where} (line {line}, column {column})"
        else:
            loc = where
        super().__init__(f"{loc}: {message}")
