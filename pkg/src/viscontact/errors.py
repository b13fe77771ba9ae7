"""Exception hierarchy shared by the solver, geometry and CLI layers."""


class ViscontactError(Exception):
    """Base class for all package errors."""


class ConfigError(ViscontactError, ValueError):
    """Invalid or inconsistent configuration."""


class GeometryError(ViscontactError):
    """Mesh deformation produced an invalid domain."""


class NumericError(ViscontactError, FloatingPointError):
    """Non-finite values encountered during assembly."""


class SingularMatrixError(ViscontactError):
    """Direct factorization hit a (numerically) zero pivot."""


class NullSpaceError(ViscontactError):
    """The contact constraints do not control the rigid-body modes."""


class NonconvergenceError(ViscontactError):
    """An iteration hit its limit; ``history`` keeps the residual trace."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
