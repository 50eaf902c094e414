"""Exception types raised across the package."""


class ZenoError(Exception):
    """Base class for all package errors."""


class ValidationError(ZenoError, ValueError):
    """Invalid physical parameters or configuration."""


class NotPositiveSemidefinite(ValidationError):
    def __init__(self, eigenvalue, tolerance):
        self.eigenvalue = float(eigenvalue)
        self.tolerance = float(tolerance)
        super().__init__(
            f"noise covariance is not positive semidefinite: smallest "
            f"eigenvalue {self.eigenvalue:.6g} < -{self.tolerance:.3g}"
        )


class NonFiniteEntry(ValidationError):
    pass


class VariantMismatch(ValidationError):
    """Noise entries violate the assumptions of the requested closed form."""


class StepTooLarge(ValidationError):
    pass


class NonConvergent(ZenoError, ArithmeticError):
    pass


class FactorizationFailure(ZenoError, ArithmeticError):
    pass


class ZeroProbabilityBranch(ZenoError, ArithmeticError):
    pass


class ParseError(ZenoError, ValueError):
    """Malformed run configuration text."""
