"""
Error taxonomy for the homoclinic toolkit.
Every error also derives from the builtin a caller would naturally catch.
"""


class HomoclinicError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HomoclinicError, ValueError):
    """Configuration or grid specification violates a constraint."""


class DomainError(HomoclinicError, ValueError):
    """Input lies outside the domain where a formula is defined."""


class ExceptionalParameterError(HomoclinicError, ValueError):
    """A normal-form denominator (nearly) vanishes."""

    def __init__(self, quantity: str, value: float, k: int | None = None, l: int | None = None):
        self.quantity = quantity
        self.value = value
        self.k = k
        self.l = l
        where = f" at (k, l) = ({k}, {l})" if k is not None else ""
        super().__init__(f"Exceptional parameter: |{quantity}| = {value:.3e}{where}")


class SingularTransformError(HomoclinicError, ValueError):
    """A Darboux-type transformation has a vanishing denominator."""


class DegenerateEigenbasisError(HomoclinicError, ValueError):
    """The two Floquet eigenfunctions are linearly dependent."""


class ConvergenceError(HomoclinicError, RuntimeError):
    """An iteration failed to converge."""

    def __init__(self, message: str, history: list | None = None):
        self.history = history or []
        super().__init__(message)


class QuadratureError(ConvergenceError):
    """Quadrature refinement did not settle."""

    def __init__(self, message: str, table: dict | None = None):
        self.table = table or {}
        super().__init__(message)


class AccuracyError(HomoclinicError, RuntimeError):
    """Step-halving comparison exceeded tolerance."""


class ResolutionError(HomoclinicError, RuntimeError):
    """Spectral tail grew beyond the resolvable range."""
