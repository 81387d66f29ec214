"""Exception types shared across the package."""

from __future__ import annotations


class OdometerError(Exception):
    """Base class for all package errors."""


class SymbolOutOfRange(OdometerError, ValueError):
    pass


class DepthExceeded(OdometerError, ValueError):
    """A cylinder or path reaches beyond the materialized schedule depth."""


class InvalidPath(OdometerError, ValueError):
    pass


class BufferOverflow(OdometerError):
    """A carry would leave the working buffer; retry with a larger L."""


class BudgetExceeded(OdometerError):
    pass


class NotRelated(OdometerError, ValueError):
    pass


class NoFeasibleScale(OdometerError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class WindowMassTooSmall(OdometerError):
    def __init__(self, message: str, best_mass=None, best_rho=None):
        super().__init__(message)
        self.best_mass = best_mass
        self.best_rho = best_rho


class HypothesisViolated(OdometerError):
    def __init__(self, message: str, lhs=None, rhs=None):
        super().__init__(message)
        self.lhs = lhs
        self.rhs = rhs


class CaseSplitFailed(OdometerError):
    def __init__(self, message: str, measures: dict | None = None):
        super().__init__(message)
        self.measures = measures or {}


class NotFound(OdometerError):
    def __init__(self, message: str, best_density=None):
        super().__init__(message)
        self.best_density = best_density


class ScaleTooSmall(OdometerError):
    pass


class ConfigError(OdometerError, ValueError):
    pass
