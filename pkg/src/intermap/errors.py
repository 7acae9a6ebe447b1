"""Exception taxonomy shared across the package.

Every failure mode is loud and typed: callers can distinguish bad input
(DomainError, RangeError, ConfigError) from numerical trouble
(ConvergenceError, PrecisionError, RootNotFoundError, ...) without string
matching.
"""


class IntermapError(Exception):
    """Base class for all package errors."""


class DomainError(IntermapError):
    """Input outside the mathematical domain (non-finite, wrong sign, ...)."""


class RangeError(IntermapError):
    """Query outside the range covered by a sampled object."""


class RootNotFoundError(IntermapError):
    """A bracketing root search found no sign change."""


class ConvergenceError(IntermapError):
    """An iterative solver exhausted its budget.

    Carries the last residual in ``residual`` when available.
    """

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class PrecisionError(IntermapError):
    """A certified-error computation could not reach the requested tolerance."""


class NotApplicableError(IntermapError):
    """The orbit/geometry preconditions of a diagnostic were not met."""


class EscapeNotObservedError(IntermapError):
    """No tracked candidate ball left the target region within the step cap."""


class BracketFailureError(IntermapError):
    """Local-product (bracket) leaves failed to intersect within the leaf length."""


class HolonomyError(IntermapError):
    """Holonomy construction failed (leaves not transverse to the unstable field)."""


class ResolutionError(IntermapError):
    """Grid too coarse for the requested smoothing radius."""


class DegenerateOrbitError(IntermapError):
    """A Monte Carlo orbit was started exactly at the fixed point."""


class InsufficientSignalError(IntermapError):
    """Too few statistically significant lags for a decay fit."""


class ConfigError(IntermapError):
    """Malformed run configuration (unknown key, bad value, unreadable file)."""
