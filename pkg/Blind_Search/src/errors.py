"""
Exceptions for Blind Search
Distribution problems are ValueErrors, numerical limits are RuntimeErrors,
so callers that only know the builtin types still catch them.
"""


class BlindSearchError(Exception):
    """Base class for all package errors."""


class DistributionError(BlindSearchError, ValueError):
    """A step distribution or a request about one is invalid."""


class ZeroMassError(DistributionError):
    """All raw weights are zero."""


class NegativeWeightError(DistributionError):
    """A weight is negative or not finite."""


class LengthMismatchError(DistributionError):
    """Number of weights does not match n."""


class WeightSumError(DistributionError):
    """Weights read from a file do not sum to 1 within tolerance."""


class DistributionOverflowError(DistributionError):
    """Adversarial normalization would underflow mu(1)."""


class UnknownStrategyError(DistributionError):
    """A dist spec or strategy name could not be parsed."""


class OutOfRangeError(DistributionError):
    """A state or CDF argument lies outside [0, n]."""


class Mu1ZeroError(DistributionError):
    """The operation needs mu(1) > 0."""


class InvalidConstantError(DistributionError):
    """Strict mode: drop constant C is below the computed maximum drop."""


class NumericalError(BlindSearchError, RuntimeError):
    """A computation could not be carried out within its limits."""


class CapExceededError(NumericalError):
    """n is above the configured cap for an O(n^2) computation."""


class OracleTooLargeError(NumericalError):
    """Closed-form enumeration requested beyond its hard limit."""


class AllCensoredError(NumericalError):
    """Every simulated run hit max_steps before absorption."""
