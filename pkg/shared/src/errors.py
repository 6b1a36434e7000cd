"""Exception types shared across the toolkit."""
from __future__ import annotations


class DiffusionError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(DiffusionError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class SingularityError(DiffusionError, ArithmeticError):
    """sigma**gamma reached 1, where m vanishes and beta blows up."""


class RangeError(DiffusionError, ValueError):
    """A bisection target is not reachable by the sigma curve."""


class DimensionError(DiffusionError, ValueError):
    pass


class UnknownLabelError(DiffusionError, KeyError):
    pass


class StepSizeError(DiffusionError, RuntimeError):
    """Adaptive integration shrank its step below the underflow floor."""


class RadicandError(DiffusionError, ArithmeticError):
    pass


class SampleSizeError(DiffusionError, ValueError):
    pass


class ConfigError(DiffusionError, ValueError):
    pass


class NonFiniteError(DiffusionError, ValueError):
    pass


class TensorFormatError(DiffusionError, ValueError):
    pass
