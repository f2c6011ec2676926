"""Exception and warning types raised across the package."""

from __future__ import annotations


class SqueezeError(Exception):
    """Base class for all package errors."""

    code = "error"


class InvalidDimension(SqueezeError, ValueError):
    code = "invalid-dimension"


class LevelMismatch(SqueezeError, ValueError):
    code = "level-mismatch"


class IncompatibleSpaces(SqueezeError, ValueError):
    code = "incompatible-spaces"


class DegenerateDetuning(SqueezeError, ValueError):
    code = "degenerate-detuning"


class NeedsLargerSpace(SqueezeError):
    code = "needs-larger-space"


class InvalidVariance(SqueezeError, ValueError):
    code = "invalid-variance"


class NumericalFailure(SqueezeError):
    """Raised when an integration cannot be trusted."""

    code = "numerical-failure"


class StepSizeTooLarge(NumericalFailure):
    code = "step-size-too-large"


class IntegratorFailure(NumericalFailure):
    code = "integrator-failure"


class DimensionTooLarge(NumericalFailure):
    code = "dimension-too-large"


class TruncationLeak(NumericalFailure):
    """Raised instead of :class:`TruncationWarning` in strict mode."""

    code = "truncation-leak"


class ConfigError(SqueezeError, ValueError):
    code = "config-invalid"


class TruncationWarning(UserWarning):
    """Population in the top Fock levels exceeds the guard threshold."""
