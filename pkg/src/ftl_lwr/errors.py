"""Exception hierarchy.

Configuration problems (bad input, violated preconditions) derive from
:class:`ConfigError`; failures of a numerical procedure derive from
:class:`NumericalError`. The CLI maps the two families to distinct exit codes.
"""


class FtlLwrError(Exception):
    """Base class for all package errors."""


class ConfigError(FtlLwrError, ValueError):
    """Invalid input or violated precondition."""


class NumericalError(FtlLwrError, RuntimeError):
    """A numerical procedure failed to deliver a trustworthy result."""


class DomainError(ConfigError):
    """Density argument outside [0, 1]."""


class ModelError(ConfigError):
    """Velocity model is malformed or produces non-finite samples."""


class AdmissibilityError(ConfigError):
    """Particle configuration violates ordering or the minimum-gap condition."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class NormalizationError(ConfigError):
    """A probability density or measure does not carry unit mass."""


class CoverageError(ConfigError):
    """A grid does not cover the support of the function sampled onto it."""


class UnsupportedFluxError(ConfigError):
    """Exact Riemann solution requested for a non-concave flux."""


class StateError(NumericalError):
    """ODE state left the admissible set (non-positive gap or density)."""


class IntegrationError(NumericalError):
    """Time integration failed (Newton breakdown, step underflow, invariant loss)."""


class ConsistencyError(NumericalError):
    """Two independent evaluations of the same quantity disagree."""
