"""
Typed errors raised by the solvers, simulators and the command line.
"""

from typing import Any, Dict, Optional, Tuple

EXIT_NUMERIC_FAILURE = 1
EXIT_CONFIG_ERROR = 2


class BrwLabError(Exception):
    """Base exception for every failure the laboratory reports."""

    def __init__(self, message: str, exit_code: int = EXIT_NUMERIC_FAILURE):
        self.message = message
        self.exit_code = exit_code
        super().__init__(message)


class ConfigError(BrwLabError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message: str):
        super().__init__(message, exit_code=EXIT_CONFIG_ERROR)


class DomainViolationError(BrwLabError):
    """Evaluation of kappa or its conjugate outside the domain."""

    def __init__(
        self, message: str, t: Optional[float] = None, value: Optional[float] = None
    ):
        self.t = t
        self.value = value
        super().__init__(message)


class AiryOverflowError(BrwLabError):
    """Bi(x) exceeds the floating-point range."""

    def __init__(self, x: float):
        self.x = x
        super().__init__(f"Bi({x!r}) overflows the floating-point range")


class BracketError(BrwLabError):
    """A root bracket could not be established within the extension limit."""

    def __init__(
        self,
        message: str,
        last_bracket: Tuple[float, float],
        extensions: int = 0,
    ):
        self.last_bracket = last_bracket
        self.extensions = extensions
        super().__init__(message)


class RootNotFoundError(BrwLabError):
    """A defining equation has no root in the admissible range."""


class ConvergenceError(BrwLabError):
    """Iteration limit reached; carries best-so-far residuals."""

    def __init__(
        self,
        message: str,
        residuals: Optional[Dict[str, float]] = None,
        best: Any = None,
    ):
        self.residuals = residuals or {}
        self.best = best
        super().__init__(message)


class InfeasibleEnvironmentError(BrwLabError):
    """The environment violates supercriticality or admits no feasible path."""


class CaseMismatchError(BrwLabError):
    """The requested closed-form case does not match the shape of theta-bar."""


class MissingDerivativeError(BrwLabError):
    """An operation needs a derivative that the field does not carry."""


class PreconditionError(BrwLabError):
    """Inputs violate a documented precondition."""


class StepSizeCollapseError(BrwLabError):
    """The ODE integrator could not make progress."""

    def __init__(self, message: str, last_time: float):
        self.last_time = last_time
        super().__init__(message)


class PdeConvergenceError(BrwLabError):
    """The log-norm slope did not settle within the transient window."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, float]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class PopulationCapError(BrwLabError):
    """A full-tree trial exceeded the population cap."""


class WeightOverflowError(BrwLabError):
    """A log weight became non-finite."""


class ZeroSurvivorError(BrwLabError):
    """Every particle batch was killed by the path constraints."""


class SamplingUnsupportedError(BrwLabError):
    """The environment does not describe a samplable point process."""


class VerificationError(BrwLabError):
    """One or more acceptance checks failed."""
