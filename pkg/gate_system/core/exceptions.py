"""
Error hierarchy for the gate design toolkit.

Every failure that can reach the command line maps onto one of three kinds,
each with its own exit status:

- ``config``     (exit 2): malformed input, violated invariants, bad arguments
- ``infeasible`` (exit 3): the request is well-formed but has no solution
- ``numerical``  (exit 4): a computation failed to converge or lost accuracy
"""
from typing import List, Optional, Sequence


class GateSystemError(Exception):
    """Base class for all toolkit errors."""

    kind: str = "error"
    exit_code: int = 1

    def one_line(self) -> str:
        """Machine-parsable single-line reason."""
        message = " ".join(str(self).split())
        return f"kind={self.kind} reason={message}"


class InputValidationError(GateSystemError, ValueError):
    """Input failed validation before any computation started."""

    kind = "config"
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InfeasibleError(GateSystemError):
    """The request has no admissible solution."""

    kind = "infeasible"
    exit_code = 3


class CalibrationError(InfeasibleError):
    """Rotation angle is zero or has the wrong sign for the requested target."""


class AmplitudeLimitError(InfeasibleError):
    """Calibrated amplitude would exceed the configured maximum."""

    def __init__(self, required_amplitude: float, max_amplitude: float):
        self.required_amplitude = required_amplitude
        self.max_amplitude = max_amplitude
        super().__init__(
            f"required amplitude {required_amplitude:.6e} rad/s exceeds "
            f"max_amplitude {max_amplitude:.6e} rad/s"
        )


class NegativeAmplitudeError(InfeasibleError):
    """Linear solve for squared amplitude factors returned negative entries."""

    def __init__(self, beta_squared: Sequence[float]):
        self.beta_squared: List[float] = [float(b) for b in beta_squared]
        negative = [i for i, b in enumerate(self.beta_squared) if b < 0]
        listing = ", ".join(f"beta2[{i}]={b:.6e}" for i, b in enumerate(self.beta_squared))
        super().__init__(
            f"negative squared amplitude factor at index {negative} ({listing}); "
            "seed pulses must have opposite-sign weighted angle gradients"
        )


class PreconditionError(InfeasibleError):
    """A-robust construction was handed seeds that do not satisfy its preconditions."""


class NumericalError(GateSystemError, ArithmeticError):
    """A numerical procedure failed."""

    kind = "numerical"
    exit_code = 4


class ConvergenceError(NumericalError):
    """Iterative solver stopped without meeting its tolerance."""


class SingularSystemError(NumericalError):
    """Linear system is singular or too ill-conditioned to trust."""

    def __init__(self, message: str, condition_number: float = float("inf")):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3e})")


class TruncationError(NumericalError):
    """Fock-space truncation is too small for the simulated motion."""

    def __init__(self, mode: int, population: float, limit: float):
        self.mode = mode
        self.population = population
        super().__init__(
            f"mode {mode}: top Fock level population {population:.3e} exceeds {limit:.1e}; "
            "increase n_max"
        )


class StructuralError(NumericalError):
    """Ion crystal is not a stable linear chain."""

    def __init__(self, mode: int, eigenvalue: float):
        self.mode = mode
        self.eigenvalue = eigenvalue
        super().__init__(
            f"radial mode {mode} is unstable (Hessian eigenvalue {eigenvalue:.6e}); "
            "zig-zag transition, raise the radial frequency"
        )
