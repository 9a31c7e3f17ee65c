"""
Exception Hierarchy for meanjump

Every error raised on purpose by the library derives from MeanJumpError, so
callers (the CLI in particular) can tell a modelling problem from a bug.

Author: meanjump Team
Purpose: Structured errors that carry enough context to reproduce a failure
"""


class MeanJumpError(Exception):
    """
    Base exception class for the library.

    Subclasses add structured fields so reports can show a witness
    (time, particle, offending value) instead of a bare message.
    """
    pass


class ConfigError(MeanJumpError):
    """Raised for unknown model ids, bad selectors and invalid run parameters."""
    pass


class MeasureDomainError(MeanJumpError):
    """
    Raised when a measure operation is outside its domain: empty clouds,
    non-positive weights, weights that do not sum to one, grid mismatches.
    """
    pass


class NoiseDomainError(MeanJumpError):
    """Raised when a noise bundle cannot be built (Λ ≤ 0, grid not starting at 0)."""
    pass


class SimulationError(MeanJumpError):
    """
    Raised when a trajectory leaves the finite reals or breaks the
    bounded-increment check.
    """
    def __init__(self, message, time=None, particle=None, values=None):
        self.time = time
        self.particle = particle
        self.values = dict(values or {})
        details = []
        if time is not None:
            details.append(f"t={time:.6g}")
        if particle is not None:
            details.append(f"particle={particle}")
        for key, value in self.values.items():
            details.append(f"{key}={value!r}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class PicardError(MeanJumpError):
    """Raised when the Picard scheme must abort (moment saturation, bad inputs)."""
    def __init__(self, message, window=None, iteration=None, time=None):
        self.window = window
        self.iteration = iteration
        self.time = time
        super().__init__(message)


class ExperimentError(MeanJumpError):
    """Raised when an experiment refuses to run, e.g. on a non-converged flow."""
    def __init__(self, message, non_convergence=False):
        self.non_convergence = non_convergence
        super().__init__(message)


class OutputError(MeanJumpError):
    """Raised when results cannot be written; wraps the underlying OSError."""
    pass
