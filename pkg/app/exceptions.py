"""
Exception hierarchy for the pump scheduler.

Every error raised by the package derives from SchedulerError so the CLI
can map it onto an exit code and attach the pipeline stage it came from.
"""


class SchedulerError(Exception):
    """Base class for all scheduler errors."""

    exit_code = 1

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def with_stage(self, stage):
        """Tag the error with the pipeline stage, keeping an existing tag."""
        if self.stage is None:
            self.stage = stage
        return self

    def __str__(self):
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


# Network model

class ParseError(SchedulerError):
    """The network or schedule file is not readable JSON."""

    exit_code = 2


class ValidationError(SchedulerError):
    """An input violates a model invariant."""

    exit_code = 2

    def __init__(self, message, field_path=None, stage=None):
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message, stage=stage)
        self.field_path = field_path


class TopologyError(ValidationError):
    """Disconnected node or element referencing an unknown node."""


# Hydraulic simulator

class HydraulicError(SchedulerError):
    """Base class for hydraulic solve failures."""

    def __init__(self, message, timestep=None, stage=None):
        super().__init__(message, stage=stage)
        self.timestep = timestep

    def at_timestep(self, timestep):
        """Attach the (1-based) EPS step at which the solve failed."""
        if self.timestep is None:
            self.timestep = timestep
            self.message = f"step {timestep}: {self.message}"
        return self


class NonConvergence(HydraulicError):
    """Newton iterations exhausted before the residual tolerance was met."""


class SingularJacobian(HydraulicError):
    """Newton system could not be solved even after regularization."""


class InfeasibleHydraulics(HydraulicError):
    """The hydraulic state is undefined, e.g. demand without a supply path."""


class DomainError(HydraulicError):
    """Pump flow outside the domain of its power curve."""


class NoPositiveRoot(HydraulicError):
    """The pump head curve never crosses zero head at positive flow."""


# Linearizer

class LinearizationError(SchedulerError):
    """Base class for linearization failures."""


class InvalidBreakpoints(LinearizationError):
    """Pipe breakpoints are not strictly increasing and positive."""


class DegenerateGeometry(LinearizationError):
    """Pump characteristic vertices project onto a collinear triangle."""


# MILP builder

class AuditError(SchedulerError):
    """Constructed row counts disagree with the closed-form census."""

    def __init__(self, message, family=None, stage=None):
        super().__init__(message, stage=stage)
        self.family = family


# MILP solver

class SolverError(SchedulerError):
    """Base class for solver failures."""

    exit_code = 3


class NumericalFailure(SolverError):
    """The LP engine broke down numerically."""


class Infeasible(SolverError):
    """No integer-feasible point exists."""


class TooManyBinaries(SolverError):
    """The enumeration oracle refuses problems above its binary budget."""


class FractionalBinary(SolverError):
    """A binary column of a reported solution is not integral."""


class ScheduleError(SolverError):
    """A solution cannot be translated into a simulator schedule."""
