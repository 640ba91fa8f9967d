"""Exception hierarchy shared by all modules."""


class ColombeauError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ColombeauError, ValueError):
    """Invalid parameters, grids, boxes or mismatched inputs."""


class GridLookupError(ColombeauError, LookupError):
    """A scale parameter that is not a value of the epsilon grid."""


class CapabilityError(ColombeauError):
    """Requested derivative order or dimension exceeds what is supported."""


class InvariantViolation(ColombeauError):
    """A declared invariant (e.g. a uniform bound) fails on the grid."""


class InsufficientDataError(ColombeauError):
    """Too few tail points for an asymptotic fit."""


class PreconditionError(ColombeauError):
    """An operation was called on inputs that fail its precondition."""


class BlowUpError(ColombeauError):
    """A trajectory left the safety box."""

    def __init__(self, eps, t, message=None):
        self.eps = eps
        self.t = t
        super().__init__(message or f"trajectory left the safety box at eps={eps!r}, t={t!r}")


class ConstructionInsufficientError(ColombeauError):
    """The slice representative does not certify against the original net."""


class ExpressionError(ColombeauError):
    """Parse or vocabulary error in an expression string."""

    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} (at column {position})"
        super().__init__(message)


class ScenarioError(ColombeauError):
    """Invalid scenario file."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class TaskExecutionError(ColombeauError):
    """A scenario task failed while running; names the task and eps if known."""

    def __init__(self, task, cause, eps=None):
        self.task = task
        self.cause = cause
        self.eps = eps
        where = f" at eps={eps!r}" if eps is not None else ""
        super().__init__(f"task {task} failed{where}: {cause}")
