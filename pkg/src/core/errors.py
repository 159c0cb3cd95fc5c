"""
Error kinds surfaced by the toolkit.

Every error carries a machine-readable ``kind`` and the exit code the CLI
uses for it.
"""


class ProphetLabError(Exception):
    """Base class for all toolkit errors."""

    kind = "error"
    exit_code = 1


class DomainError(ProphetLabError, ValueError):
    """An argument lies outside the domain of an operation."""

    kind = "domain_error"
    exit_code = 3


class ParseError(ProphetLabError, ValueError):
    """An instance document could not be parsed or validated."""

    kind = "parse_error"
    exit_code = 4


class CapacityError(ProphetLabError):
    """A desk-scale limit (state space, grid size, enumeration) was exceeded."""

    kind = "capacity_error"
    exit_code = 5


class PreconditionError(ProphetLabError):
    """The instance violates a structural hypothesis of the requested rule."""

    kind = "precondition_error"
    exit_code = 6


class ResolutionError(ProphetLabError):
    """The tabulated curve is too coarse for the requested parameter."""

    kind = "resolution_error"
    exit_code = 7


class InternalError(ProphetLabError, RuntimeError):
    """A numerical invariant failed; this indicates a bug."""

    kind = "internal_error"
    exit_code = 70


class OutputError(ProphetLabError, OSError):
    """A report or curve could not be written or read back."""

    kind = "io_error"
    exit_code = 74
