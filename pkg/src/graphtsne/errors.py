"""Exception types shared across the package."""


class GraphTSNEError(Exception):
    """Base class for all package-specific errors."""


class MalformedInputError(GraphTSNEError):
    """An input file violates its documented format.

    The message names the offending file and, where possible, the line
    or row number.
    """


class EmptyAffinityError(GraphTSNEError):
    """Every row of a distance matrix is degenerate (no finite entries)."""


class TrainingError(GraphTSNEError):
    """Training cannot proceed; the message names the cause."""
