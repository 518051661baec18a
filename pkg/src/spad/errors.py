"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: config/data problems are exit 2,
everything else raised from a running pipeline is exit 3.
"""


class SpadError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SpadError):
    """Invalid or inconsistent configuration."""


class DataError(SpadError):
    """Problems with input data."""


class ParseError(DataError):
    """Malformed CoNLL-U input; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidityError(DataError):
    """Structurally invalid sentence, tree, or tag sequence."""


class ShapeError(SpadError):
    """Tensor shape mismatch."""


class GraphError(SpadError):
    """Backward pass requested on a value not connected to recorded computation."""


class DistributionError(SpadError):
    """Probability vector is negative or does not sum to one."""


class NumericError(SpadError):
    """Non-finite value where a finite one is required."""


class CheckpointError(SpadError):
    """Unreadable, corrupt, or wrong-kind model checkpoint."""


class KindMismatchError(CheckpointError):
    """Checkpoint kind does not match the requested operation."""


class UndefinedRateError(SpadError):
    """A success rate was requested over an empty (fully filtered) record set."""
