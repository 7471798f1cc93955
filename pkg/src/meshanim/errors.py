"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors exit 2
and numeric failures exit 3.
"""


class MeshAnimError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(MeshAnimError):
    """Bad command line arguments or configuration keys/values."""


class DataError(MeshAnimError):
    """Invalid, inconsistent or missing input data."""


class ParseError(DataError):
    """Malformed file content. Carries the offending line number when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class TopologyError(DataError):
    """Operands bound to different or invalid mesh topologies."""


class NumericError(MeshAnimError):
    """Non-finite values or violated numeric contracts."""
