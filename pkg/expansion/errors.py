"""
Error kinds raised by the toolkit.

Each kind carries the process exit code the CLI maps it to, so callers can
catch ToolkitError once and exit with ``err.exit_code``.
"""


class ToolkitError(Exception):
    """Base class for every toolkit failure."""

    kind: str = "toolkit-error"
    exit_code: int = 1

    def describe(self) -> str:
        """Single-line, machine-parsable form: ``<kind>: <message>``."""
        message = " ".join(str(self).split())
        return f"{self.kind}: {message}"


class InvalidArgument(ToolkitError):
    kind = "invalid-argument"
    exit_code = 1


class InadmissibleConfiguration(ToolkitError):
    """Hard-core configuration with overlapping spheres."""

    kind = "inadmissible-configuration"
    exit_code = 1


class ResourceLimit(ToolkitError):
    """Requested size is above a configured enumeration or truncation cap."""

    kind = "resource-limit"
    exit_code = 3


class PrecisionFailure(ToolkitError):
    kind = "precision-failure"
    exit_code = 2


class NotInDomain(ToolkitError):
    """
    The convergence conditions fail at this parameter point.

    Not a failure of the run: the CLI records the skip and exits 0.
    """

    kind = "not-in-domain"
    exit_code = 0

    def __init__(self, message: str, margins: dict | None = None):
        super().__init__(message)
        self.margins = dict(margins or {})
