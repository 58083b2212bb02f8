"""Exception types shared across the package."""


class DronehoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DronehoError, ValueError):
    """Invalid parameters, layouts or config files."""


class SampleParseError(DronehoError, ValueError):
    """A malformed row in a tabular input file."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(DronehoError, ValueError):
    """Well-formed input whose values violate a domain constraint."""


class OutOfExtentError(DronehoError, IndexError):
    """A position outside the half-open service area."""


class DegenerateRouteError(DronehoError, ValueError):
    """Route endpoints coincide."""


class TerminalStateError(DronehoError, IndexError):
    """No successor waypoint exists."""
