"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, tolerance failures with 3, insufficient-sample conditions with 4.
"""


class HiddenMacError(Exception):
    """Base class for package errors."""


class ConfigError(HiddenMacError):
    """Invalid configuration value or unparsable config file."""


class ScenarioError(HiddenMacError):
    """Topology or snapshot violates a structural precondition."""


class SnapshotParseError(ConfigError):
    """Malformed position-snapshot file; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class UnsupportedModeError(ConfigError):
    """PHY mode without a calibrated byte-to-slot mapping."""


class DegenerateChannelError(HiddenMacError):
    """Channel quantities hit a degenerate operating point (synchronization)."""


class ModelInconsistencyError(HiddenMacError):
    """Analytical intermediate left its admissible range (bad eta/tau pairing)."""


class NoIntersectionError(HiddenMacError):
    """Fixed-point residual has no sign change on the search bracket."""

    def __init__(self, message, nearest_tau=None, nearest_residual=None):
        super().__init__(message)
        self.nearest_tau = nearest_tau
        self.nearest_residual = nearest_residual


class InfeasibleLoadError(HiddenMacError):
    """No queue-occupancy probability in [0, 1] reproduces the requested tau."""


class ExtrapolationError(HiddenMacError):
    """Provider queried outside its calibrated access-probability grid."""
