"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError -> 2,
DependencyError -> 3, NumericError -> 4.
"""


class ManipSynthError(Exception):
    """Base class for all toolkit errors."""


class InvalidRotationError(ManipSynthError):
    """Rotation input is not orthonormal / degenerate beyond tolerance."""


class LimitViolationError(ManipSynthError):
    """Articulation angle outside the geometry's joint limits."""


class InsufficientBasisError(ManipSynthError):
    """Too few basis points for an unambiguous encoding."""


class TooShortError(ManipSynthError):
    """Sequence has fewer frames than the operation requires."""


class DimensionError(ManipSynthError):
    """Feature dimension incompatible with the requested operation."""


class DatasetError(ManipSynthError):
    """Training dataset is empty or has inconsistent shapes."""


class ScheduleError(ManipSynthError):
    """Inference step count incompatible with the training schedule."""


class ModelStateError(ManipSynthError):
    """Model is untrained or otherwise not ready for the requested call."""


class ConditioningError(ManipSynthError):
    """Conditioning inputs disagree with each other (e.g. frame counts)."""


class ScenarioError(ManipSynthError):
    """Scenario is infeasible (e.g. reach target beyond arm length)."""


class ConfigError(ManipSynthError):
    """Invalid configuration or malformed input file."""


class ParseError(ConfigError):
    """Schema violation in an input file; message carries the path."""


class EmptyInputError(ManipSynthError):
    """An input list/history is empty where content is required."""


class DependencyError(ManipSynthError):
    """A required upstream artifact is missing."""


class NumericError(ManipSynthError):
    """Non-finite values encountered; carries the failing step index."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
