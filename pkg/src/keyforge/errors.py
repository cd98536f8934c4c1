"""Exception hierarchy shared across the toolkit.

Every error raised on a documented failure path derives from KeyforgeError so
the CLI can map any module failure to a single-line message and exit code 1.
"""


class KeyforgeError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(KeyforgeError):
    """Input file header does not match the expected column layout."""


class ParseError(KeyforgeError):
    """A data cell could not be parsed; message carries the row number."""


class EmptyDatasetError(KeyforgeError):
    """A file or operation produced zero records."""


class ConfigError(KeyforgeError):
    """A configuration value is outside its documented domain."""


class InsufficientDataError(KeyforgeError):
    """An estimator needs more records per subject than were provided."""


class FitError(KeyforgeError):
    """A learner could not be fitted on the given training data."""


class TrainingError(KeyforgeError):
    """Iterative training diverged; message carries the epoch/round index."""


class EvaluationError(KeyforgeError):
    """Evaluation inputs are inconsistent (roster mismatch, empty score set)."""


class CalibrationError(KeyforgeError):
    """Perplexity calibration failed to converge; message carries the row."""


class ModelFormatError(KeyforgeError):
    """A serialized model file has the wrong version or structure."""
