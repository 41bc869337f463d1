"""Exception taxonomy for the toolkit.

Public operations raise these instead of leaking ValueError / KeyError /
OSError from internals, so callers (and the CLI exit-code mapping) can branch
on category: ConfigError for bad inputs under the caller's control, DataError
for bad files or corpora, ToolkitError as the common base.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ToolkitError):
    """Caller-supplied configuration is invalid (hyperparams, presets, thresholds)."""


class DataError(ToolkitError):
    """Input data is missing, malformed, or degenerate."""


# -- data / corpus ----------------------------------------------------------

class ParseError(DataError):
    """A line or file does not conform to its documented format."""

    def __init__(self, message: str, *, path: str | None = None, line_number: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line_number}: " if line_number is not None else f"{path}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line_number = line_number


class IoError(DataError):
    """An underlying file could not be read or written."""


class EmptyCorpusError(DataError):
    """A corpus contains no examples."""


class DegenerateCorpusError(DataError):
    """A corpus cannot support training (fewer than two distinct labels)."""


class FormatError(DataError):
    """A binary or structured file is corrupt, truncated, or has an unknown version."""


class EmptySentenceError(DataError):
    """A sentence that must contain at least one token is empty."""


# -- configuration ----------------------------------------------------------

class InvalidHyperparamsError(ConfigError):
    """Classifier hyperparameters are out of range or inconsistent."""


class UnknownPresetError(ConfigError):
    """A named preset (task or attack) does not exist."""


class InvalidEpsilonError(ConfigError):
    """A similarity threshold is outside (0, 1]."""


class BudgetTooSmallError(ConfigError):
    """A size budget cannot hold even the fixed model header."""


class EmptyEnsembleError(ConfigError):
    """An encoder ensemble was given zero member classifiers."""


class DimensionMismatchError(ConfigError):
    """Ensemble members or vector tables disagree on embedding dimension."""


# -- runtime ----------------------------------------------------------------

class UnknownLabelError(ToolkitError):
    """A gold label is not present in a model's label set."""


class NoAttemptedSentencesError(DataError):
    """Metrics were requested over a run with zero attackable sentences."""


class NoSuccessesError(DataError):
    """An operation requiring at least one successful attack found none."""


class ScoreOutOfRangeError(DataError):
    """An annotation score is outside the 1..4 scale."""

    def __init__(self, message: str, *, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class DuplicateAnnotationError(DataError):
    """The same (pair_id, annotator_id) was scored twice."""


class NoAnnotationsError(DataError):
    """Annotations are required (enough successes exist) but none were supplied."""


class PairIdMismatchError(DataError):
    """An annotation references a pair_id absent from the attack outcomes."""


class DegenerateEmbeddingWarning(UserWarning):
    """An embedding collapsed to the zero vector; similarity is defined as 0."""
