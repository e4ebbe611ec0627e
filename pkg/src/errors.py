"""
Error hierarchy for the gaze pipeline
Every error carries the process exit code the CLI should use
"""
from typing import Optional


class GazeError(Exception):
    """Base class for all data errors (exit code 2)"""

    exit_code = 2


class ConfigError(GazeError):
    """Invalid configuration or command-line usage"""

    exit_code = 1


class PipelineError(GazeError):
    """The pipeline could not produce a usable result"""

    exit_code = 3


class FormatError(GazeError):
    """Malformed input text or file"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class OrderError(FormatError):
    """Frame indices are not strictly increasing"""


class RangeError(GazeError):
    """A value lies outside its permitted range"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyInput(GazeError):
    """An operation received no usable items"""


class InvalidInput(GazeError):
    """Arguments violate an operation's preconditions"""


class TaxonomyError(GazeError):
    """A label name is not part of the class taxonomy"""


class EmptyLabels(FormatError):
    """An annotation row carries no labels"""


class CropTooLarge(GazeError):
    """Requested crop does not fit inside the frame"""


class InvalidSize(GazeError):
    """Requested output size is not positive"""


class ShapeError(GazeError):
    """Array or image dimensions disagree"""


class IoError(GazeError, OSError):
    """A file could not be read or written"""


class EmbeddingLookupError(GazeError, LookupError):
    """No precomputed embedding exists for a frame"""


class KindError(GazeError):
    """Score vectors of different kinds were combined"""


class EmptyCache(GazeError):
    """A few-shot cache holds no entries"""


class DivergenceError(GazeError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


class UndefinedMetric(GazeError):
    """A metric has no defined value for the given records"""


class AlignmentError(GazeError):
    """Two timelines cover different frame sets"""


class InsufficientData(GazeError):
    """Too few labelled frames for the requested statistic"""


class SpecError(GazeError):
    """A synthetic-session description is inconsistent"""


class BenchAborted(GazeError):
    """A benchmarked stage raised; carries the original error"""

    def __init__(self, pipeline: str, cause: BaseException):
        self.pipeline = pipeline
        self.cause = cause
        super().__init__(f"{pipeline}: {type(cause).__name__}: {cause}")
