"""Exception hierarchy shared by every pm2lat module.

The CLI maps these onto process exit codes: data/validation problems
(loading, merging, stale caches) exit 2, prediction problems (nothing to
predict with) exit 3, I/O problems exit 4.
"""


class Pm2latError(Exception):
    """Base class for all pm2lat errors."""


# --- data / validation errors (CLI exit 2) ---------------------------------

class DataError(Pm2latError):
    """Base for dataset parsing and validation failures."""


class ParseError(DataError):
    """Input is not syntactically valid (malformed JSON, truncated file)."""


class SchemaError(DataError):
    """Input parses but a field is missing or has the wrong type.

    ``path`` is a JSON-pointer-style locator of the offending field.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(DataError):
    """A structural invariant is violated (unsorted samples, dup ids, ...)."""


class DeviceMismatch(DataError):
    """Two datasets for different devices were combined."""


class ConflictError(DataError):
    """Merging datasets found the same kernel with different measurements."""


class StaleCache(DataError):
    """A cache store's fingerprints do not match the current inputs."""


class CacheFormatError(DataError):
    """A cache store file is corrupt or has an unsupported version."""


# --- prediction errors (CLI exit 3) -----------------------------------------

class PredictionError(Pm2latError):
    """Base for failures to produce a prediction."""


class NoConfigAvailable(PredictionError):
    """No recorded kernel configuration for the requested operation."""


class InvalidTile(PredictionError):
    """A compute-kernel key is missing a usable tile configuration."""


class CurveMismatch(PredictionError):
    """The throughput curve does not belong to the requested kernel."""


class UnknownFamily(PredictionError):
    """No predictor is registered for this kernel family."""


class UnknownKernel(PredictionError):
    """The synthetic device has no planted curve for this kernel."""


class UnresolvedLayer(PredictionError):
    """A model layer could not be mapped to a curve or fitted model."""


class UnresolvedPoint(PredictionError):
    """A grid point could not be resolved during cache precomputation."""


class MissingEntry(PredictionError):
    """A cache lookup hit a point that was never precomputed."""


class ZeroMeasured(PredictionError):
    """Relative error is undefined for a non-positive measurement."""


class InsufficientData(PredictionError):
    """Too few records to fit a model."""


class SingularSystem(PredictionError):
    """A fit could not be computed from degenerate samples."""


class PoleInRange(PredictionError):
    """A rational fit's denominator changes sign inside the sample range."""


class EmptyInput(PredictionError):
    """An operation that needs at least one record received none."""


class DegenerateDataWarning(UserWarning):
    """Fit input looks suspicious (e.g. constant latency with varying features)."""
