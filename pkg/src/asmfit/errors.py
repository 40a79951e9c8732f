"""Exception types raised by the toolkit."""


class AsmFitError(Exception):
    """Base class for all toolkit errors."""


class ShapeArityError(AsmFitError):
    """Landmark or parameter count does not match what an operation expects."""


class DegenerateShapeError(AsmFitError):
    """Shape has no usable geometry (zero centroid size, non-finite coordinates)."""


class ImageSizeError(AsmFitError):
    """Image is too small for the requested operation."""


class ThresholdError(AsmFitError):
    """Invalid hysteresis threshold pair."""


class InsufficientDataError(AsmFitError):
    """Too few samples to estimate the requested statistics."""


class DimensionMismatchError(AsmFitError):
    """Vector or matrix dimensions disagree."""


class ClassBalanceError(AsmFitError):
    """Classifier training set lacks one of the two classes."""


class PointsParseError(AsmFitError):
    """Malformed landmark points file."""


class PgmDecodeError(AsmFitError):
    """Malformed or unsupported PGM image payload."""


class BundleVersionError(AsmFitError):
    """Model bundle was written with an unsupported format version."""


class BundleCorruptionError(AsmFitError):
    """Model bundle failed an integrity check."""


class SplitError(AsmFitError):
    """Invalid train/test partition request."""


class BoxError(AsmFitError):
    """Degenerate initialization box."""


class InitializationError(AsmFitError):
    """Initial shape unusable for fitting (e.g. entirely outside the image)."""


class DatasetError(AsmFitError):
    """Problem assembling a training dataset (pairing, bounds, scheme mismatch)."""
