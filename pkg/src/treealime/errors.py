"""Exception types shared across the package."""


class TreealimeError(Exception):
    """Base class for every error raised by this package."""


class MissingColumn(TreealimeError):
    """A schema column is absent from a CSV header."""


class UnknownCategory(TreealimeError):
    """A categorical cell holds a token outside the schema's categories."""


class NonBinaryLabel(TreealimeError):
    """A label cell is not 0 or 1."""


class MalformedCell(TreealimeError):
    """A cell cannot be parsed for its declared feature kind."""


class EmptyMatrix(TreealimeError):
    """An operation received a matrix with no rows."""


class DimensionMismatch(TreealimeError):
    """Array shapes are incompatible with the fitted object."""


class DegenerateSplit(TreealimeError):
    """A train/test split would leave one side empty."""


class NonFiniteInput(TreealimeError):
    """An input vector contains NaN or infinity."""


class NonFiniteLoss(TreealimeError):
    """Training diverged to a NaN or infinite loss."""


class FoldTooSmall(TreealimeError):
    """A cross-validation fold has too few samples."""


class InvalidVariance(TreealimeError):
    """Sampling statistics contain a negative variance."""


class NegativeDistance(TreealimeError):
    """A kernel received a negative or non-finite distance."""


class InvalidArgument(TreealimeError):
    """An argument violates a documented precondition."""


class TooFewRuns(TreealimeError):
    """A stability score needs at least two runs."""


class GridExceedsPool(TreealimeError):
    """A sweep requests more neighbors than the sampling pool holds."""


class ConfigError(TreealimeError):
    """A run configuration is invalid or references missing files."""


class ArtifactConflict(TreealimeError):
    """An output file already exists with different content."""


class SingleClassNeighborhoodWarning(UserWarning):
    """All neighborhood labels agree; the surrogate is a constant model."""
