"""Exception types shared across the package.

Everything subclasses ValueError so callers that only know the scikit-learn
conventions can catch validation failures generically.
"""


class DimensionMismatchError(ValueError):
    """Input dimensionality differs from what the model was fitted with."""


class TooFewPointsError(ValueError):
    """Not enough samples to fit the requested model."""


class RankDeficientError(ValueError):
    """Least-squares design matrix does not have full column rank."""


class NonPositiveVarianceError(ValueError):
    """A variance that must be strictly positive is zero or negative."""


class EmptyDatasetError(ValueError):
    """Operation requires at least one data point."""


class NotPositiveDefiniteError(ValueError):
    """Kernel matrix stayed non-positive-definite after jitter escalation."""


class UnfittableResampleError(ValueError):
    """Bootstrap resampling kept producing unfittable member datasets."""


class NonLinearMemberError(ValueError):
    """Acquisition score requires an ensemble of linear members."""


class NegativeGradNormError(ValueError):
    """Supplied squared gradient norm is negative."""


class PerplexityOutOfRangeError(ValueError):
    """Perplexity target is not attainable for the given neighbor row."""


class KExceedsPoolError(ValueError):
    """Top-K truncation requested more neighbors than the pool holds."""


class BudgetExceedsPoolError(ValueError):
    """Selection budget exceeds the number of candidates."""


class EmptyLabelledPoolError(ValueError):
    """Neighborhood construction needs at least two labelled points."""


class LengthMismatchError(ValueError):
    """Paired vectors have different lengths."""


class TooFewPairsError(ValueError):
    """Paired test needs at least two pairs."""


class DataFormatError(ValueError):
    """Dataset file violates the expected CSV schema."""


class InvalidConfigError(ValueError):
    """Simulation configuration is inconsistent or has unknown keys."""
