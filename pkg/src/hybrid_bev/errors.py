"""Exception hierarchy shared by all modules."""


class HybridBEVError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(HybridBEVError):
    """A required column, channel or feature is missing or mismatched."""


class DataError(HybridBEVError):
    """Input values violate an invariant (e.g. non-monotone time)."""


class DegenerateTripError(DataError):
    """A trip is too short (or too small) for the requested operation."""


class ImputationError(DataError):
    """A channel cannot be imputed because it has no observed values."""


class ChannelMissingError(SchemaError):
    """A derived quantity needs a channel the trip does not carry."""


class AlignmentError(DataError):
    """Two channels that must be aligned have different lengths."""


class PowerLimitError(HybridBEVError):
    """Requested battery power exceeds what the pack can deliver."""

    def __init__(self, message: str, sample: int | None = None):
        super().__init__(message)
        self.sample = sample


class IdentifiabilityError(HybridBEVError):
    """Variance components cannot be separated (e.g. a single group)."""


class UndefinedICCError(HybridBEVError):
    pass


class BasisError(HybridBEVError):
    pass


class ConvergenceError(HybridBEVError):
    """An iterative fit stopped at its iteration cap.

    The last iterate is kept on ``last_iterate`` so callers can inspect it.
    """

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegreesOfFreedomError(HybridBEVError):
    pass


class UndefinedAPEError(HybridBEVError):
    """Terminal energy is too close to zero for a relative error."""
