class ConfigurationError(ValueError):
    """Raised for invalid scenario or component parameters."""


class ShapeError(ValueError):
    """Raised when beamforming vectors and a channel matrix do not line up."""


class BlockedSkeletonError(RuntimeError):
    """Restricted beam search was asked to search an empty path skeleton."""


class SkeletonUnavailable(RuntimeError):
    """No UE accepted the skeleton-finder request for a grid cell."""


class InfeasibleThresholdError(RuntimeError):
    """Every candidate skeleton-distance threshold violates the query budget."""
