"""Joint path-skeleton beamforming and learning-based handover for mobile mmWave links."""

from mmwave_handover.errors import (
    ConfigurationError,
    InfeasibleThresholdError,
    ShapeError,
    SkeletonUnavailable,
    BlockedSkeletonError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "InfeasibleThresholdError",
    "ShapeError",
    "SkeletonUnavailable",
    "BlockedSkeletonError",
    "__version__",
]
