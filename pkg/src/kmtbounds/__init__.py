"""Computable KMT-type coupling thresholds for bounded i.i.d. sums."""

__version__ = "0.1.0"

from .special import DomainError, QuadratureError  # noqa: E402
from .wasserstein import BoundedModel, BoundSearchConfig  # noqa: E402
from .schedule import (  # noqa: E402
    ThresholdSchedule,
    build_bridge_schedule,
    build_sum_schedule,
    find_nu0_star,
)

__all__ = [
    "BoundSearchConfig",
    "BoundedModel",
    "DomainError",
    "QuadratureError",
    "ThresholdSchedule",
    "build_bridge_schedule",
    "build_sum_schedule",
    "find_nu0_star",
]
