"""Service layer for coordinating components."""
from .kernel_service import KernelService
from .grouping_service import AffinityMode, GroupingConfig, GroupingResult, GroupingService

__all__ = ["KernelService", "AffinityMode", "GroupingConfig", "GroupingResult", "GroupingService"]
