"""Temporal core: trigger alignment, overlap clustering, and pre-crash
dynamics classification over EDR time series.

The inner shift-scan runs on a compiled Cython kernel when available and on
a numpy fallback otherwise; `kernel_name()` reports which one is active.
"""

from .analysis import (
    KERNEL_NAME,
    AlignmentConfig,
    AlignmentResult,
    ChannelMissing,
    ConfigError,
    Dynamics,
    DynamicsProfile,
    OverlapCluster,
    align_records,
    cluster_overlaps,
    profile_dynamics,
    scan_shifts,
)


def kernel_name() -> str:
    return KERNEL_NAME


__all__ = [
    "AlignmentConfig",
    "AlignmentResult",
    "ChannelMissing",
    "ConfigError",
    "Dynamics",
    "DynamicsProfile",
    "OverlapCluster",
    "align_records",
    "cluster_overlaps",
    "profile_dynamics",
    "kernel_name",
    "scan_shifts",
]
