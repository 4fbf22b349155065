"""Crash-case pipeline: canonical case model, narrative encoding, EDR
time-series analysis, rule-based first-collision inference, two-phase agent
orchestration, and an evaluation harness."""

from .model import (
    CrashCase,
    CrashEvent,
    EdrRecord,
    EnvironmentRecord,
    EventLabel,
    FirstCrashFinding,
    Plane,
    TimeSeries,
    Vehicle,
    validate_case,
)

__version__ = "0.1.0"

__all__ = [
    "CrashCase",
    "CrashEvent",
    "EdrRecord",
    "EnvironmentRecord",
    "EventLabel",
    "FirstCrashFinding",
    "Plane",
    "TimeSeries",
    "Vehicle",
    "validate_case",
    "__version__",
]
