"""Shipped reference cases and golden documents.

Case 28197 is a four-vehicle chain whose published detail covers only the
head of one vehicle's records; the remainder is clearly synthetic filler so
the case validates end to end. Tests pin only the published values.
"""

from __future__ import annotations

from importlib import resources

from ..ingest import parse_case
from ..model import (
    CH_BRAKE,
    CH_SPEED,
    CH_STEER,
    CHANNEL_UNITS,
    CrashCase,
    CrashEvent,
    EdrRecord,
    EnvironmentRecord,
    EventLabel,
    FirstCrashFinding,
    Plane,
    STRATUM_SIMPLE,
    TimeSeries,
    Vehicle,
)

FIXTURE_IDS = ("28197", "32548")


def fixture_case_28197() -> CrashCase:
    """Four vehicles; V1 front strikes V2 back (event 1), V2 front strikes
    V3 back (event 2). Only V2 carries EDR: record 1 for event 1 with the
    published speed-table head (peak 9.70 km/h at -5.00 s) and steering at
    0.1 s steps, record 2 for event 2 with a disjoint speed band."""
    # published head rows, then filler continuing the decay to the trigger
    e1_speed_values = [9.7, 9.5, 9.4, 9.2]
    while len(e1_speed_values) < 26:
        e1_speed_values.append(round(e1_speed_values[-1] - (0.2 if len(e1_speed_values) % 2 == 0 else 0.1), 1))
    e1_speed = tuple(
        (round(-5.0 + 0.2 * i, 1), v) for i, v in enumerate(e1_speed_values)
    )
    e1_steer = tuple((round(-5.0 + 0.1 * i, 1), -0.9) for i in range(51))
    e1_channels = {
        CH_SPEED: TimeSeries(e1_speed, CHANNEL_UNITS[CH_SPEED]),
        CH_STEER: TimeSeries(e1_steer, CHANNEL_UNITS[CH_STEER]),
    }

    e2_speed = tuple(
        (round(-5.0 + 0.2 * i, 1), round(25.0 - 0.3 * i, 1)) for i in range(26)
    )
    e2_channels = {
        CH_SPEED: TimeSeries(e2_speed, CHANNEL_UNITS[CH_SPEED]),
        CH_BRAKE: TimeSeries(tuple((t, 1.0) for t, _ in e2_speed), CHANNEL_UNITS[CH_BRAKE]),
    }

    return CrashCase(
        case_id="28197",
        vehicles=(
            Vehicle(1, "Pickup Truck", frozenset({Plane("Front")})),
            Vehicle(2, "Medium Passenger Car", frozenset({Plane("Front"), Plane("Back")})),
            Vehicle(3, "Medium Passenger Car", frozenset({Plane("Back")})),
            Vehicle(4, "Large Passenger Car", frozenset({Plane("Front")})),
        ),
        events=(
            CrashEvent(1, actor_vehno=1, actor_plane=Plane("Front"),
                       target_vehno=2, target_plane=Plane("Back")),
            CrashEvent(2, actor_vehno=2, actor_plane=Plane("Front"),
                       target_vehno=3, target_plane=Plane("Back")),
        ),
        environments=tuple(
            EnvironmentRecord(vehno, 72.0, "Not physically divided (two-way traffic)", "Two")
            for vehno in (1, 2, 3, 4)
        ),
        edr_records=(
            EdrRecord(2, 1, e1_channels, EventLabel.mapped(1)),
            EdrRecord(2, 2, e2_channels, EventLabel.mapped(2)),
        ),
        ground_truth=FirstCrashFinding(
            striking_vehno=1, struck_vehno=2, striking_edr=None, struck_edr=1
        ),
        stratum=STRATUM_SIMPLE,
    )


def fixture_case(case_id: str) -> CrashCase:
    """Loads a shipped fixture document by case id."""
    data = (resources.files("crashforge") / "fixtures" / f"{case_id}.case.json").read_bytes()
    return parse_case(data)


def golden_text(name: str) -> str:
    """Returns a pinned golden document, e.g. '28197.scene.md'."""
    return (resources.files("crashforge") / "goldens" / name).read_text(encoding="utf-8")
