"""Renders a crash case into the two textual documents fed to the agents:
the Crash Scene Description and the EDR Data Analysis Report.

Both encoders are pure and byte-deterministic; golden-file tests pin the
exact output for the shipped fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    CANONICAL_PLANES,
    CrashCase,
    CrashEvent,
    EdrRecord,
    LabelKind,
    Plane,
    require_valid,
)

# channel -> (table heading, value column header), in render order
CHANNEL_TABLES = (
    ("speed_kmh", "Velocities", "Speed(kmph)"),
    ("brake_on", "Brake Status", "Brake"),
    ("accel_pedal_pct", "Accelerator Pedal", "Pedal(%)"),
    ("steering_deg", "Steering Wheel Angles", "Angle(deg)"),
)

GROUNDING_NOTES = (
    (
        "Subject-Centric Perspective",
        "each vehicle block describes the crash from that vehicle's own frame; "
        "attributes under a VEHNO apply to that vehicle only.",
    ),
    (
        "Event Trigger Focus",
        "each event line names the contact that initiates the collision; "
        "lines are listed in EVENTNO order.",
    ),
    (
        "Independent Multi-Vehicle Records",
        "vehicle and environment blocks are recorded independently per vehicle "
        "and may repeat shared roadway attributes.",
    ),
    (
        "Cross-Referencable Reconstruction",
        "VEHNO and EVENTNO identifiers are stable across all sections and across "
        "the companion EDR report, so statements can be cross-referenced exactly.",
    ),
)


@dataclass(frozen=True)
class SceneDescriptionDoc:
    text: str


@dataclass(frozen=True)
class EdrReportDoc:
    text: str


def _fmt(x: float) -> str:
    return format(x + 0.0, ".2f")  # + 0.0 normalizes -0.0


def _plane_sort_key(plane: Plane):
    if plane.kind in CANONICAL_PLANES:
        return (0, CANONICAL_PLANES.index(plane.kind), "")
    return (1, 0, str(plane))


def _speed_limit(value: float) -> str:
    text = format(value, "g")
    return f"{text} km/h"


def encode_scene_description(case: CrashCase) -> SceneDescriptionDoc:
    require_valid(case)
    lines: list[str] = []
    lines.append("# Crash Scene Description")
    lines.append("")
    lines.append(f"Total number of vehicles involved in this Crash: {len(case.vehicles)}")
    lines.append("")
    lines.append("## Vehicle Information")
    lines.append("")
    for v in sorted(case.vehicles, key=lambda v: v.vehno):
        lines.append(f"## VEHNO={v.vehno}")
        lines.append(f"  ### Class of Vehicle: {v.vehicle_class}")
        planes = ", ".join(str(p) for p in sorted(v.damage_planes, key=_plane_sort_key))
        lines.append(f"  ### Damage Plane: {planes}")
    lines.append("")
    lines.append("## Crash Event Sequences Description")
    lines.append("")
    for ev in case.events:
        lines.append(f"EVENTNO{ev.eventno}: {ev.render()}")
    lines.append("")
    lines.append("## Environment Information")
    lines.append("")
    vehnos_with_env = sorted({env.vehno for env in case.environments})
    for vehno in vehnos_with_env:
        lines.append(f"## Environment for VEHNO={vehno}:")
        records = [env for env in case.environments if env.vehno == vehno]
        for ordinal, env in enumerate(records, start=1):
            lines.append(f"  ### Crash event record {ordinal} in this vehicle:")
            lines.append(f"  SPEEDLIMIT: {_speed_limit(env.speed_limit_kmh)}")
            lines.append(f"  Trafficway Flow: {env.trafficway_flow}")
            lines.append(f"  Travel Lanes: {env.travel_lanes}")
            for key, value in env.extra:
                lines.append(f"  {key}: {value}")
    lines.append("")
    lines.append("## Notes (Semantic Grounding Instructions)")
    lines.append("")
    for i, (title, body) in enumerate(GROUNDING_NOTES, start=1):
        lines.append(f"{i}. {title}: {body}")
    return SceneDescriptionDoc("\n".join(lines) + "\n")


def _event_summary(ev: CrashEvent) -> str:
    return (
        f"V{ev.actor_vehno} {ev.actor_plane} vs V{ev.target_vehno} {ev.target_plane}"
    )


def _record_tables(rec: EdrRecord) -> list[str]:
    lines = [f"  ### EDREVENTNO{rec.edr_event_no} (Prior Event {rec.edr_event_no})"]
    for name, heading, value_col in CHANNEL_TABLES:
        series = rec.channels.get(name)
        if series is None:
            continue
        lines.append(f"    ##### {heading}")
        lines.append(f"    | Time(sec) | {value_col} | Notes |")
        peak_done = False
        peak = max(series.values()) if name == "speed_kmh" else None
        for t, v in series.samples:
            note = ""
            if peak is not None and not peak_done and v == peak:
                note = "Peak speed"
                peak_done = True
            lines.append(f"    | {_fmt(t)} | {_fmt(v)} | {note} |")
    return lines


def encode_edr_report(case: CrashCase) -> EdrReportDoc:
    require_valid(case)
    vehnos = sorted({r.vehno for r in case.edr_records})
    n_veh = len(vehnos)
    n_rec = len(case.edr_records)

    lines: list[str] = []
    lines.append("# EDR Data Analysis Report")
    lines.append("")
    lines.append("## Basic description")
    lines.append("")
    sentence = (
        f"This case (CASEID={case.case_id}) contains EDR data for "
        f"{n_veh} vehicle{'' if n_veh == 1 else 's'}."
    )
    if n_rec:
        record_ref = "this EDR record" if n_rec == 1 else "these EDR records"
        vehicle_ref = "this vehicle" if n_veh == 1 else "each vehicle"
        sentence += (
            f" In {record_ref}, time zero (0 seconds) marks the triggering "
            f"threshold of the recorded event for {vehicle_ref}."
        )
    lines.append(sentence)
    lines.append("")
    lines.append("## EDR Data for this Crash")
    lines.append("")
    for vehno in vehnos:
        lines.append(f"### VEHNO{vehno}")
        for rec in sorted(case.records_for(vehno), key=lambda r: r.edr_event_no):
            lines.extend(_record_tables(rec))
    lines.append("")
    lines.append("## CDC and EDR Event Description (Most crucial from NHSTA investigation report)")
    lines.append("")
    lines.append(
        "This section connects EDR events to the physical collision events "
        "identified in the investigation."
    )
    lines.append("")
    events_by_no = {ev.eventno: ev for ev in case.events}
    for rec in case.edr_records:
        prefix = f"- For VEHNO={rec.vehno}, EDREVENTNO={rec.edr_event_no}"
        if rec.db_label.kind is LabelKind.MAPPED:
            ev = events_by_no[rec.db_label.eventno]
            lines.append(
                f"{prefix}, corresponds to EVENTNO{ev.eventno}: {_event_summary(ev)}"
            )
        elif rec.db_label.kind is LabelKind.NOT_RELATED:
            lines.append(f"{prefix}: Event not related to this crash")
        else:
            lines.append(f"{prefix}: Related, unknown event")
    return EdrReportDoc("\n".join(lines) + "\n")
