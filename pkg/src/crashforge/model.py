"""Domain model for crash cases.

Immutable types shared by every other module: vehicles, collision events,
environments, EDR records, and the four-output finding for the first
collision. Validation is collected into a report rather than raised, so
partially exported data can still be inspected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

CANONICAL_PLANES = ("Front", "Back", "Left", "Right", "Top", "Undercarriage")

# Canonical EDR channel names and their value units.
CH_SPEED = "speed_kmh"
CH_BRAKE = "brake_on"
CH_ACCEL = "accel_pedal_pct"
CH_STEER = "steering_deg"
CHANNEL_UNITS = {
    CH_SPEED: "km/h",
    CH_BRAKE: "bool",
    CH_ACCEL: "%",
    CH_STEER: "deg",
}


@dataclass(frozen=True)
class Plane:
    """Contact/damage plane: one of the six canonical planes or Other(text)."""

    kind: str
    text: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in CANONICAL_PLANES and self.kind != "Other":
            raise ValueError(f"unknown plane kind: {self.kind!r}")
        if (self.kind == "Other") != (self.text is not None):
            raise ValueError("Other planes carry text, canonical planes do not")

    def __str__(self) -> str:
        return self.text if self.kind == "Other" else self.kind

    @classmethod
    def parse(cls, raw: str) -> "Plane":
        stripped = raw.strip()
        for name in CANONICAL_PLANES:
            if stripped.lower() == name.lower():
                return cls(name)
        return cls("Other", stripped)


class LabelKind(Enum):
    MAPPED = "mapped"
    NOT_RELATED = "not_related"
    RELATED_UNKNOWN = "related_unknown"


@dataclass(frozen=True)
class EventLabel:
    """Database link from an EDR record to a crash event (possibly wrong)."""

    kind: LabelKind
    eventno: Optional[int] = None

    def __post_init__(self) -> None:
        if (self.kind is LabelKind.MAPPED) != (self.eventno is not None):
            raise ValueError("eventno is set exactly for mapped labels")

    @classmethod
    def mapped(cls, eventno: int) -> "EventLabel":
        return cls(LabelKind.MAPPED, eventno)

    @classmethod
    def not_related(cls) -> "EventLabel":
        return cls(LabelKind.NOT_RELATED)

    @classmethod
    def related_unknown(cls) -> "EventLabel":
        return cls(LabelKind.RELATED_UNKNOWN)


@dataclass(frozen=True)
class TimeSeries:
    """Trigger-relative samples (t_sec, value); time zero is the trigger."""

    samples: tuple[tuple[float, float], ...]
    value_unit: str = ""

    def times(self) -> tuple[float, ...]:
        return tuple(t for t, _ in self.samples)

    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.samples)

    @classmethod
    def of(cls, pairs: Iterable[Iterable[float]], value_unit: str = "") -> "TimeSeries":
        return cls(tuple((float(t), float(v)) for t, v in pairs), value_unit)


@dataclass(frozen=True)
class Vehicle:
    vehno: int
    vehicle_class: str
    damage_planes: frozenset[Plane] = frozenset()


@dataclass(frozen=True)
class CrashEvent:
    """One physical contact, rendered as
    "Contact between Vehicle X's <plane> and Vehicle Y's <plane>"."""

    eventno: int
    actor_vehno: int
    actor_plane: Plane
    target_vehno: int
    target_plane: Plane

    def render(self) -> str:
        return (
            f"Contact between Vehicle {self.actor_vehno}'s "
            f"{str(self.actor_plane).lower()} and Vehicle {self.target_vehno}'s "
            f"{str(self.target_plane).lower()}"
        )


@dataclass(frozen=True)
class EnvironmentRecord:
    vehno: int
    speed_limit_kmh: float
    trafficway_flow: str
    travel_lanes: str
    extra: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class EdrRecord:
    """One EDREVENTNO: per-channel pre-crash time series plus its database
    label. channels maps canonical channel names to TimeSeries."""

    vehno: int
    edr_event_no: int
    channels: Mapping[str, TimeSeries]
    db_label: EventLabel

    @property
    def key(self) -> tuple[int, int]:
        return (self.vehno, self.edr_event_no)


NO_RECORD = None  # an absent EDR selection is data, not an error


@dataclass(frozen=True)
class FirstCrashFinding:
    """The four outputs for the first collision plus a rationale trace.

    striking_edr / struck_edr are EDREVENTNOs, or None for "no record"."""

    striking_vehno: int
    struck_vehno: int
    striking_edr: Optional[int]
    struck_edr: Optional[int]
    rationale: tuple[str, ...] = ()

    def same_outputs(self, other: "FirstCrashFinding") -> bool:
        """Equality over the four scored outputs, ignoring rationale."""
        return (
            self.striking_vehno == other.striking_vehno
            and self.struck_vehno == other.struck_vehno
            and self.striking_edr == other.striking_edr
            and self.struck_edr == other.struck_edr
        )


@dataclass(frozen=True)
class SceneDiagramRef:
    """Lazy reference to a scene diagram image next to the case file."""

    path: str
    media_type: str

    def load(self, base_dir: str = ".") -> bytes:
        import pathlib

        return (pathlib.Path(base_dir) / self.path).read_bytes()


STRATUM_SIMPLE = "simple"
STRATUM_COMPLICATED = "complicated"


@dataclass(frozen=True)
class CrashCase:
    case_id: str
    vehicles: tuple[Vehicle, ...]
    events: tuple[CrashEvent, ...]
    environments: tuple[EnvironmentRecord, ...] = ()
    edr_records: tuple[EdrRecord, ...] = ()
    scene_diagram: Optional[SceneDiagramRef] = None
    ground_truth: Optional[FirstCrashFinding] = None
    stratum: Optional[str] = None

    def vehicle(self, vehno: int) -> Vehicle:
        for v in self.vehicles:
            if v.vehno == vehno:
                return v
        raise KeyError(f"no vehicle with VEHNO={vehno}")

    def records_for(self, vehno: int) -> tuple[EdrRecord, ...]:
        return tuple(r for r in self.edr_records if r.vehno == vehno)


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.rule}: {self.message}"


def validate_case(case: CrashCase) -> list[Violation]:
    """Checks every model invariant, collecting all violations.

    Pure and idempotent; an empty list means the case is well formed."""
    out: list[Violation] = []

    vehnos = [v.vehno for v in case.vehicles]
    if len(set(vehnos)) != len(vehnos):
        out.append(Violation("/vehicles", "unique-vehno", "duplicate VEHNO values"))
    if any(n <= 0 for n in vehnos):
        out.append(Violation("/vehicles", "positive-vehno", "VEHNO must be positive"))
    if sorted(set(vehnos)) != list(range(1, len(set(vehnos)) + 1)):
        out.append(
            Violation("/vehicles", "contiguous-vehno", "VEHNOs not contiguous from 1")
        )
    known_vehnos = set(vehnos)

    eventnos = [e.eventno for e in case.events]
    if eventnos != sorted(eventnos) or len(set(eventnos)) != len(eventnos):
        out.append(Violation("/events", "ordered-eventno", "events not in EVENTNO order"))
    if sorted(set(eventnos)) != list(range(1, len(set(eventnos)) + 1)):
        out.append(
            Violation("/events", "contiguous-eventno", "events not contiguous from 1")
        )
    known_eventnos = set(eventnos)

    in_event: set[int] = set()
    for i, ev in enumerate(case.events):
        path = f"/events/{i}"
        if ev.actor_vehno == ev.target_vehno:
            out.append(
                Violation(path, "distinct-vehicles", "event references one vehicle twice")
            )
        for which, vehno in (("actor", ev.actor_vehno), ("target", ev.target_vehno)):
            if vehno not in known_vehnos:
                out.append(
                    Violation(
                        f"{path}/{which}_vehno",
                        "existing-vehicle",
                        f"VEHNO={vehno} does not exist",
                    )
                )
            else:
                in_event.add(vehno)

    for i, v in enumerate(case.vehicles):
        if v.vehno in in_event and not v.damage_planes:
            out.append(
                Violation(
                    f"/vehicles/{i}/damage_planes",
                    "nonempty-damage",
                    f"VEHNO={v.vehno} appears in an event but has no damage planes",
                )
            )

    for i, env in enumerate(case.environments):
        if env.vehno not in known_vehnos:
            out.append(
                Violation(
                    f"/environments/{i}/vehno",
                    "existing-vehicle",
                    f"VEHNO={env.vehno} does not exist",
                )
            )
        if env.speed_limit_kmh < 0:
            out.append(
                Violation(
                    f"/environments/{i}/speed_limit_kmh",
                    "non-negative",
                    "speed limit must be >= 0",
                )
            )

    seen_edr_keys: set[tuple[int, int]] = set()
    for i, rec in enumerate(case.edr_records):
        path = f"/edr_records/{i}"
        if rec.vehno not in known_vehnos:
            out.append(
                Violation(f"{path}/vehno", "existing-vehicle", f"VEHNO={rec.vehno} does not exist")
            )
        if rec.edr_event_no <= 0:
            out.append(
                Violation(f"{path}/edr_event_no", "positive-edreventno", "EDREVENTNO must be positive")
            )
        if rec.key in seen_edr_keys:
            out.append(
                Violation(f"{path}/edr_event_no", "unique-edreventno",
                          f"duplicate EDREVENTNO={rec.edr_event_no} for VEHNO={rec.vehno}")
            )
        seen_edr_keys.add(rec.key)
        if rec.db_label.kind is LabelKind.MAPPED and rec.db_label.eventno not in known_eventnos:
            out.append(
                Violation(
                    f"{path}/db_label",
                    "dangling-event-mapping",
                    f"label references EVENTNO={rec.db_label.eventno} which does not exist",
                )
            )
        for name, series in rec.channels.items():
            cpath = f"{path}/channels/{name}"
            if name not in CHANNEL_UNITS:
                out.append(Violation(cpath, "canonical-channel", f"unknown channel {name!r}"))
            if not series.samples:
                out.append(Violation(cpath, "nonempty-series", "time series has no samples"))
                continue
            times = series.times()
            if any(b <= a for a, b in zip(times, times[1:])):
                out.append(Violation(cpath, "increasing-time", "sample times not strictly increasing"))
            if any(t > 0 for t in times):
                out.append(Violation(cpath, "pre-crash-time", "pre-crash sample time after trigger"))
            values = series.values()
            if name == CH_SPEED and any(v < 0 for v in values):
                out.append(Violation(cpath, "speed-range", "speed must be >= 0"))
            if name == CH_BRAKE and any(v not in (0.0, 1.0) for v in values):
                out.append(Violation(cpath, "brake-range", "brake_on values must be 0 or 1"))
            if name == CH_ACCEL and any(not 0 <= v <= 100 for v in values):
                out.append(Violation(cpath, "accel-range", "accel_pedal_pct must be in [0, 100]"))

    gt = case.ground_truth
    if gt is not None:
        if gt.striking_vehno == gt.struck_vehno:
            out.append(
                Violation("/ground_truth", "distinct-roles", "striking and struck VEHNO are equal")
            )
        if case.events:
            first = case.events[0]
            participants = {first.actor_vehno, first.target_vehno}
            for fieldname, vehno in (
                ("striking_vehno", gt.striking_vehno),
                ("struck_vehno", gt.struck_vehno),
            ):
                if vehno not in participants:
                    out.append(
                        Violation(
                            f"/ground_truth/{fieldname}",
                            "first-event-participant",
                            f"VEHNO={vehno} does not participate in EVENTNO 1",
                        )
                    )

    if case.stratum is not None and case.stratum not in (STRATUM_SIMPLE, STRATUM_COMPLICATED):
        out.append(Violation("/stratum", "known-stratum", f"unknown stratum tag {case.stratum!r}"))

    return out


class DomainError(Exception):
    """Base class for typed pipeline errors."""


class ValidationError(DomainError):
    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


def require_valid(case: CrashCase) -> None:
    violations = validate_case(case)
    if violations:
        raise ValidationError(violations)
