"""Seeded synthetic rear-end corpora with known ground truth.

Each generated case is a lead-vehicle-deceleration chain: the lead vehicle
decelerates, the follower approaches at steady speed and brakes late, and
EVENTNO 1 is the follower-front / lead-back contact. Complicating
phenomena mirror what real exports exhibit: duplicate overlapping records
for one event, labels pointing at the wrong event, unrelated records, and
vehicles with no EDR at all.

Per-case RNG streams are split from the corpus seed with SHA-256, so a
case's content depends only on (seed, index), not on its neighbours.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .model import (
    CH_BRAKE,
    CH_SPEED,
    CHANNEL_UNITS,
    CrashCase,
    CrashEvent,
    DomainError,
    EdrRecord,
    EnvironmentRecord,
    EventLabel,
    FirstCrashFinding,
    Plane,
    STRATUM_COMPLICATED,
    STRATUM_SIMPLE,
    TimeSeries,
    Vehicle,
    validate_case,
)

MAX_REGEN_ATTEMPTS = 20

VEHICLE_CLASSES = (
    "Small Passenger Car",
    "Medium Passenger Car",
    "Large Passenger Car",
    "Pickup Truck",
    "Sport Utility Vehicle",
    "Minivan",
)
SPEED_LIMITS = (40.0, 48.0, 56.0, 64.0, 72.0, 80.0)
TRAFFICWAY_FLOWS = (
    "Not physically divided (two-way traffic)",
    "Divided traffic way - median strip without positive barrier",
    "One-way traffic",
)
TRAVEL_LANES = ("Two", "Three", "Four")


class SpecError(DomainError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int = 0
    n_cases: int = 1
    chain_length_range: tuple[int, int] = (2, 4)
    p_missing_edr: float = 0.0
    p_extra_overlapping_record: float = 0.0
    p_mislabel: float = 0.0
    p_unrelated_record: float = 0.0
    lead_speed_range_kmh: tuple[float, float] = (35.0, 70.0)
    follower_speed_margin_kmh: tuple[float, float] = (12.0, 25.0)
    sample_periods_sec: tuple[float, ...] = (0.1, 0.2)
    window_sec: float = 5.0

    def validate(self) -> None:
        for name in ("p_missing_edr", "p_extra_overlapping_record", "p_mislabel", "p_unrelated_record"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise SpecError(f"{name} must be in [0, 1], got {p}")
        if self.n_cases < 0:
            raise SpecError("n_cases must be >= 0")
        lo, hi = self.chain_length_range
        if not 2 <= lo <= hi:
            raise SpecError(f"chain_length_range must satisfy 2 <= lo <= hi, got {lo}..{hi}")
        if self.window_sec <= 0 or not self.sample_periods_sec:
            raise SpecError("window and sample periods must be positive")


@dataclass
class GeneratedCorpus:
    cases: list[CrashCase]
    regenerations: int = 0

    def __iter__(self):
        return iter(self.cases)

    def __len__(self):
        return len(self.cases)


def _case_rng(seed: int, index: int, attempt: int) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{index}:{attempt}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _grid(window: float, period: float) -> list[float]:
    n = int(round(window / period))
    return [round(i * period - window, 1) for i in range(n + 1)]


def _decel_record(rng: random.Random, v0: float, spec: GeneratorSpec) -> dict[str, TimeSeries]:
    """Lead-vehicle profile: steady, then brake and decelerate to near stop."""
    v_end = round(rng.uniform(0.0, 8.0), 1)
    t_brake = round(rng.uniform(-4.0, -2.5), 1)
    t_stop = round(rng.uniform(-0.6, -0.2), 1)
    period = rng.choice(spec.sample_periods_sec)
    times = _grid(spec.window_sec, period)
    speed = []
    brake = []
    for t in times:
        if t <= t_brake:
            v = v0
        elif t >= t_stop:
            v = v_end
        else:
            v = v0 + (v_end - v0) * (t - t_brake) / (t_stop - t_brake)
        speed.append((t, round(max(v, 0.0), 1)))
        brake.append((t, 1.0 if t >= t_brake else 0.0))
    return {
        CH_SPEED: TimeSeries(tuple(speed), CHANNEL_UNITS[CH_SPEED]),
        CH_BRAKE: TimeSeries(tuple(brake), CHANNEL_UNITS[CH_BRAKE]),
    }


def _late_brake_record(rng: random.Random, s0: float, spec: GeneratorSpec) -> dict[str, TimeSeries]:
    """Follower profile: steady approach speed, sudden brake just before impact."""
    t_brake = round(rng.uniform(-0.8, -0.1), 1)
    period = rng.choice(spec.sample_periods_sec)
    times = _grid(spec.window_sec, period)
    speed = []
    brake = []
    for t in times:
        v = s0 + round(rng.uniform(-0.3, 0.3), 1)
        if t >= t_brake:
            v = s0 - 6.0 * (t - t_brake)  # mild pre-impact slowdown
        speed.append((t, round(max(v, 0.0), 1)))
        brake.append((t, 1.0 if t >= t_brake else 0.0))
    return {
        CH_SPEED: TimeSeries(tuple(speed), CHANNEL_UNITS[CH_SPEED]),
        CH_BRAKE: TimeSeries(tuple(brake), CHANNEL_UNITS[CH_BRAKE]),
    }


def _steady_record(rng: random.Random, s0: float, spec: GeneratorSpec) -> dict[str, TimeSeries]:
    period = rng.choice(spec.sample_periods_sec)
    times = _grid(spec.window_sec, period)
    speed = tuple((t, round(s0 + rng.uniform(-0.2, 0.2), 1)) for t in times)
    brake = tuple((t, 0.0) for t in times)
    return {
        CH_SPEED: TimeSeries(speed, CHANNEL_UNITS[CH_SPEED]),
        CH_BRAKE: TimeSeries(brake, CHANNEL_UNITS[CH_BRAKE]),
    }


def _truncated_shift(channels: dict[str, TimeSeries], delay: float) -> dict[str, TimeSeries]:
    """Re-times a record as if its trigger fired `delay` seconds later; only
    samples recorded before the later trigger survive."""
    out = {}
    for name, series in channels.items():
        samples = tuple(
            (round(t - delay, 1), v) for t, v in series.samples if round(t - delay, 1) >= -5.0
        )
        out[name] = TimeSeries(samples, series.value_unit)
    return out


def _build_case(rng: random.Random, index: int, spec: GeneratorSpec) -> CrashCase:
    inject_mislabel = rng.random() < spec.p_mislabel
    inject_extra = inject_mislabel or rng.random() < spec.p_extra_overlapping_record
    inject_missing = rng.random() < spec.p_missing_edr
    inject_unrelated = rng.random() < spec.p_unrelated_record

    lo, hi = spec.chain_length_range
    if inject_mislabel:
        # a wrong-event label needs a second event to point at
        lo = max(lo, 3)
        hi = max(hi, 3)
    length = rng.randint(lo, hi)

    vehicles = []
    for vehno in range(1, length + 1):
        if vehno == 1:
            planes = frozenset({Plane("Back")})
        elif vehno == length:
            planes = frozenset({Plane("Front")})
        else:
            planes = frozenset({Plane("Front"), Plane("Back")})
        vehicles.append(Vehicle(vehno, rng.choice(VEHICLE_CLASSES), planes))

    events = tuple(
        CrashEvent(k, actor_vehno=k + 1, actor_plane=Plane("Front"),
                   target_vehno=k, target_plane=Plane("Back"))
        for k in range(1, length)
    )

    limit = rng.choice(SPEED_LIMITS)
    flow = rng.choice(TRAFFICWAY_FLOWS)
    lanes = rng.choice(TRAVEL_LANES)
    environments = tuple(
        EnvironmentRecord(v.vehno, limit, flow, lanes, extra=(("Road Surface", "Dry"),))
        for v in vehicles
    )

    # speeds: each striking vehicle travels faster than the vehicle it hits,
    # keeping same-vehicle record speed bands disjoint so overlap clustering
    # only fires where it is injected deliberately
    lead_v0 = round(rng.uniform(*spec.lead_speed_range_kmh), 1)
    steady_speeds = {1: lead_v0}
    for vehno in range(2, length + 1):
        steady_speeds[vehno] = round(
            steady_speeds[vehno - 1] + rng.uniform(*spec.follower_speed_margin_kmh), 1
        )

    # one base record per vehicle, for the lowest event it participates in
    records: list[EdrRecord] = []
    next_no = {v.vehno: 1 for v in vehicles}

    def add_record(vehno: int, channels: dict[str, TimeSeries], label: EventLabel) -> int:
        no = next_no[vehno]
        next_no[vehno] = no + 1
        records.append(EdrRecord(vehno, no, channels, label))
        return no

    struck_record_no = add_record(1, _decel_record(rng, lead_v0, spec), EventLabel.mapped(1))
    striking_record_no = add_record(2, _late_brake_record(rng, steady_speeds[2], spec), EventLabel.mapped(1))
    for vehno in range(3, length + 1):
        # this vehicle first appears as the striker of event vehno-1
        add_record(vehno, _late_brake_record(rng, steady_speeds[vehno], spec),
                   EventLabel.mapped(vehno - 1))

    truth_striking_edr: Optional[int] = striking_record_no
    truth_struck_edr: Optional[int] = struck_record_no

    if inject_extra:
        base = records[0]  # the struck lead's true first-event record
        delay = round(rng.uniform(0.5, 2.0), 1)
        extra_channels = _truncated_shift(dict(base.channels), delay)
        extra_no = add_record(1, extra_channels, EventLabel.mapped(1))
        if inject_mislabel:
            # the database points the true record at the later event; only the
            # truncated duplicate keeps the first-event label
            records[0] = replace(base, db_label=EventLabel.mapped(2))
        del extra_no

    if inject_unrelated:
        vehno = rng.randint(1, length)
        label = EventLabel.not_related() if rng.random() < 0.5 else EventLabel.related_unknown()
        add_record(vehno, _steady_record(rng, round(rng.uniform(15.0, 25.0), 1), spec), label)

    if inject_missing:
        vehno = rng.randint(1, length)
        records = [r for r in records if r.vehno != vehno]
        if vehno == 1:
            truth_struck_edr = None
            inject_extra = False  # the duplicate went down with the vehicle's records
        elif vehno == 2:
            truth_striking_edr = None

    truth = FirstCrashFinding(
        striking_vehno=2,
        struck_vehno=1,
        striking_edr=truth_striking_edr,
        struck_edr=truth_struck_edr,
    )
    stratum = STRATUM_COMPLICATED if inject_extra else STRATUM_SIMPLE
    return CrashCase(
        case_id=f"synth-{index:05d}",
        vehicles=tuple(vehicles),
        events=events,
        environments=environments,
        edr_records=tuple(records),
        ground_truth=truth,
        stratum=stratum,
    )


def generate(spec: GeneratorSpec) -> GeneratedCorpus:
    """Generates spec.n_cases cases with ground truth; fully determined by
    spec. Cases that fail validation or on which the rule engine cannot
    reach a finding are rejected and redrawn (counted in regenerations)."""
    from .infer import infer_first_crash  # deferred: infer depends on this module's output shape

    spec.validate()
    cases: list[CrashCase] = []
    regenerations = 0
    for index in range(spec.n_cases):
        for attempt in range(MAX_REGEN_ATTEMPTS):
            case = _build_case(_case_rng(spec.seed, index, attempt), index, spec)
            if not validate_case(case):
                try:
                    infer_first_crash(case)
                    break
                except DomainError:
                    pass
            regenerations += 1
        else:
            raise SpecError(f"case {index}: no decidable generation in {MAX_REGEN_ATTEMPTS} attempts")
        cases.append(case)
    return GeneratedCorpus(cases, regenerations)


def replay_case_32548() -> CrashCase:
    """Hand-authored three-vehicle fixture: rear-end first event followed by
    a frontal second impact, six overlapping records on the struck vehicle,
    and one database label pointing at the wrong event.

    The struck vehicle's record 5 decelerates 37 -> 2 km/h with early brake
    onset; records 1-4 carry identical series on the second event's (later)
    trigger clock; record 6 is unrelated. The striking vehicle holds steady
    near 64 km/h and brakes only at impact.
    """

    def master_speed(t_phys: float) -> float:
        # event-1 trigger clock: steady 37, braking from -3.2 s, 2 km/h by -0.4 s
        if t_phys <= -3.2:
            return 37.0
        if t_phys >= -0.4:
            return 2.0
        return round(37.0 + (2.0 - 37.0) * (t_phys + 3.2) / 2.8, 1)

    def master_brake(t_phys: float) -> float:
        return 1.0 if t_phys >= -3.2 else 0.0

    def series_on(trigger_offset: float, t_from: float, t_to: float, step: float = 0.2):
        times = []
        t = t_from
        while t <= t_to + 1e-9:
            times.append(round(t, 1))
            t += step
        speed = tuple((t, master_speed(round(t + trigger_offset, 1))) for t in times)
        brake = tuple((t, master_brake(round(t + trigger_offset, 1))) for t in times)
        return {
            CH_SPEED: TimeSeries(speed, CHANNEL_UNITS[CH_SPEED]),
            CH_BRAKE: TimeSeries(brake, CHANNEL_UNITS[CH_BRAKE]),
        }

    # V2's second-event records trigger 1.2 s after the first event
    second_event_channels = series_on(1.2, -5.0, 0.0)
    e5_channels = series_on(0.0, -5.0, 0.0)

    v3_speed = tuple((round(-5.0 + 0.2 * i, 1), 64.0) for i in range(26))
    v3_brake = tuple((t, 1.0 if t >= 0.0 else 0.0) for t, _ in v3_speed)
    v3_channels = {
        CH_SPEED: TimeSeries(v3_speed, CHANNEL_UNITS[CH_SPEED]),
        CH_BRAKE: TimeSeries(v3_brake, CHANNEL_UNITS[CH_BRAKE]),
    }

    e6_speed = tuple((round(-5.0 + 0.2 * i, 1), 30.0) for i in range(26))
    e6_channels = {
        CH_SPEED: TimeSeries(e6_speed, CHANNEL_UNITS[CH_SPEED]),
        CH_BRAKE: TimeSeries(tuple((t, 0.0) for t, _ in e6_speed), CHANNEL_UNITS[CH_BRAKE]),
    }

    records = (
        EdrRecord(2, 1, dict(second_event_channels), EventLabel.mapped(2)),
        EdrRecord(2, 2, dict(second_event_channels), EventLabel.mapped(1)),
        EdrRecord(2, 3, dict(second_event_channels), EventLabel.mapped(2)),
        EdrRecord(2, 4, dict(second_event_channels), EventLabel.mapped(2)),
        EdrRecord(2, 5, e5_channels, EventLabel.mapped(1)),
        EdrRecord(2, 6, e6_channels, EventLabel.not_related()),
        EdrRecord(3, 1, v3_channels, EventLabel.mapped(1)),
    )

    environments = tuple(
        EnvironmentRecord(vehno, 56.0, "Not physically divided (two-way traffic)", "Two")
        for vehno in (1, 2, 3)
    )

    return CrashCase(
        case_id="32548",
        vehicles=(
            Vehicle(1, "Small Passenger Car", frozenset({Plane("Front")})),
            Vehicle(2, "Small Passenger Car", frozenset({Plane("Front"), Plane("Back")})),
            Vehicle(3, "Medium Passenger Car", frozenset({Plane("Front")})),
        ),
        events=(
            CrashEvent(1, actor_vehno=3, actor_plane=Plane("Front"),
                       target_vehno=2, target_plane=Plane("Back")),
            CrashEvent(2, actor_vehno=1, actor_plane=Plane("Front"),
                       target_vehno=2, target_plane=Plane("Front")),
        ),
        environments=environments,
        edr_records=records,
        ground_truth=FirstCrashFinding(
            striking_vehno=3, struck_vehno=2, striking_edr=1, struck_edr=5
        ),
        stratum=STRATUM_COMPLICATED,
    )
