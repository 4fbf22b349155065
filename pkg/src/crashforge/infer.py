"""Deterministic first-crash inference.

A rule-based engine producing the four outputs for the first collision —
striking vehicle, struck vehicle, and each role's most relevant EDR record
— with a full rationale trace. Database labels are treated as evidence,
not truth: records mislabeled to another event can be recovered when their
series cluster with a correctly labeled record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .edr import (
    AlignmentConfig,
    ChannelMissing,
    Dynamics,
    cluster_overlaps,
    profile_dynamics,
)
from .model import (
    CrashCase,
    CrashEvent,
    DomainError,
    EdrRecord,
    FirstCrashFinding,
    LabelKind,
    require_valid,
)


class NoEvents(DomainError):
    pass


class RoleIndeterminate(DomainError):
    pass


class Role(Enum):
    STRIKING = "striking"
    STRUCK = "struck"


class Provenance(Enum):
    LABEL_MATCH = "LabelMatch"
    CLUSTER_RECOVERED = "ClusterRecovered"
    SOLE_SURVIVOR = "SoleSurvivor"


@dataclass(frozen=True)
class InferenceConfig:
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    w_dyn: float = 0.7
    w_time: float = 0.3
    # LVD role expectations: the struck lead decelerates, the striking
    # follower approaches then brakes late
    role_expectation: tuple[tuple[Role, Dynamics], ...] = (
        (Role.STRUCK, Dynamics.DECELERATING_LEAD),
        (Role.STRIKING, Dynamics.APPROACH_THEN_LATE_BRAKE),
    )

    def expected_dynamics(self, role: Role) -> Optional[Dynamics]:
        for r, d in self.role_expectation:
            if r is role:
                return d
        return None


@dataclass
class CandidateSet:
    vehno: int
    role: Optional[Role]
    candidates: list[tuple[int, Provenance]]
    eliminated: list[tuple[int, str]]


def identify_first_event(case: CrashCase) -> CrashEvent:
    if not case.events:
        raise NoEvents(f"case {case.case_id} has no crash events")
    return min(case.events, key=lambda e: e.eventno)


@dataclass(frozen=True)
class RoleAssignment:
    striking_vehno: int
    struck_vehno: int
    notes: tuple[str, ...] = ()


def assign_roles(first_event: CrashEvent, case: CrashCase) -> RoleAssignment:
    """Rule ladder: a lone front contact marks the striking vehicle;
    front-to-front falls back to the event's actor; damage planes are a
    consistency check only."""
    ev = first_event
    actor_front = str(ev.actor_plane) == "Front"
    target_front = str(ev.target_plane) == "Front"
    notes: list[str] = []

    if actor_front and not target_front:
        striking, struck = ev.actor_vehno, ev.target_vehno
        struck_plane = ev.target_plane
        notes.append(f"role rule R1: only Vehicle {striking}'s contacting plane is Front")
    elif target_front and not actor_front:
        striking, struck = ev.target_vehno, ev.actor_vehno
        struck_plane = ev.actor_plane
        notes.append(f"role rule R1: only Vehicle {striking}'s contacting plane is Front")
    elif actor_front and target_front:
        striking, struck = ev.actor_vehno, ev.target_vehno
        struck_plane = ev.target_plane
        notes.append(f"role rule R2: front-to-front contact, actor Vehicle {striking} is striking")
    else:
        raise RoleIndeterminate(
            f"EVENTNO{ev.eventno}: neither contacting plane is Front "
            f"({ev.actor_plane}/{ev.target_plane})"
        )

    striking_damage = {str(p) for p in case.vehicle(striking).damage_planes}
    struck_damage = {str(p) for p in case.vehicle(struck).damage_planes}
    if "Front" not in striking_damage:
        notes.append(
            f"role rule R3: striking Vehicle {striking} carries no Front damage (inconsistent, not overriding)"
        )
    if str(struck_plane) not in struck_damage:
        notes.append(
            f"role rule R3: struck Vehicle {struck} carries no {struck_plane} damage (inconsistent, not overriding)"
        )
    return RoleAssignment(striking, struck, tuple(notes))


def filter_candidates(
    vehno: int,
    first_event: CrashEvent,
    case: CrashCase,
    cfg: Optional[InferenceConfig] = None,
    role: Optional[Role] = None,
) -> CandidateSet:
    """Applies the label filters, then recovers mislabeled records whose
    series cluster with a correctly labeled candidate."""
    cfg = cfg or InferenceConfig()
    records = case.records_for(vehno)
    eliminated: list[tuple[int, str]] = []
    survivors: list[EdrRecord] = []
    for rec in records:
        if rec.db_label.kind is LabelKind.RELATED_UNKNOWN:
            eliminated.append((rec.edr_event_no, "related-unknown filter"))
        elif rec.db_label.kind is LabelKind.NOT_RELATED:
            eliminated.append((rec.edr_event_no, "not-related filter"))
        else:
            survivors.append(rec)

    label_matches = [r for r in survivors if r.db_label.eventno == first_event.eventno]
    others = [r for r in survivors if r.db_label.eventno != first_event.eventno]

    candidates: list[tuple[int, Provenance]] = []
    if label_matches:
        candidates = [(r.edr_event_no, Provenance.LABEL_MATCH) for r in label_matches]
        if others:
            clusters = cluster_overlaps(survivors, cfg.alignment)
            match_keys = {r.key for r in label_matches}
            for rec in others:
                in_match_cluster = any(
                    rec.key in c.members and match_keys & set(c.members) for c in clusters
                )
                if in_match_cluster:
                    candidates.append((rec.edr_event_no, Provenance.CLUSTER_RECOVERED))
                else:
                    eliminated.append(
                        (rec.edr_event_no, "mapped to another event, no overlap with a first-event record")
                    )
    elif len(survivors) == 1:
        candidates = [(survivors[0].edr_event_no, Provenance.SOLE_SURVIVOR)]
    else:
        for rec in survivors:
            eliminated.append((rec.edr_event_no, "mapped to another event, no first-event record to correlate"))

    candidates.sort(key=lambda c: c[0])
    return CandidateSet(vehno=vehno, role=role, candidates=candidates, eliminated=eliminated)


def select_record(
    cset: CandidateSet,
    role: Role,
    first_event: CrashEvent,
    case: CrashCase,
    cfg: Optional[InferenceConfig] = None,
    rationale: Optional[list[str]] = None,
) -> Optional[int]:
    """Picks the most relevant EDREVENTNO, or None when no record survives.

    Multiple candidates are scored on dynamics consistency with the role and
    on trigger order within their overlap cluster (earliest trigger wins the
    timing component)."""
    cfg = cfg or InferenceConfig()
    log = rationale if rationale is not None else []
    vehno = cset.vehno

    if not cset.candidates:
        log.append(f"V{vehno} ({role.value}): no surviving EDR record, NoRecord")
        return None
    if len(cset.candidates) == 1:
        edr_no = cset.candidates[0][0]
        log.append(
            f"V{vehno} ({role.value}): single candidate EDREVENTNO{edr_no} "
            f"({cset.candidates[0][1].value}), selected without scoring"
        )
        return edr_no

    by_no = {r.edr_event_no: r for r in case.records_for(vehno)}
    cand_records = [by_no[no] for no, _ in cset.candidates]
    clusters = cluster_overlaps(cand_records, cfg.alignment)

    offsets: dict[int, Optional[float]] = {}
    time_score: dict[int, float] = {}
    for cluster in clusters:
        members = [no for _, no in cluster.members]
        if len(members) == 1:
            offsets[members[0]] = None
            time_score[members[0]] = 0.5  # no temporal evidence
            continue
        offs = {no: cluster.shifts[(vehno, no)] for no in members}
        lo, hi = min(offs.values()), max(offs.values())
        for no, off in offs.items():
            offsets[no] = off
            time_score[no] = 1.0 if hi == lo else 1.0 - (off - lo) / (hi - lo)

    expected = cfg.expected_dynamics(role)
    scores: dict[int, float] = {}
    log.append(f"V{vehno} ({role.value}): scoring {len(cand_records)} candidates "
               f"(w_dyn={cfg.w_dyn}, w_time={cfg.w_time}, expected {expected.value if expected else 'none'})")
    for rec in cand_records:
        try:
            profile = profile_dynamics(rec, cfg.alignment)
            if profile.classification is expected:
                dyn = 1.0
            elif profile.classification is Dynamics.STEADY_STATE:
                dyn = 0.5
            else:
                dyn = 0.0
            dyn_label = profile.classification.value
        except ChannelMissing:
            dyn, dyn_label = 0.0, "no speed channel"
        score = cfg.w_dyn * dyn + cfg.w_time * time_score[rec.edr_event_no]
        scores[rec.edr_event_no] = score
        off = offsets[rec.edr_event_no]
        log.append(
            f"  EDREVENTNO{rec.edr_event_no}: dyn={dyn:.2f} ({dyn_label}), "
            f"time={time_score[rec.edr_event_no]:.2f} "
            f"(trigger offset {'n/a' if off is None else format(off, '+.2f') + ' s'}), "
            f"score={score:.2f}"
        )

    best = max(scores.values())
    chosen = min(no for no, s in scores.items() if s == best)
    log.append(f"V{vehno} ({role.value}): selected EDREVENTNO{chosen} (score {best:.2f})")
    return chosen


def infer_first_crash(case: CrashCase, cfg: Optional[InferenceConfig] = None) -> FirstCrashFinding:
    """Composes the full pipeline: first event, roles, candidate filtering,
    record selection. Pure and deterministic."""
    cfg = cfg or InferenceConfig()
    require_valid(case)

    rationale: list[str] = []
    first = identify_first_event(case)
    rationale.append(
        f"context: first crash event is EVENTNO{first.eventno} ({first.render()})"
    )
    roles = assign_roles(first, case)
    rationale.extend(roles.notes)
    rationale.append(
        f"roles: striking Vehicle {roles.striking_vehno}, struck Vehicle {roles.struck_vehno}"
    )

    selections: dict[Role, Optional[int]] = {}
    for role, vehno in ((Role.STRIKING, roles.striking_vehno), (Role.STRUCK, roles.struck_vehno)):
        cset = filter_candidates(vehno, first, case, cfg, role=role)
        for edr_no, reason in cset.eliminated:
            rationale.append(f"V{vehno}: eliminated EDREVENTNO{edr_no} ({reason})")
        for edr_no, prov in cset.candidates:
            rationale.append(f"V{vehno}: candidate EDREVENTNO{edr_no} ({prov.value})")
        selections[role] = select_record(cset, role, first, case, cfg, rationale)

    return FirstCrashFinding(
        striking_vehno=roles.striking_vehno,
        struck_vehno=roles.struck_vehno,
        striking_edr=selections[Role.STRIKING],
        struck_edr=selections[Role.STRUCK],
        rationale=tuple(rationale),
    )
