import pytest

from crashforge.infer import (
    CandidateSet,
    InferenceConfig,
    NoEvents,
    Provenance,
    Role,
    RoleIndeterminate,
    assign_roles,
    filter_candidates,
    identify_first_event,
    infer_first_crash,
    select_record,
)
from crashforge.model import (
    CrashCase,
    CrashEvent,
    Plane,
    Vehicle,
)


def two_vehicle_case(actor_plane, target_plane, vehicles=None):
    vehicles = vehicles or (
        Vehicle(1, "a", frozenset({Plane("Front"), Plane("Back")})),
        Vehicle(2, "b", frozenset({Plane("Front"), Plane("Back")})),
    )
    return CrashCase(
        case_id="t",
        vehicles=vehicles,
        events=(CrashEvent(1, 1, Plane(actor_plane), 2, Plane(target_plane)),),
    )


def test_first_event_is_lowest_eventno(case32548):
    assert identify_first_event(case32548).eventno == 1


def test_no_events():
    case = CrashCase("empty", vehicles=(Vehicle(1, "a"), Vehicle(2, "b")), events=())
    with pytest.raises(NoEvents):
        identify_first_event(case)


class TestRoles:
    def test_lone_front_actor_strikes(self):
        roles = assign_roles(*(lambda c: (c.events[0], c))(two_vehicle_case("Front", "Back")))
        assert (roles.striking_vehno, roles.struck_vehno) == (1, 2)
        assert any("R1" in n for n in roles.notes)

    def test_lone_front_target_strikes(self):
        case = two_vehicle_case("Back", "Front")
        roles = assign_roles(case.events[0], case)
        assert (roles.striking_vehno, roles.struck_vehno) == (2, 1)

    def test_front_to_front_actor_strikes(self):
        case = two_vehicle_case("Front", "Front")
        roles = assign_roles(case.events[0], case)
        assert (roles.striking_vehno, roles.struck_vehno) == (1, 2)
        assert any("R2" in n for n in roles.notes)

    def test_no_front_plane_is_indeterminate(self):
        case = two_vehicle_case("Back", "Left")
        with pytest.raises(RoleIndeterminate):
            assign_roles(case.events[0], case)

    def test_damage_inconsistency_noted_not_overriding(self):
        case = two_vehicle_case(
            "Front", "Back",
            vehicles=(
                Vehicle(1, "a", frozenset({Plane("Back")})),  # striker without front damage
                Vehicle(2, "b", frozenset({Plane("Back")})),
            ),
        )
        roles = assign_roles(case.events[0], case)
        assert roles.striking_vehno == 1
        assert any("R3" in n for n in roles.notes)

    def test_32548_roles(self, case32548):
        roles = assign_roles(identify_first_event(case32548), case32548)
        assert (roles.striking_vehno, roles.struck_vehno) == (3, 2)


class TestFiltering:
    def test_label_filters_eliminate_unrelated(self, case32548):
        cset = filter_candidates(2, identify_first_event(case32548), case32548)
        assert (6, "not-related filter") in cset.eliminated
        assert all(no != 6 for no, _ in cset.candidates)

    def test_mislabeled_records_recovered_by_cluster(self, case32548):
        cset = filter_candidates(2, identify_first_event(case32548), case32548)
        got = dict(cset.candidates)
        assert got[2] is Provenance.LABEL_MATCH
        assert got[5] is Provenance.LABEL_MATCH
        assert got[1] is Provenance.CLUSTER_RECOVERED
        assert got[3] is Provenance.CLUSTER_RECOVERED
        assert got[4] is Provenance.CLUSTER_RECOVERED

    def test_non_overlapping_other_event_record_eliminated(self, case28197):
        cset = filter_candidates(2, identify_first_event(case28197), case28197)
        assert [no for no, _ in cset.candidates] == [1]
        assert any(no == 2 and "no overlap" in reason for no, reason in cset.eliminated)

    def test_no_records_at_all(self, case28197):
        cset = filter_candidates(1, identify_first_event(case28197), case28197)
        assert cset.candidates == []
        assert cset.eliminated == []

    def test_sole_survivor_without_label_match(self, case32548):
        # V3's single record relabeled to event 2 would still survive alone
        from dataclasses import replace

        from crashforge.model import EventLabel

        rec = case32548.records_for(3)[0]
        case = replace(
            case32548,
            edr_records=tuple(
                replace(r, db_label=EventLabel.mapped(2)) if r.key == (3, 1) else r
                for r in case32548.edr_records
            ),
        )
        cset = filter_candidates(3, identify_first_event(case), case)
        assert cset.candidates == [(rec.edr_event_no, Provenance.SOLE_SURVIVOR)]


class TestSelection:
    def test_empty_set_yields_no_record(self, case28197):
        log = []
        cset = CandidateSet(vehno=1, role=Role.STRIKING, candidates=[], eliminated=[])
        chosen = select_record(cset, Role.STRIKING, identify_first_event(case28197), case28197,
                               rationale=log)
        assert chosen is None
        assert any("NoRecord" in line for line in log)

    def test_single_candidate_skips_scoring(self, case28197):
        log = []
        cset = filter_candidates(2, identify_first_event(case28197), case28197)
        chosen = select_record(cset, Role.STRUCK, identify_first_event(case28197), case28197,
                               rationale=log)
        assert chosen == 1
        assert any("selected without scoring" in line for line in log)

    def test_multi_candidate_scoring_prefers_earliest_matching(self, case32548):
        log = []
        first = identify_first_event(case32548)
        cset = filter_candidates(2, first, case32548)
        chosen = select_record(cset, Role.STRUCK, first, case32548, rationale=log)
        assert chosen == 5
        assert any("scoring 5 candidates" in line for line in log)
        assert any(line.strip().startswith("EDREVENTNO5") for line in log)


def test_infer_32548(case32548):
    finding = infer_first_crash(case32548)
    assert finding.striking_vehno == 3
    assert finding.struck_vehno == 2
    assert finding.striking_edr == 1
    assert finding.struck_edr == 5


def test_infer_case_28197(case28197):
    finding = infer_first_crash(case28197)
    assert (finding.striking_vehno, finding.struck_vehno) == (1, 2)
    assert finding.striking_edr is None
    assert finding.struck_edr == 1


def test_rationale_structure(case32548):
    finding = infer_first_crash(case32548)
    assert finding.rationale[0].startswith("context: first crash event is EVENTNO1")
    assert any("roles: striking Vehicle 3, struck Vehicle 2" in line
               for line in finding.rationale)
    assert any("not-related filter" in line for line in finding.rationale)


def test_infer_deterministic(case32548):
    assert infer_first_crash(case32548) == infer_first_crash(case32548)


def test_config_expected_dynamics():
    from crashforge.edr import Dynamics

    cfg = InferenceConfig()
    assert cfg.expected_dynamics(Role.STRUCK) is Dynamics.DECELERATING_LEAD
    assert cfg.expected_dynamics(Role.STRIKING) is Dynamics.APPROACH_THEN_LATE_BRAKE
