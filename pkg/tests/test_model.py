import pytest

from crashforge.model import (
    CH_ACCEL,
    CH_BRAKE,
    CH_SPEED,
    CrashCase,
    CrashEvent,
    EdrRecord,
    EnvironmentRecord,
    EventLabel,
    FirstCrashFinding,
    LabelKind,
    Plane,
    TimeSeries,
    ValidationError,
    Vehicle,
    require_valid,
    validate_case,
)


def series(pairs, unit="km/h"):
    return TimeSeries.of(pairs, unit)


def minimal_case(**overrides):
    base = dict(
        case_id="t1",
        vehicles=(
            Vehicle(1, "Small Passenger Car", frozenset({Plane("Back")})),
            Vehicle(2, "Small Passenger Car", frozenset({Plane("Front")})),
        ),
        events=(
            CrashEvent(1, actor_vehno=2, actor_plane=Plane("Front"),
                       target_vehno=1, target_plane=Plane("Back")),
        ),
    )
    base.update(overrides)
    return CrashCase(**base)


class TestPlane:
    def test_canonical(self):
        assert str(Plane("Front")) == "Front"
        assert Plane.parse(" back ") == Plane("Back")

    def test_other_carries_text(self):
        other = Plane.parse("Left rear quarter")
        assert other.kind == "Other"
        assert str(other) == "Left rear quarter"

    def test_invalid_kind(self):
        with pytest.raises(ValueError):
            Plane("Sideways")
        with pytest.raises(ValueError):
            Plane("Front", text="extra")


class TestEventLabel:
    def test_mapped_requires_eventno(self):
        assert EventLabel.mapped(2).eventno == 2
        with pytest.raises(ValueError):
            EventLabel(LabelKind.MAPPED)
        with pytest.raises(ValueError):
            EventLabel(LabelKind.NOT_RELATED, eventno=1)

    def test_kinds(self):
        assert EventLabel.not_related().kind is LabelKind.NOT_RELATED
        assert EventLabel.related_unknown().kind is LabelKind.RELATED_UNKNOWN


def test_event_render():
    ev = CrashEvent(1, 3, Plane("Front"), 2, Plane("Back"))
    assert ev.render() == "Contact between Vehicle 3's front and Vehicle 2's back"


def test_finding_same_outputs_ignores_rationale():
    a = FirstCrashFinding(3, 2, 1, 5, rationale=("x",))
    b = FirstCrashFinding(3, 2, 1, 5, rationale=())
    assert a.same_outputs(b)
    assert not a.same_outputs(FirstCrashFinding(3, 2, 1, None))


def test_valid_case_has_no_violations():
    assert validate_case(minimal_case()) == []


def test_duplicate_vehno():
    case = minimal_case(vehicles=(
        Vehicle(1, "a", frozenset({Plane("Back")})),
        Vehicle(1, "b", frozenset({Plane("Front")})),
    ))
    rules = {v.rule for v in validate_case(case)}
    assert "unique-vehno" in rules


def test_noncontiguous_vehno():
    case = minimal_case(vehicles=(
        Vehicle(1, "a", frozenset({Plane("Back")})),
        Vehicle(3, "b", frozenset({Plane("Front")})),
    ))
    rules = {v.rule for v in validate_case(case)}
    assert "contiguous-vehno" in rules


def test_event_referencing_missing_vehicle():
    case = minimal_case(events=(
        CrashEvent(1, 2, Plane("Front"), 9, Plane("Back")),
    ))
    violations = validate_case(case)
    assert any(v.rule == "existing-vehicle" and v.path == "/events/0/target_vehno"
               for v in violations)


def test_event_self_reference():
    case = minimal_case(events=(CrashEvent(1, 1, Plane("Front"), 1, Plane("Back")),))
    assert any(v.rule == "distinct-vehicles" for v in validate_case(case))


def test_participant_needs_damage_planes():
    case = minimal_case(vehicles=(
        Vehicle(1, "a", frozenset()),
        Vehicle(2, "b", frozenset({Plane("Front")})),
    ))
    assert any(v.rule == "nonempty-damage" for v in validate_case(case))


def test_environment_checks():
    case = minimal_case(environments=(EnvironmentRecord(9, -1.0, "flow", "Two"),))
    rules = {v.rule for v in validate_case(case)}
    assert {"existing-vehicle", "non-negative"} <= rules


def test_edr_series_rules():
    rec = EdrRecord(1, 1, {
        CH_SPEED: series([(-1.0, 10.0), (-1.0, 11.0)]),
        CH_BRAKE: series([(-1.0, 0.5)], "bool"),
        CH_ACCEL: series([(0.5, 50.0)], "%"),
        "bogus": series([(-1.0, 0.0)], ""),
    }, EventLabel.mapped(1))
    rules = {v.rule for v in validate_case(minimal_case(edr_records=(rec,)))}
    assert {"increasing-time", "brake-range", "pre-crash-time", "canonical-channel"} <= rules


def test_edr_dangling_label_and_duplicate_number():
    recs = (
        EdrRecord(1, 1, {CH_SPEED: series([(-1.0, 5.0)])}, EventLabel.mapped(7)),
        EdrRecord(1, 1, {CH_SPEED: series([(-1.0, 5.0)])}, EventLabel.mapped(1)),
    )
    rules = {v.rule for v in validate_case(minimal_case(edr_records=recs))}
    assert {"dangling-event-mapping", "unique-edreventno"} <= rules


def test_ground_truth_rules():
    case = minimal_case(
        vehicles=(
            Vehicle(1, "a", frozenset({Plane("Back")})),
            Vehicle(2, "b", frozenset({Plane("Front")})),
            Vehicle(3, "c", frozenset({Plane("Front")})),
        ),
        ground_truth=FirstCrashFinding(3, 3, None, None),
    )
    rules = {v.rule for v in validate_case(case)}
    assert {"distinct-roles", "first-event-participant"} <= rules


def test_unknown_stratum():
    case = minimal_case(stratum="weird")
    assert any(v.rule == "known-stratum" for v in validate_case(case))


def test_require_valid_raises_with_violations():
    case = minimal_case(stratum="weird")
    with pytest.raises(ValidationError) as exc:
        require_valid(case)
    assert exc.value.violations


def test_fixture_cases_validate(case32548, case28197):
    assert validate_case(case32548) == []
    assert validate_case(case28197) == []
