import pytest

from crashforge.evalharness import compute_stratum
from crashforge.infer import infer_first_crash
from crashforge.model import CH_SPEED, LabelKind, validate_case
from crashforge.synth import GeneratorSpec, SpecError, generate, replay_case_32548


def test_spec_validation():
    with pytest.raises(SpecError):
        GeneratorSpec(p_mislabel=1.5).validate()
    with pytest.raises(SpecError):
        GeneratorSpec(n_cases=-1).validate()
    with pytest.raises(SpecError):
        GeneratorSpec(chain_length_range=(1, 4)).validate()
    with pytest.raises(SpecError):
        GeneratorSpec(chain_length_range=(4, 2)).validate()
    GeneratorSpec().validate()


def test_probability_zero_cases_are_simple():
    corpus = generate(GeneratorSpec(seed=1, n_cases=10))
    assert len(corpus) == 10
    assert corpus.regenerations == 0
    for case in corpus:
        assert case.stratum == "simple"
        assert validate_case(case) == []
        for vehicle in case.vehicles:
            assert len(case.records_for(vehicle.vehno)) <= 1


def test_probability_one_cases_are_complicated():
    corpus = generate(GeneratorSpec(seed=2, n_cases=8, p_mislabel=1.0,
                                    p_extra_overlapping_record=1.0))
    assert all(case.stratum == "complicated" for case in corpus)
    for case in corpus:
        # the struck lead carries the duplicated record pair
        assert len(case.records_for(1)) == 2


def test_seeded_determinism():
    spec = GeneratorSpec(seed=42, n_cases=12, p_mislabel=0.3,
                         p_extra_overlapping_record=0.3, p_unrelated_record=0.3)
    assert list(generate(spec)) == list(generate(spec))


def test_case_content_independent_of_neighbours():
    small = generate(GeneratorSpec(seed=7, n_cases=3))
    large = generate(GeneratorSpec(seed=7, n_cases=6))
    assert list(small) == list(large)[:3]


def test_different_seeds_differ():
    assert list(generate(GeneratorSpec(seed=1, n_cases=3))) != \
        list(generate(GeneratorSpec(seed=2, n_cases=3)))


def test_oracle_closure_on_mixed_corpus():
    corpus = generate(GeneratorSpec(
        seed=13, n_cases=30, p_mislabel=0.4, p_extra_overlapping_record=0.4,
        p_unrelated_record=0.3, p_missing_edr=0.2,
    ))
    for case in corpus:
        assert validate_case(case) == []
        assert infer_first_crash(case).same_outputs(case.ground_truth), case.case_id
        assert compute_stratum(case) == case.stratum


def test_event_one_is_follower_front_lead_back():
    for case in generate(GeneratorSpec(seed=4, n_cases=6)):
        first = case.events[0]
        assert first.eventno == 1
        assert (first.actor_vehno, first.target_vehno) == (2, 1)
        assert str(first.actor_plane) == "Front"
        assert str(first.target_plane) == "Back"


def test_missing_edr_reflected_in_truth():
    corpus = generate(GeneratorSpec(seed=6, n_cases=40, p_missing_edr=0.7))
    missing = [c for c in corpus if c.ground_truth.struck_edr is None
               or c.ground_truth.striking_edr is None]
    assert missing, "expected some missing-EDR cases at p=0.7"
    for case in missing:
        if case.ground_truth.struck_edr is None:
            assert case.records_for(1) == ()


class TestReplay32548:
    def test_shape(self, case32548):
        assert case32548.case_id == "32548"
        assert len(case32548.vehicles) == 3
        assert len(case32548.events) == 2
        assert case32548.records_for(1) == ()
        assert len(case32548.records_for(2)) == 6
        assert len(case32548.records_for(3)) == 1

    def test_speed_limit(self, case32548):
        assert all(env.speed_limit_kmh == 56.0 for env in case32548.environments)

    def test_ground_truth(self, case32548):
        truth = case32548.ground_truth
        assert (truth.striking_vehno, truth.struck_vehno) == (3, 2)
        assert truth.striking_edr == 1
        assert truth.struck_edr == 5

    def test_struck_record_endpoints(self, case32548):
        e5 = next(r for r in case32548.records_for(2) if r.edr_event_no == 5)
        speeds = e5.channels[CH_SPEED].values()
        assert speeds[0] == pytest.approx(37.0)
        assert speeds[-1] == pytest.approx(2.0)

    def test_striking_record_speed(self, case32548):
        v3 = case32548.records_for(3)[0]
        assert all(abs(v - 64.0) < 1.0 for v in v3.channels[CH_SPEED].values())

    def test_labels(self, case32548):
        labels = {r.edr_event_no: r.db_label for r in case32548.records_for(2)}
        assert labels[2].eventno == 1 and labels[5].eventno == 1
        assert labels[1].eventno == 2 and labels[3].eventno == 2 and labels[4].eventno == 2
        assert labels[6].kind is LabelKind.NOT_RELATED

    def test_second_event_records_identical(self, case32548):
        records = {r.edr_event_no: r for r in case32548.records_for(2)}
        assert records[1].channels == records[3].channels == records[4].channels
