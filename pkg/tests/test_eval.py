import io
import random
from fractions import Fraction

import pytest

from crashforge.edr import ConfigError
from crashforge.evalharness import (
    Mode,
    consistency_report,
    compute_stratum,
    emit_report,
    read_trial_log,
    render_percent,
    run_campaign,
    score_trial,
    summarize,
    write_trial_log,
)
from crashforge.model import FirstCrashFinding
from crashforge.synth import GeneratorSpec, generate, replay_case_32548

TRUTH_32548 = FirstCrashFinding(3, 2, 1, 5)


def make_scores(passes, fails, stratum="simple"):
    scores = []
    for i in range(passes):
        scores.append(score_trial(TRUTH_32548, TRUTH_32548, case_id=f"c{i}", stratum=stratum))
    wrong = FirstCrashFinding(2, 3, 1, 5)
    for i in range(fails):
        scores.append(score_trial(wrong, TRUTH_32548, case_id=f"f{i}", stratum=stratum))
    return scores


class TestScoreTrial:
    def test_exact_match_passes(self):
        score = score_trial(TRUTH_32548, TRUTH_32548)
        assert score.field_correct == (True, True, True, True)
        assert score.trial_pass

    def test_single_field_error_fails_trial(self):
        # the record every human analyst picked instead of the right one
        predicted = FirstCrashFinding(3, 2, 1, 2)
        score = score_trial(predicted, TRUTH_32548)
        assert score.field_correct == (True, True, True, False)
        assert not score.trial_pass

    def test_no_record_equality(self):
        truth = FirstCrashFinding(1, 2, None, 1)
        predicted = FirstCrashFinding(1, 2, None, 1)
        assert score_trial(predicted, truth).field_correct[2] is True

    def test_swapped_roles_flip_both_vehicle_fields(self):
        swapped = FirstCrashFinding(2, 3, 1, 5)
        score = score_trial(swapped, TRUTH_32548)
        assert score.field_correct[0] is False
        assert score.field_correct[1] is False

    def test_failed_backend_trial(self):
        score = score_trial(None, TRUTH_32548, error="TransportError: down")
        assert not score.trial_pass
        assert score.error == "TransportError: down"


class TestSummarize:
    def test_72_of_78(self):
        metrics = summarize(make_scores(72, 6))
        assert render_percent(metrics.overall.accuracy) == "92.31"

    def test_all_pass_195(self):
        metrics = summarize(make_scores(195, 0))
        m = metrics.overall
        assert render_percent(m.accuracy) == "100.00"
        assert m.precision == m.recall == m.f1 == Fraction(1)

    def test_empty(self):
        metrics = summarize([])
        assert metrics.overall is None
        assert metrics.per_stratum == {}

    def test_permutation_invariant(self):
        scores = make_scores(7, 3)
        shuffled = scores[:]
        random.Random(0).shuffle(shuffled)
        assert summarize(scores).overall == summarize(shuffled).overall

    def test_strata_split(self):
        scores = make_scores(5, 0, "simple") + make_scores(3, 1, "complicated")
        metrics = summarize(scores)
        assert metrics.per_stratum["simple"].trials == 5
        assert metrics.per_stratum["complicated"].passes == 3

    def test_latency_mean_within_bounds(self):
        scores = [
            score_trial(TRUTH_32548, TRUTH_32548, latency_phase1_sec=t, latency_phase2_sec=2 * t)
            for t in (0.5, 1.0, 3.0)
        ]
        for stats in summarize(scores).latency.values():
            assert stats.minimum <= stats.mean <= stats.maximum


class TestCampaign:
    def test_deterministic_mode_one_score_per_case(self):
        corpus = list(generate(GeneratorSpec(seed=9, n_cases=6)))
        scores = run_campaign(corpus, mode=Mode.DETERMINISTIC)
        assert len(scores) == 6
        assert all(s.trial_pass for s in scores)
        assert [s.case_id for s in scores] == [c.case_id for c in corpus]

    def test_agent_mode_shape(self):
        from crashforge.agent import mock_profile

        corpus = list(generate(GeneratorSpec(seed=9, n_cases=2)))
        backends = [mock_profile("a"), mock_profile("b")]
        scores = run_campaign(corpus, backends, trials_per_case=3, mode=Mode.AGENT)
        assert len(scores) == 2 * 2 * 3
        keys = [(s.case_id, s.backend, s.trial_index) for s in scores]
        expected = [(c.case_id, b, t) for c in corpus for b in ("a", "b") for t in range(3)]
        assert keys == expected

    def test_empty_corpus(self):
        assert run_campaign([], mode=Mode.DETERMINISTIC) == []

    def test_trials_must_be_positive(self):
        with pytest.raises(ConfigError):
            run_campaign([], trials_per_case=0)

    def test_backend_failure_becomes_failed_trial(self):
        from crashforge.agent import TransientFailure, mock_profile

        def down(bundle, profile):
            raise TransientFailure("503")

        corpus = [replay_case_32548()]
        scores = run_campaign(
            corpus, [mock_profile()], trials_per_case=1, mode=Mode.AGENT,
            transport=down, sleep=lambda _: None,
        )
        assert len(scores) == 1
        assert not scores[0].trial_pass
        assert "TransportError" in scores[0].error

    def test_parallel_order_matches_serial(self):
        corpus = list(generate(GeneratorSpec(seed=3, n_cases=3)))
        serial = run_campaign(corpus, trials_per_case=2, mode=Mode.AGENT)
        parallel = run_campaign(corpus, trials_per_case=2, mode=Mode.AGENT, parallelism=4)
        assert [(s.case_id, s.backend, s.trial_index, s.trial_pass) for s in serial] == \
            [(s.case_id, s.backend, s.trial_index, s.trial_pass) for s in parallel]


class TestConsistency:
    def test_full_agreement(self):
        scores = []
        for case in ("a", "b"):
            for trial in range(3):
                scores.append(score_trial(TRUTH_32548, TRUTH_32548, case_id=case,
                                          trial_index=trial))
        report = consistency_report(scores)
        assert report.agreement == Fraction(1)

    def test_one_divergent_case(self):
        scores = []
        for i in range(39):
            for trial in range(2):
                predicted = TRUTH_32548
                if i == 0 and trial == 1:
                    predicted = FirstCrashFinding(3, 2, 1, 2)
                scores.append(score_trial(predicted, TRUTH_32548, case_id=f"c{i}",
                                          trial_index=trial))
        assert consistency_report(scores).agreement == Fraction(38, 39)

    def test_degenerate_single_observation(self):
        scores = [score_trial(TRUTH_32548, TRUTH_32548, case_id="a")]
        report = consistency_report(scores)
        assert report.agreement is None
        assert report.note == "agreement undefined (1 observation per case)"


class TestReports:
    def test_markdown_all_pass(self):
        scores = make_scores(10, 0)
        data = emit_report(summarize(scores), scores, "markdown")
        assert b"F1: 1.00" in data
        assert b"Accuracy: 100.00%" in data

    def test_deterministic_bytes(self):
        scores = make_scores(4, 2)
        metrics = summarize(scores)
        assert emit_report(metrics, scores, "markdown") == emit_report(metrics, scores, "markdown")
        assert emit_report(metrics, scores, "json") == emit_report(metrics, scores, "json")

    def test_csv_one_row_per_trial(self):
        scores = make_scores(3, 1)
        lines = emit_report(summarize(scores), scores, "csv").decode().splitlines()
        assert len(lines) == 1 + 4
        assert lines[0].startswith("case_id,backend,trial_index")

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            emit_report(summarize([]), [], "pdf")

    def test_trial_log_round_trip(self):
        scores = make_scores(2, 1) + [score_trial(None, TRUTH_32548, error="boom")]
        buf = io.StringIO()
        write_trial_log(scores, buf)
        assert len(buf.getvalue().splitlines()) == 4
        buf.seek(0)
        back = read_trial_log(buf)
        assert [(s.case_id, s.trial_pass, s.error) for s in back] == \
            [(s.case_id, s.trial_pass, s.error) for s in scores]


class TestStratum:
    def test_fixtures(self, case32548, case28197):
        assert compute_stratum(case32548) == "complicated"
        assert compute_stratum(case28197) == "simple"

    def test_matches_generator_intent(self):
        corpus = generate(GeneratorSpec(
            seed=21, n_cases=25, p_mislabel=0.4, p_extra_overlapping_record=0.4,
            p_unrelated_record=0.3, p_missing_edr=0.2,
        ))
        for case in corpus:
            assert compute_stratum(case) == case.stratum, case.case_id
