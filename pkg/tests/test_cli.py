import json

import pytest
from click.testing import CliRunner

from crashforge.cli import main
from crashforge.ingest import emit_case
from crashforge.model import CrashCase, Plane, Vehicle
from crashforge.synth import replay_case_32548


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def case_file(tmp_path, case32548):
    path = tmp_path / "32548.case.json"
    path.write_bytes(emit_case(case32548))
    return path


def test_validate_ok(runner, case_file):
    result = runner.invoke(main, ["validate", str(case_file)])
    assert result.exit_code == 0
    assert "ok" in result.output


def test_validate_malformed(runner, tmp_path):
    bad = tmp_path / "bad.case.json"
    bad.write_text("{")
    result = runner.invoke(main, ["validate", str(bad), "--json"])
    assert result.exit_code == 2
    report = json.loads(result.output)
    assert report["ok"] is False
    assert report["reports"][0]["violations"]


def test_validate_missing_path(runner, tmp_path):
    result = runner.invoke(main, ["validate", str(tmp_path / "none.case.json")])
    assert result.exit_code == 2
    assert "IoError" in result.output


def test_infer_json(runner, case_file):
    result = runner.invoke(main, ["infer", str(case_file), "--json"])
    assert result.exit_code == 0
    finding = json.loads(result.output)
    assert finding["striking_vehno"] == 3
    assert finding["struck_edr"] == 5


def test_infer_corpus_dir(runner, tmp_path, case32548, case28197):
    for case in (case32548, case28197):
        (tmp_path / f"{case.case_id}.case.json").write_bytes(emit_case(case))
    result = runner.invoke(main, ["infer", str(tmp_path), "--json"])
    assert result.exit_code == 0
    findings = json.loads(result.output)
    assert [f["case_id"] for f in findings] == ["28197", "32548"]


def test_infer_no_events_exits_3(runner, tmp_path):
    case = CrashCase(
        case_id="noev",
        vehicles=(Vehicle(1, "a", frozenset({Plane("Front")})),
                  Vehicle(2, "b", frozenset({Plane("Back")}))),
        events=(),
    )
    path = tmp_path / "noev.case.json"
    path.write_bytes(emit_case(case))
    result = runner.invoke(main, ["infer", str(path)])
    assert result.exit_code == 3
    assert "NoEvents" in result.output


def test_encode_writes_docs(runner, case_file, tmp_path):
    out = tmp_path / "docs"
    result = runner.invoke(main, ["encode", str(case_file), "--out", str(out)])
    assert result.exit_code == 0
    scene = (out / "32548.scene.md").read_text()
    assert "Total number of vehicles involved in this Crash: 3" in scene
    assert (out / "32548.edr.md").exists()


def test_synth_writes_manifest(runner, tmp_path):
    spec = tmp_path / "spec.toml"
    spec.write_text("seed = 5\nn_cases = 3\n")
    out = tmp_path / "corpus"
    result = runner.invoke(main, ["synth", str(spec), "--out", str(out), "--json"])
    assert result.exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 5
    assert manifest["regenerations"] == 0
    assert len(manifest["cases"]) == 3
    assert all((out / name).exists() for name in manifest["cases"])


def test_synth_bad_spec_exits_5(runner, tmp_path):
    spec = tmp_path / "spec.toml"
    spec.write_text("seed = 5\nn_cases = 3\np_mislabel = 2.0\n")
    result = runner.invoke(main, ["synth", str(spec), "--out", str(tmp_path / "o")])
    assert result.exit_code == 5


def test_agent_run_and_report(runner, tmp_path, case_file):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "32548.case.json").write_bytes(emit_case(replay_case_32548()))
    out = tmp_path / "runs"
    result = runner.invoke(main, [
        "agent-run", str(corpus), "--trials", "2", "--campaign", "smoke",
        "--out", str(out), "--json",
    ])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    assert summary["trials"] == 2
    assert summary["passes"] == 2
    log = out / "smoke.trials.jsonl"
    assert len(log.read_text().splitlines()) == 2
    assert (out / "smoke.report.md").exists()

    report = runner.invoke(main, ["report", str(log), "--format", "csv"])
    assert report.exit_code == 0
    assert report.output.splitlines()[0].startswith("case_id,")


def test_agent_run_zero_trials_exits_5(runner, tmp_path, case_file):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "c.case.json").write_bytes(case_file.read_bytes())
    result = runner.invoke(main, ["agent-run", str(corpus), "--trials", "0"])
    assert result.exit_code == 5


def test_agent_run_unknown_backend_exits_5(runner, tmp_path, case_file):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "c.case.json").write_bytes(case_file.read_bytes())
    result = runner.invoke(main, ["agent-run", str(corpus), "--backends", "gpt"])
    assert result.exit_code == 5


def test_agent_run_unset_credential_exits_4(runner, tmp_path, case_file, monkeypatch):
    monkeypatch.delenv("CF_CLI_KEY", raising=False)
    config = tmp_path / "config.toml"
    config.write_text(
        '[[backend]]\nname = "real"\nendpoint = "https://example.test/v1"\n'
        'model_id = "m"\ncredential = "CF_CLI_KEY"\n'
    )
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "c.case.json").write_bytes(case_file.read_bytes())
    result = runner.invoke(main, ["--config", str(config), "agent-run", str(corpus),
                                  "--backends", "real"])
    assert result.exit_code == 4


def test_report_unknown_format_is_usage_error(runner, tmp_path):
    log = tmp_path / "x.jsonl"
    log.write_text("")
    result = runner.invoke(main, ["report", str(log), "--format", "pdf"])
    assert result.exit_code == 2


def test_config_env_var_and_overrides(runner, tmp_path, case_file, monkeypatch):
    config = tmp_path / "config.toml"
    config.write_text("parallelism = 2\n[alignment]\nshift_range_sec = 4.0\n")
    monkeypatch.setenv("CRASHFORGE_CONFIG", str(config))
    result = runner.invoke(main, ["infer", str(case_file), "--json"])
    assert result.exit_code == 0


def test_malformed_config_exits_5(runner, tmp_path, case_file):
    config = tmp_path / "config.toml"
    config.write_text("parallelism = [broken")
    result = runner.invoke(main, ["--config", str(config), "infer", str(case_file)])
    assert result.exit_code == 5
