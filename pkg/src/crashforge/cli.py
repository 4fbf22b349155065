"""Command-line front door.

Exit codes: 0 success, 2 input error, 3 domain error (no events,
indeterminate roles), 4 backend error, 5 configuration error. Every
subcommand takes --json for machine-readable output, and all files are
written atomically (temp file + rename).

Configuration is one TOML document found via --config or the
CRASHFORGE_CONFIG environment variable; CRASHFORGE_PARALLELISM and
CRASHFORGE_OUTPUT_DIR override the corresponding config keys, and flags
override both.
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
import pathlib
import sys
import tempfile

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from typing import Optional

import click

from . import agent, evalharness, ingest, synth
from .edr import AlignmentConfig, ConfigError
from .encode import encode_edr_report, encode_scene_description
from .infer import InferenceConfig, NoEvents, RoleIndeterminate, infer_first_crash
from .model import DomainError, ValidationError, validate_case

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_BACKEND = 4
EXIT_CONFIG = 5


@dataclass(frozen=True)
class PipelineConfig:
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    backends: dict[str, agent.BackendProfile] = field(default_factory=dict)
    parallelism: int = 1
    template_version: str = agent.TEMPLATE_VERSION
    output_dir: str = "."


def _fields_only(cls, raw: dict, where: str) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key {sorted(unknown)[0]!r}")
    return raw


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        path = os.environ.get("CRASHFORGE_CONFIG")
    raw: dict = {}
    if path:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc

    alignment = AlignmentConfig(**_fields_only(AlignmentConfig, raw.get("alignment", {}), "alignment"))
    inference_raw = _fields_only(InferenceConfig, dict(raw.get("inference", {})), "inference")
    inference_raw.pop("alignment", None)
    inference_raw.pop("role_expectation", None)
    inference = InferenceConfig(alignment=alignment, **inference_raw)

    backends = {}
    for entry in raw.get("backend", []):
        profile = agent.BackendProfile(**_fields_only(agent.BackendProfile, entry, "backend"))
        backends[profile.name] = profile
    backends.setdefault("mock", agent.mock_profile())

    parallelism = int(os.environ.get("CRASHFORGE_PARALLELISM", raw.get("parallelism", 1)))
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    output_dir = os.environ.get("CRASHFORGE_OUTPUT_DIR", raw.get("output_dir", "."))

    try:
        alignment.validate()
        agent._template("phase1.system.txt")
        agent._template("phase1.user.tmpl")
        agent._template("phase2.user.tmpl")
    except (ConfigError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from exc

    return PipelineConfig(
        alignment=alignment,
        inference=inference,
        backends=backends,
        parallelism=parallelism,
        output_dir=str(output_dir),
    )


def _atomic_write(path: pathlib.Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(payload, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    elif human:
        click.echo(human)


def _die(code: int, message: str, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps({"error": message}))
    else:
        click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_case(path: str):
    try:
        return ingest.parse_case(pathlib.Path(path).read_bytes())
    except OSError as exc:
        raise ingest.IngestError(f"IoError: {exc}") from exc


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML config file (default: $CRASHFORGE_CONFIG).")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str]) -> None:
    """Crash-case pipeline: validate, encode, infer, campaign, synthesize."""
    try:
        ctx.obj = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def validate(paths: tuple[str, ...], as_json: bool) -> None:
    """Validate case files; exit 0 only if every file is well formed."""
    reports = []
    ok = True
    for path in paths:
        entry = {"path": path, "valid": False, "violations": []}
        try:
            case = _load_case(path)
            violations = validate_case(case)
            entry["valid"] = not violations
            entry["violations"] = [
                {"path": v.path, "rule": v.rule, "message": v.message} for v in violations
            ]
        except ingest.IngestError as exc:
            entry["violations"] = [{"path": "", "rule": type(exc).__name__, "message": str(exc)}]
        ok = ok and entry["valid"]
        reports.append(entry)

    human = "\n".join(
        f"{r['path']}: " + ("ok" if r["valid"] else "; ".join(
            f"{v['path'] or '(file)'}: {v['rule']}: {v['message']}" for v in r["violations"]
        ))
        for r in reports
    )
    _emit({"reports": reports, "ok": ok}, as_json, human)
    sys.exit(EXIT_OK if ok else EXIT_INPUT)


@main.command()
@click.argument("case_path", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (default: current directory).")
@click.option("--json", "as_json", is_flag=True)
def encode(case_path: str, out_dir: Optional[str], as_json: bool) -> None:
    """Write the scene description and EDR report documents for a case."""
    try:
        case = _load_case(case_path)
        scene = encode_scene_description(case)
        report = encode_edr_report(case)
    except (ingest.IngestError, ValidationError) as exc:
        _die(EXIT_INPUT, str(exc), as_json)
    out = pathlib.Path(out_dir or ".")
    written = []
    try:
        for name, text in ((f"{case.case_id}.scene.md", scene.text),
                           (f"{case.case_id}.edr.md", report.text)):
            _atomic_write(out / name, text.encode("utf-8"))
            written.append(str(out / name))
    except OSError as exc:
        _die(EXIT_INPUT, f"IoError: {exc}", as_json)
    _emit({"written": written}, as_json, "\n".join(written))


@main.command()
@click.argument("path", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def infer(cfg: PipelineConfig, path: str, as_json: bool) -> None:
    """Infer the four first-crash outputs for a case file or corpus dir."""
    target = pathlib.Path(path)
    try:
        if target.is_dir():
            entries = ingest.load_corpus(target)
            bad = [e for e in entries if e.error is not None]
            if bad:
                _die(EXIT_INPUT, f"{bad[0].path}: {bad[0].error}", as_json)
            cases = [e.case for e in entries]
        else:
            cases = [_load_case(path)]
    except (OSError, ingest.IngestError) as exc:
        _die(EXIT_INPUT, str(exc), as_json)

    findings = []
    try:
        for case in cases:
            finding = infer_first_crash(case, cfg.inference)
            findings.append((case.case_id, finding))
    except (NoEvents, RoleIndeterminate) as exc:
        _die(EXIT_DOMAIN, f"{type(exc).__name__}: {exc}", as_json)
    except ValidationError as exc:
        _die(EXIT_INPUT, str(exc), as_json)

    payload = [
        {
            "case_id": cid,
            "striking_vehno": f.striking_vehno,
            "struck_vehno": f.struck_vehno,
            "striking_edr": f.striking_edr,
            "struck_edr": f.struck_edr,
            "rationale": list(f.rationale),
        }
        for cid, f in findings
    ]
    human_lines = []
    for cid, f in findings:
        human_lines.append(
            f"{cid}: striking V{f.striking_vehno} "
            f"(EDREVENTNO {f.striking_edr if f.striking_edr is not None else 'none'}), "
            f"struck V{f.struck_vehno} "
            f"(EDREVENTNO {f.struck_edr if f.struck_edr is not None else 'none'})"
        )
    _emit(payload if len(payload) > 1 else payload[0], as_json, "\n".join(human_lines))


@main.command("agent-run")
@click.argument("corpus_dir", type=click.Path())
@click.option("--backends", "backend_names", default="mock",
              help="Comma-separated backend profile names from the config.")
@click.option("--trials", default=1, show_default=True)
@click.option("--mode", type=click.Choice(["agent", "deterministic"]), default="agent")
@click.option("--campaign", default="campaign", show_default=True,
              help="Base name for the trial log and report files.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def agent_run(cfg: PipelineConfig, corpus_dir: str, backend_names: str, trials: int,
              mode: str, campaign: str, out_dir: Optional[str], as_json: bool) -> None:
    """Run a trial campaign over a corpus and write the log and report."""
    try:
        entries = ingest.load_corpus(corpus_dir)
    except OSError as exc:
        _die(EXIT_INPUT, str(exc), as_json)
    bad = [e for e in entries if e.error is not None]
    if bad:
        _die(EXIT_INPUT, f"{bad[0].path}: {bad[0].error}", as_json)
    corpus = [e.case for e in entries]

    profiles = []
    for name in [n.strip() for n in backend_names.split(",") if n.strip()]:
        if name not in cfg.backends:
            _die(EXIT_CONFIG, f"unknown backend profile {name!r}", as_json)
        profiles.append(cfg.backends[name])
    for profile in profiles:
        if profile.credential and profile.credential not in os.environ:
            _die(EXIT_BACKEND, f"environment variable {profile.credential} is not set", as_json)

    try:
        scores = evalharness.run_campaign(
            corpus,
            backends=profiles,
            trials_per_case=trials,
            mode=evalharness.Mode.AGENT if mode == "agent" else evalharness.Mode.DETERMINISTIC,
            parallelism=cfg.parallelism,
        )
    except ConfigError as exc:
        _die(EXIT_CONFIG, str(exc), as_json)
    except agent.AgentError as exc:
        _die(EXIT_BACKEND, str(exc), as_json)

    metrics = evalharness.summarize(scores)
    out = pathlib.Path(out_dir or cfg.output_dir)
    log_path = out / f"{campaign}.trials.jsonl"
    buf = io.StringIO()
    evalharness.write_trial_log(scores, buf)
    report_path = out / f"{campaign}.report.md"
    try:
        _atomic_write(log_path, buf.getvalue().encode("utf-8"))
        _atomic_write(report_path, evalharness.emit_report(metrics, scores, "markdown"))
    except OSError as exc:
        _die(EXIT_INPUT, f"IoError: {exc}", as_json)

    consistency = evalharness.consistency_report(scores)
    summary = {
        "trials": len(scores),
        "passes": sum(s.trial_pass for s in scores),
        "trial_log": str(log_path),
        "report": str(report_path),
        "agreement": None if consistency.agreement is None
        else evalharness.render_percent(consistency.agreement),
        "note": consistency.note,
    }
    _emit(summary, as_json,
          f"{summary['trials']} trials, {summary['passes']} passes -> {log_path}")


@main.command("synth")
@click.argument("spec_path", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def synth_cmd(cfg: PipelineConfig, spec_path: str, out_dir: Optional[str], as_json: bool) -> None:
    """Generate a synthetic corpus from a TOML generator spec."""
    try:
        with open(spec_path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        _die(EXIT_INPUT, f"IoError: {exc}", as_json)
    except tomllib.TOMLDecodeError as exc:
        _die(EXIT_INPUT, f"malformed spec: {exc}", as_json)

    try:
        for key in ("chain_length_range", "follower_speed_margin_kmh",
                    "lead_speed_range_kmh", "sample_periods_sec"):
            if key in raw:
                raw[key] = tuple(raw[key])
        spec = synth.GeneratorSpec(**_fields_only(synth.GeneratorSpec, raw, "spec"))
        corpus = synth.generate(spec)
    except (TypeError, synth.SpecError, ConfigError) as exc:
        _die(EXIT_CONFIG, str(exc), as_json)

    out = pathlib.Path(out_dir or cfg.output_dir)
    written = []
    try:
        for case in corpus:
            path = out / f"{case.case_id}.case.json"
            _atomic_write(path, ingest.emit_case(case))
            written.append(path.name)
        manifest = {
            "spec": {f.name: getattr(spec, f.name) for f in dataclasses.fields(spec)},
            "regenerations": corpus.regenerations,
            "cases": written,
        }
        _atomic_write(out / "manifest.json",
                      (json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n").encode())
    except OSError as exc:
        _die(EXIT_INPUT, f"IoError: {exc}", as_json)
    _emit(manifest, as_json, f"{len(written)} cases -> {out} (regenerations: {corpus.regenerations})")


@main.command()
@click.argument("trial_log", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv", "json"]),
              default="markdown", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write to a file instead of standard output.")
@click.option("--json", "as_json", is_flag=True, help="Shorthand for --format json.")
def report(trial_log: str, fmt: str, out_path: Optional[str], as_json: bool) -> None:
    """Summarize a trial log into a metrics report."""
    if as_json:
        fmt = "json"
    try:
        with open(trial_log, "r", encoding="utf-8") as fh:
            scores = evalharness.read_trial_log(fh)
    except OSError as exc:
        _die(EXIT_INPUT, f"IoError: {exc}", as_json)
    except (json.JSONDecodeError, KeyError) as exc:
        _die(EXIT_INPUT, f"malformed trial log: {exc}", as_json)
    data = evalharness.emit_report(evalharness.summarize(scores), scores, fmt)
    if out_path:
        try:
            _atomic_write(pathlib.Path(out_path), data)
        except OSError as exc:
            _die(EXIT_INPUT, f"IoError: {exc}", as_json)
    else:
        click.echo(data.decode("utf-8"), nl=False)


if __name__ == "__main__":
    main()
