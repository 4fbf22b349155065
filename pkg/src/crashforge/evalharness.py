"""Trial scoring, campaign execution, and report emission.

A trial passes only if all four outputs (striking vehicle, struck vehicle,
and both EDR selections) are correct; one wrong field fails the whole
trial. Metrics keep exact rationals internally and round half-up to two
decimals only when rendered.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .agent import BackendProfile, MockTransport, Transport, mock_profile, run_pipeline
from .edr import AlignmentConfig, ConfigError, cluster_overlaps
from .infer import infer_first_crash
from .model import (
    CrashCase,
    DomainError,
    FirstCrashFinding,
    LabelKind,
    STRATUM_COMPLICATED,
    STRATUM_SIMPLE,
)

FIELD_NAMES = ("striking_vehno", "struck_vehno", "striking_edr", "struck_edr")


class Mode(Enum):
    DETERMINISTIC = "deterministic"
    AGENT = "agent"


@dataclass(frozen=True)
class TrialScore:
    case_id: str
    backend: str
    trial_index: int
    predicted: Optional[FirstCrashFinding]
    truth: FirstCrashFinding
    field_correct: tuple[bool, bool, bool, bool]
    trial_pass: bool
    latency_phase1_sec: float = 0.0
    latency_phase2_sec: float = 0.0
    stratum: str = STRATUM_SIMPLE
    error: Optional[str] = None


def score_trial(
    predicted: Optional[FirstCrashFinding],
    truth: FirstCrashFinding,
    *,
    case_id: str = "",
    backend: str = "",
    trial_index: int = 0,
    stratum: str = STRATUM_SIMPLE,
    latency_phase1_sec: float = 0.0,
    latency_phase2_sec: float = 0.0,
    error: Optional[str] = None,
) -> TrialScore:
    """All-or-nothing scoring; an absent EDR selection (None) on both sides
    counts as a correct field. A failed trial with no prediction scores all
    four fields false."""
    if predicted is None:
        correct = (False, False, False, False)
    else:
        correct = (
            predicted.striking_vehno == truth.striking_vehno,
            predicted.struck_vehno == truth.struck_vehno,
            predicted.striking_edr == truth.striking_edr,
            predicted.struck_edr == truth.struck_edr,
        )
    return TrialScore(
        case_id=case_id,
        backend=backend,
        trial_index=trial_index,
        predicted=predicted,
        truth=truth,
        field_correct=correct,
        trial_pass=all(correct),
        latency_phase1_sec=latency_phase1_sec,
        latency_phase2_sec=latency_phase2_sec,
        stratum=stratum,
        error=error,
    )


def compute_stratum(case: CrashCase, cfg: Optional[AlignmentConfig] = None) -> str:
    """Complicated iff some vehicle's surviving records map many-to-one onto
    a crash event, or an overlap cluster mixes records with different event
    labels (a label error)."""
    cfg = cfg or AlignmentConfig()
    for vehicle in case.vehicles:
        survivors = [
            r for r in case.records_for(vehicle.vehno)
            if r.db_label.kind is LabelKind.MAPPED
        ]
        by_event: dict[int, int] = {}
        for rec in survivors:
            by_event[rec.db_label.eventno] = by_event.get(rec.db_label.eventno, 0) + 1
        if any(n > 1 for n in by_event.values()):
            return STRATUM_COMPLICATED
        if len(survivors) > 1:
            labels = {r.key: r.db_label.eventno for r in survivors}
            for cluster in cluster_overlaps(survivors, cfg):
                if len({labels[k] for k in cluster.members}) > 1:
                    return STRATUM_COMPLICATED
    return STRATUM_SIMPLE


def _case_stratum(case: CrashCase) -> str:
    return case.stratum if case.stratum is not None else compute_stratum(case)


def run_campaign(
    corpus: Sequence[CrashCase],
    backends: Sequence[BackendProfile] = (),
    trials_per_case: int = 1,
    mode: Mode = Mode.DETERMINISTIC,
    transport: Optional[Transport] = None,
    parallelism: int = 1,
    sleep: Callable[[float], None] = time.sleep,
) -> list[TrialScore]:
    """Runs |corpus| trials in Deterministic mode, or
    |corpus| x |backends| x trials_per_case in Agent mode. Backend failures
    become failed trials with an error annotation; they never abort the
    campaign. Results are ordered by (case, backend, trial) regardless of
    completion order."""
    if trials_per_case < 1:
        raise ConfigError("trials_per_case must be >= 1")
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    for case in corpus:
        if case.ground_truth is None:
            raise ConfigError(f"case {case.case_id} has no ground truth")

    if mode is Mode.DETERMINISTIC:
        scores = []
        for case in corpus:
            start = time.perf_counter()
            try:
                predicted: Optional[FirstCrashFinding] = infer_first_crash(case)
                error = None
            except DomainError as exc:
                predicted, error = None, f"{type(exc).__name__}: {exc}"
            scores.append(
                score_trial(
                    predicted,
                    case.ground_truth,
                    case_id=case.case_id,
                    backend="deterministic",
                    trial_index=0,
                    stratum=_case_stratum(case),
                    latency_phase2_sec=time.perf_counter() - start,
                    error=error,
                )
            )
        return scores

    if not backends:
        backends = [mock_profile()]
    if transport is None:
        transport = MockTransport({c.case_id: c for c in corpus})

    jobs = [
        (case, profile, trial)
        for case in corpus
        for profile in backends
        for trial in range(trials_per_case)
    ]

    def run_one(job) -> TrialScore:
        case, profile, trial = job
        try:
            finding, lat1, lat2 = run_pipeline(case, profile, transport, sleep=sleep)
            return score_trial(
                finding,
                case.ground_truth,
                case_id=case.case_id,
                backend=profile.name,
                trial_index=trial,
                stratum=_case_stratum(case),
                latency_phase1_sec=lat1,
                latency_phase2_sec=lat2,
            )
        except DomainError as exc:
            return score_trial(
                None,
                case.ground_truth,
                case_id=case.case_id,
                backend=profile.name,
                trial_index=trial,
                stratum=_case_stratum(case),
                error=f"{type(exc).__name__}: {exc}",
            )

    if parallelism == 1:
        return [run_one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(run_one, jobs))


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    minimum: float
    maximum: float


@dataclass(frozen=True)
class StratumMetrics:
    trials: int
    passes: int
    accuracy: Fraction
    precision: Fraction
    recall: Fraction
    f1: Fraction
    # confusion over trial pass/fail: every trial's expected label is "pass"
    confusion: tuple[int, int, int, int]  # tp, fp, fn, tn


@dataclass(frozen=True)
class MetricsTable:
    per_stratum: dict[str, StratumMetrics]
    overall: Optional[StratumMetrics]
    per_backend: dict[str, tuple[int, int]]  # trials, passes
    latency: dict[str, LatencyStats]  # phase name -> stats


def _metrics(trials: int, passes: int) -> StratumMetrics:
    fails = trials - passes
    accuracy = Fraction(passes, trials) if trials else Fraction(0)
    # every trial is a positive instance: TP = passes, FN = fails, FP = TN = 0
    precision = Fraction(1) if passes else Fraction(0)
    recall = accuracy
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else Fraction(0)
    )
    return StratumMetrics(trials, passes, accuracy, precision, recall, f1,
                          (passes, 0, fails, 0))


def _latency(values: Sequence[float]) -> Optional[LatencyStats]:
    if not values:
        return None
    return LatencyStats(sum(values) / len(values), min(values), max(values))


def summarize(scores: Sequence[TrialScore]) -> MetricsTable:
    per_stratum: dict[str, StratumMetrics] = {}
    for stratum in (STRATUM_SIMPLE, STRATUM_COMPLICATED):
        subset = [s for s in scores if s.stratum == stratum]
        if subset:
            per_stratum[stratum] = _metrics(len(subset), sum(s.trial_pass for s in subset))
    overall = _metrics(len(scores), sum(s.trial_pass for s in scores)) if scores else None
    per_backend: dict[str, tuple[int, int]] = {}
    for s in scores:
        trials, passes = per_backend.get(s.backend, (0, 0))
        per_backend[s.backend] = (trials + 1, passes + s.trial_pass)
    latency = {}
    for phase, values in (
        ("Phase I", [s.latency_phase1_sec for s in scores]),
        ("Phase II", [s.latency_phase2_sec for s in scores]),
    ):
        stats = _latency(values)
        if stats is not None:
            latency[phase] = stats
    return MetricsTable(per_stratum, overall, per_backend, latency)


def render_percent(value: Fraction) -> str:
    return str((Decimal(value.numerator) * 100 / Decimal(value.denominator))
               .quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_ratio(value: Fraction) -> str:
    return str((Decimal(value.numerator) / Decimal(value.denominator))
               .quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)) if value.denominator else "0.00"


@dataclass(frozen=True)
class ConsistencyReport:
    per_case: dict[str, bool]
    agreement: Optional[Fraction]
    note: str = ""


def consistency_report(scores: Sequence[TrialScore]) -> ConsistencyReport:
    """Per-case agreement across (backend, trial) observations."""
    by_case: dict[str, list[TrialScore]] = {}
    for s in scores:
        by_case.setdefault(s.case_id, []).append(s)

    if all(len(group) < 2 for group in by_case.values()):
        return ConsistencyReport(
            per_case={cid: True for cid in by_case},
            agreement=None,
            note="agreement undefined (1 observation per case)",
        )

    per_case: dict[str, bool] = {}
    for cid, group in by_case.items():
        first = group[0].predicted
        per_case[cid] = all(
            (s.predicted is None and first is None)
            or (s.predicted is not None and first is not None and s.predicted.same_outputs(first))
            for s in group
        )
    agreement = Fraction(sum(per_case.values()), len(per_case)) if per_case else None
    return ConsistencyReport(per_case=per_case, agreement=agreement)


def _score_row(s: TrialScore) -> dict:
    return {
        "case_id": s.case_id,
        "backend": s.backend,
        "trial_index": s.trial_index,
        "stratum": s.stratum,
        "trial_pass": s.trial_pass,
        **{f"correct_{name}": bool(ok) for name, ok in zip(FIELD_NAMES, s.field_correct)},
        "predicted": None if s.predicted is None else {
            name: getattr(s.predicted, name) for name in FIELD_NAMES
        },
        "truth": {name: getattr(s.truth, name) for name in FIELD_NAMES},
        "latency_phase1_sec": s.latency_phase1_sec,
        "latency_phase2_sec": s.latency_phase2_sec,
        "error": s.error,
    }


def write_trial_log(scores: Sequence[TrialScore], stream) -> None:
    """One TrialScore per line, JSON."""
    for s in scores:
        stream.write(json.dumps(_score_row(s), sort_keys=True) + "\n")


def _finding_from_row(raw: Optional[dict]) -> Optional[FirstCrashFinding]:
    if raw is None:
        return None
    return FirstCrashFinding(
        striking_vehno=raw["striking_vehno"],
        struck_vehno=raw["struck_vehno"],
        striking_edr=raw["striking_edr"],
        struck_edr=raw["struck_edr"],
    )


def read_trial_log(stream) -> list[TrialScore]:
    """Inverse of write_trial_log over the scored fields."""
    scores = []
    for line in stream:
        if not line.strip():
            continue
        row = json.loads(line)
        scores.append(
            TrialScore(
                case_id=row["case_id"],
                backend=row["backend"],
                trial_index=row["trial_index"],
                predicted=_finding_from_row(row["predicted"]),
                truth=_finding_from_row(row["truth"]),
                field_correct=tuple(row[f"correct_{name}"] for name in FIELD_NAMES),
                trial_pass=row["trial_pass"],
                latency_phase1_sec=row["latency_phase1_sec"],
                latency_phase2_sec=row["latency_phase2_sec"],
                stratum=row["stratum"],
                error=row["error"],
            )
        )
    return scores


def _stratum_lines(label: str, m: StratumMetrics) -> list[str]:
    tp, fp, fn, tn = m.confusion
    return [
        f"### {label}",
        "",
        f"- Trials: {m.trials}",
        f"- Passes: {m.passes}",
        f"- Accuracy: {render_percent(m.accuracy)}%",
        f"- Precision: {render_ratio(m.precision)}",
        f"- Recall: {render_ratio(m.recall)}",
        f"- F1: {render_ratio(m.f1)}",
        "",
        "| | Predicted pass | Predicted fail |",
        "|---|---|---|",
        f"| Actual pass | {tp} | {fn} |",
        f"| Actual fail | {fp} | {tn} |",
        "",
    ]


def emit_report(metrics: MetricsTable, scores: Sequence[TrialScore], format: str) -> bytes:
    if format == "markdown":
        lines = ["# Campaign Report", ""]
        if metrics.overall is not None:
            lines += _stratum_lines("Overall", metrics.overall)
        for stratum, m in metrics.per_stratum.items():
            lines += _stratum_lines(stratum.capitalize(), m)
        if metrics.per_backend:
            lines += ["### Per backend", "", "| Backend | Trials | Passes |", "|---|---|---|"]
            for name in sorted(metrics.per_backend):
                trials, passes = metrics.per_backend[name]
                lines.append(f"| {name} | {trials} | {passes} |")
            lines.append("")
        if metrics.latency:
            lines += ["### Latency (seconds)", "", "| Phase | Mean | Min | Max |", "|---|---|---|---|"]
            for phase, stats in metrics.latency.items():
                lines.append(
                    f"| {phase} | {stats.mean:.4f} | {stats.minimum:.4f} | {stats.maximum:.4f} |"
                )
            lines.append("")
        return ("\n".join(lines) + "\n").encode()

    if format == "csv":
        buf = io.StringIO()
        fields = [
            "case_id", "backend", "trial_index", "stratum", "trial_pass",
            *[f"correct_{name}" for name in FIELD_NAMES],
            "latency_phase1_sec", "latency_phase2_sec", "error",
        ]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for s in scores:
            row = _score_row(s)
            writer.writerow({k: row[k] for k in fields})
        return buf.getvalue().encode()

    if format == "json":
        doc = {
            "overall": None,
            "per_stratum": {},
            "per_backend": {
                name: {"trials": t, "passes": p}
                for name, (t, p) in sorted(metrics.per_backend.items())
            },
            "latency": {
                phase: {"mean": st.mean, "min": st.minimum, "max": st.maximum}
                for phase, st in metrics.latency.items()
            },
            "scores": [_score_row(s) for s in scores],
        }

        def stratum_doc(m: StratumMetrics) -> dict:
            return {
                "trials": m.trials,
                "passes": m.passes,
                "accuracy_pct": render_percent(m.accuracy),
                "precision": render_ratio(m.precision),
                "recall": render_ratio(m.recall),
                "f1": render_ratio(m.f1),
                "confusion": list(m.confusion),
            }

        if metrics.overall is not None:
            doc["overall"] = stratum_doc(metrics.overall)
        for stratum, m in metrics.per_stratum.items():
            doc["per_stratum"][stratum] = stratum_doc(m)
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()

    raise ConfigError(f"unknown report format {format!r}")
