"""Canonical on-disk case format: `*.case.json`.

Parse and emit are exact inverses for valid cases; emit output is
byte-deterministic (fixed key order, shortest round-trip numbers, integral
floats written as integers). Schema errors carry a JSON-pointer-style path
to the offending node.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass
from typing import Any, Optional

from .model import (
    CHANNEL_UNITS,
    CrashCase,
    CrashEvent,
    DomainError,
    EdrRecord,
    EnvironmentRecord,
    EventLabel,
    FirstCrashFinding,
    Plane,
    SceneDiagramRef,
    TimeSeries,
    Vehicle,
    require_valid,
)

SCHEMA_VERSION = "1"


class IngestError(DomainError):
    pass


class CaseSyntaxError(IngestError):
    """Malformed document (not JSON at all)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(IngestError):
    """Missing or mistyped field; `path` locates the offending node."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class VersionError(IngestError):
    def __init__(self, version: Any):
        super().__init__(f"unknown schema_version: {version!r}")
        self.version = version


def _expect(obj: Any, path: str, kind: type, what: str) -> Any:
    if kind is float:
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return float(obj)
        raise SchemaError(path, f"expected number for {what}, got {type(obj).__name__}")
    if kind is int:
        if isinstance(obj, int) and not isinstance(obj, bool):
            return obj
        raise SchemaError(path, f"expected integer for {what}, got {type(obj).__name__}")
    if not isinstance(obj, kind):
        raise SchemaError(path, f"expected {kind.__name__} for {what}, got {type(obj).__name__}")
    return obj


def _get(obj: dict, path: str, key: str, kind: type, what: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{path}/{key}", f"missing required field {key!r}")
    return _expect(obj[key], f"{path}/{key}", kind, what)


def _check_keys(obj: dict, path: str, allowed: set[str], strict: bool) -> None:
    if not strict:
        return
    unknown = set(obj) - allowed
    if unknown:
        name = sorted(unknown)[0]
        raise SchemaError(f"{path}/{name}", f"unknown field {name!r}")


def _parse_series(raw: Any, path: str, unit: str) -> TimeSeries:
    _expect(raw, path, list, "sample list")
    samples = []
    prev_t: Optional[float] = None
    for i, pair in enumerate(raw):
        _expect(pair, f"{path}/{i}", list, "sample pair")
        if len(pair) != 2:
            raise SchemaError(f"{path}/{i}", "sample must be a [t, value] pair")
        t = _expect(pair[0], f"{path}/{i}/0", float, "sample time")
        v = _expect(pair[1], f"{path}/{i}/1", float, "sample value")
        if prev_t is not None and t <= prev_t:
            raise SchemaError(f"{path}/{i}/0", "non-increasing time")
        prev_t = t
        samples.append((t, v))
    return TimeSeries(tuple(samples), unit)


def _parse_label(raw: Any, path: str) -> EventLabel:
    if raw == "not_related":
        return EventLabel.not_related()
    if raw == "related_unknown":
        return EventLabel.related_unknown()
    if isinstance(raw, dict) and set(raw) == {"mapped_event"}:
        return EventLabel.mapped(_get(raw, path, "mapped_event", int, "event number"))
    raise SchemaError(
        path,
        'expected {"mapped_event": n}, "not_related" or "related_unknown"',
    )


def _parse_finding(raw: Any, path: str) -> FirstCrashFinding:
    _expect(raw, path, dict, "finding object")
    _check_keys(raw, path, {"striking_vehno", "struck_vehno", "striking_edr", "struck_edr", "rationale"}, True)
    edr: dict[str, Optional[int]] = {}
    for key in ("striking_edr", "struck_edr"):
        if key not in raw:
            raise SchemaError(f"{path}/{key}", f"missing required field {key!r}")
        edr[key] = None if raw[key] is None else _expect(raw[key], f"{path}/{key}", int, "EDREVENTNO")
    rationale = raw.get("rationale", [])
    _expect(rationale, f"{path}/rationale", list, "rationale list")
    return FirstCrashFinding(
        striking_vehno=_get(raw, path, "striking_vehno", int, "VEHNO"),
        struck_vehno=_get(raw, path, "struck_vehno", int, "VEHNO"),
        striking_edr=edr["striking_edr"],
        struck_edr=edr["struck_edr"],
        rationale=tuple(_expect(s, f"{path}/rationale/{i}", str, "rationale line")
                        for i, s in enumerate(rationale)),
    )


_TOP_KEYS = {
    "schema_version",
    "case_id",
    "stratum",
    "vehicles",
    "events",
    "environments",
    "edr_records",
    "scene_diagram",
    "ground_truth",
}


def parse_case(data: bytes | str, strict: bool = True) -> CrashCase:
    """Parses one canonical case document.

    Raises CaseSyntaxError / SchemaError / VersionError; does not run
    cross-record validation (see model.validate_case)."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CaseSyntaxError(f"not UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(exc.msg, exc.lineno, exc.colno) from exc

    _expect(doc, "", dict, "case document")
    version = _get(doc, "", "schema_version", str, "schema version")
    if version != SCHEMA_VERSION:
        raise VersionError(version)
    _check_keys(doc, "", _TOP_KEYS, strict)

    vehicles = []
    for i, raw in enumerate(_get(doc, "", "vehicles", list, "vehicle list")):
        path = f"/vehicles/{i}"
        _expect(raw, path, dict, "vehicle")
        _check_keys(raw, path, {"vehno", "vehicle_class", "damage_planes"}, strict)
        planes = _get(raw, path, "damage_planes", list, "plane list")
        vehicles.append(
            Vehicle(
                vehno=_get(raw, path, "vehno", int, "VEHNO"),
                vehicle_class=_get(raw, path, "vehicle_class", str, "vehicle class"),
                damage_planes=frozenset(
                    Plane.parse(_expect(p, f"{path}/damage_planes/{j}", str, "plane"))
                    for j, p in enumerate(planes)
                ),
            )
        )

    events = []
    for i, raw in enumerate(_get(doc, "", "events", list, "event list")):
        path = f"/events/{i}"
        _expect(raw, path, dict, "event")
        _check_keys(raw, path, {"eventno", "actor_vehno", "actor_plane", "target_vehno", "target_plane"}, strict)
        events.append(
            CrashEvent(
                eventno=_get(raw, path, "eventno", int, "EVENTNO"),
                actor_vehno=_get(raw, path, "actor_vehno", int, "VEHNO"),
                actor_plane=Plane.parse(_get(raw, path, "actor_plane", str, "plane")),
                target_vehno=_get(raw, path, "target_vehno", int, "VEHNO"),
                target_plane=Plane.parse(_get(raw, path, "target_plane", str, "plane")),
            )
        )

    environments = []
    for i, raw in enumerate(_get(doc, "", "environments", list, "environment list")):
        path = f"/environments/{i}"
        _expect(raw, path, dict, "environment")
        _check_keys(raw, path, {"vehno", "speed_limit_kmh", "trafficway_flow", "travel_lanes", "extra"}, strict)
        extra = raw.get("extra", [])
        _expect(extra, f"{path}/extra", list, "extra attribute list")
        pairs = []
        for j, kv in enumerate(extra):
            _expect(kv, f"{path}/extra/{j}", list, "key-value pair")
            if len(kv) != 2:
                raise SchemaError(f"{path}/extra/{j}", "extra entry must be a [key, value] pair")
            pairs.append((
                _expect(kv[0], f"{path}/extra/{j}/0", str, "key"),
                _expect(kv[1], f"{path}/extra/{j}/1", str, "value"),
            ))
        environments.append(
            EnvironmentRecord(
                vehno=_get(raw, path, "vehno", int, "VEHNO"),
                speed_limit_kmh=_get(raw, path, "speed_limit_kmh", float, "speed limit"),
                trafficway_flow=_get(raw, path, "trafficway_flow", str, "trafficway flow"),
                travel_lanes=_get(raw, path, "travel_lanes", str, "travel lanes"),
                extra=tuple(pairs),
            )
        )

    records = []
    for i, raw in enumerate(_get(doc, "", "edr_records", list, "EDR record list")):
        path = f"/edr_records/{i}"
        _expect(raw, path, dict, "EDR record")
        _check_keys(raw, path, {"vehno", "edr_event_no", "channels", "db_label"}, strict)
        channels_raw = _get(raw, path, "channels", dict, "channel map")
        channels = {}
        for name in channels_raw:
            unit = CHANNEL_UNITS.get(name, "")
            channels[name] = _parse_series(channels_raw[name], f"{path}/channels/{name}", unit)
        if "db_label" not in raw:
            raise SchemaError(f"{path}/db_label", "missing required field 'db_label'")
        records.append(
            EdrRecord(
                vehno=_get(raw, path, "vehno", int, "VEHNO"),
                edr_event_no=_get(raw, path, "edr_event_no", int, "EDREVENTNO"),
                channels=channels,
                db_label=_parse_label(raw["db_label"], f"{path}/db_label"),
            )
        )

    diagram = None
    if doc.get("scene_diagram") is not None:
        raw = doc["scene_diagram"]
        path = "/scene_diagram"
        _expect(raw, path, dict, "scene diagram reference")
        _check_keys(raw, path, {"path", "media_type"}, strict)
        diagram = SceneDiagramRef(
            path=_get(raw, path, "path", str, "relative path"),
            media_type=_get(raw, path, "media_type", str, "media type"),
        )

    truth = None
    if doc.get("ground_truth") is not None:
        truth = _parse_finding(doc["ground_truth"], "/ground_truth")

    stratum = None
    if doc.get("stratum") is not None:
        stratum = _expect(doc["stratum"], "/stratum", str, "stratum tag")

    return CrashCase(
        case_id=_get(doc, "", "case_id", str, "case id"),
        vehicles=tuple(vehicles),
        events=tuple(events),
        environments=tuple(environments),
        edr_records=tuple(records),
        scene_diagram=diagram,
        ground_truth=truth,
        stratum=stratum,
    )


def _num(x: float):
    # integral floats serialize as integers, for stable diff-friendly output
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x


def _finding_doc(f: FirstCrashFinding) -> dict:
    return {
        "striking_vehno": f.striking_vehno,
        "struck_vehno": f.struck_vehno,
        "striking_edr": f.striking_edr,
        "struck_edr": f.struck_edr,
        "rationale": list(f.rationale),
    }


def case_to_doc(case: CrashCase) -> dict:
    """The case as a canonical plain-dict document (fixed key order)."""
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "case_id": case.case_id,
    }
    if case.stratum is not None:
        doc["stratum"] = case.stratum
    doc["vehicles"] = [
        {
            "vehno": v.vehno,
            "vehicle_class": v.vehicle_class,
            "damage_planes": sorted(str(p) for p in v.damage_planes),
        }
        for v in case.vehicles
    ]
    doc["events"] = [
        {
            "eventno": e.eventno,
            "actor_vehno": e.actor_vehno,
            "actor_plane": str(e.actor_plane),
            "target_vehno": e.target_vehno,
            "target_plane": str(e.target_plane),
        }
        for e in case.events
    ]
    doc["environments"] = [
        {
            "vehno": env.vehno,
            "speed_limit_kmh": _num(env.speed_limit_kmh),
            "trafficway_flow": env.trafficway_flow,
            "travel_lanes": env.travel_lanes,
            "extra": [[k, v] for k, v in env.extra],
        }
        for env in case.environments
    ]
    doc["edr_records"] = [
        {
            "vehno": r.vehno,
            "edr_event_no": r.edr_event_no,
            "channels": {
                name: [[_num(t), _num(v)] for t, v in r.channels[name].samples]
                for name in sorted(r.channels)
            },
            "db_label": (
                {"mapped_event": r.db_label.eventno}
                if r.db_label.eventno is not None
                else r.db_label.kind.value
            ),
        }
        for r in case.edr_records
    ]
    if case.scene_diagram is not None:
        doc["scene_diagram"] = {
            "path": case.scene_diagram.path,
            "media_type": case.scene_diagram.media_type,
        }
    if case.ground_truth is not None:
        doc["ground_truth"] = _finding_doc(case.ground_truth)
    return doc


def emit_case(case: CrashCase) -> bytes:
    """Serializes a validating case; deterministic bytes for equal cases."""
    require_valid(case)
    text = json.dumps(case_to_doc(case), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


@dataclass
class CorpusEntry:
    path: pathlib.Path
    case: Optional[CrashCase] = None
    error: Optional[IngestError] = None

    @property
    def case_id(self) -> str:
        if self.case is not None:
            return self.case.case_id
        return self.path.name.removesuffix(".case.json")


def load_corpus(directory, strict: bool = True) -> list[CorpusEntry]:
    """Loads every `*.case.json` under `directory`, lexicographic order.

    Per-file parse failures are captured in the entry, never raised."""
    root = pathlib.Path(directory)
    if not root.is_dir():
        raise IOError(f"not a directory: {root}")
    entries = []
    for path in sorted(root.glob("*.case.json")):
        try:
            entries.append(CorpusEntry(path, case=parse_case(path.read_bytes(), strict=strict)))
        except IngestError as exc:
            entries.append(CorpusEntry(path, error=exc))
    return entries
