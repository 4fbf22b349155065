"""Two-phase agent orchestration.

Phase I turns the scene description (plus optional diagram) into a
structured reconstruction; Phase II combines that reconstruction with the
EDR report and asks for the four first-crash outputs as JSON. All prompt
text lives in versioned template assets so goldens can pin exact bytes.

Backends are pluggable transports. The in-tree mock transport answers both
phases deterministically and, for Phase II, defers to the rule engine, so
the full loop runs offline.
"""

from __future__ import annotations

import json
import os
import random
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Callable, Mapping, Optional

import requests

from .encode import EdrReportDoc, SceneDescriptionDoc, encode_edr_report, encode_scene_description
from .model import CrashCase, DomainError, FirstCrashFinding, require_valid

TEMPLATE_VERSION = "1"

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class AgentError(DomainError):
    pass


class TemplateError(AgentError):
    pass


class EmptyInput(AgentError):
    pass


class ParseError(AgentError):
    pass


class SchemaError(AgentError):
    pass


class UnsupportedImage(AgentError):
    pass


class AuthError(AgentError):
    pass


class TransportError(AgentError):
    pass


class TimeoutError(TransportError):  # noqa: A001 - mirrors the transport error family
    pass


class TransientFailure(Exception):
    """Raised by a transport to request a retry."""


class Phase(Enum):
    PHASE_I = "PhaseI"
    PHASE_II = "PhaseII"


@dataclass(frozen=True)
class PromptBundle:
    phase: Phase
    system_text: str
    user_text: str
    image: Optional[bytes] = None
    template_version: str = TEMPLATE_VERSION


@dataclass(frozen=True)
class BackendProfile:
    name: str
    endpoint: str
    model_id: str
    credential: Optional[str] = None  # name of an environment variable, never the secret
    supports_images: bool = False
    request_timeout_sec: float = 60.0
    max_retries: int = 3
    response_path: str = "choices.0.message.content"


def mock_profile(name: str = "mock") -> BackendProfile:
    return BackendProfile(name=name, endpoint="mock://local", model_id="mock-1",
                          supports_images=True)


@dataclass(frozen=True)
class ReconstructionDoc:
    scene_location: str
    vehicle_information: tuple[str, ...]
    accident_process: str

    def as_markdown(self) -> str:
        vehicles = "\n".join(self.vehicle_information)
        return (
            f"## A. Scene Location Analysis\n{self.scene_location}\n\n"
            f"## B. Vehicle Information Identification\n{vehicles}\n\n"
            f"## C. Accident Process Reconstruction\n{self.accident_process}\n"
        )


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files("crashforge") / "templates" / name).read_text(encoding="utf-8")


def _render(template: str, values: Mapping[str, str]) -> str:
    def sub(m: re.Match) -> str:
        key = m.group(1)
        if key not in values:
            raise TemplateError(f"no value for placeholder {{{{{key}}}}}")
        return values[key]

    return _PLACEHOLDER.sub(sub, template)


def build_phase1_prompt(case: CrashCase, supports_images: bool = True) -> PromptBundle:
    require_valid(case)
    scene = encode_scene_description(case)
    image = None
    if case.scene_diagram is not None and supports_images:
        try:
            image = case.scene_diagram.load()
        except OSError:
            image = None
        note = (
            "A scene diagram is attached alongside this message."
            if image is not None
            else "A scene diagram exists for this case but could not be read; rely on the textual records."
        )
    elif case.scene_diagram is not None:
        note = "A scene diagram exists for this case but cannot be attached; rely on the textual records."
    else:
        note = "No scene diagram is available for this case; rely on the textual records alone."
    user = _render(
        _template("phase1.user.tmpl"),
        {"scene_description": scene.text.rstrip("\n"), "diagram_note": note},
    )
    return PromptBundle(
        phase=Phase.PHASE_I,
        system_text=_template("phase1.system.txt"),
        user_text=user,
        image=image,
    )


def build_phase2_prompt(reconstruction: ReconstructionDoc, edr_report: EdrReportDoc) -> PromptBundle:
    if not reconstruction.scene_location.strip() or not reconstruction.accident_process.strip():
        raise EmptyInput("reconstruction has an empty section")
    if not edr_report.text.strip():
        raise EmptyInput("EDR report is empty")
    user = _render(
        _template("phase2.user.tmpl"),
        {
            "reconstruction": reconstruction.as_markdown().rstrip("\n"),
            "edr_report": edr_report.text.rstrip("\n"),
        },
    )
    return PromptBundle(phase=Phase.PHASE_II, system_text="", user_text=user)


Transport = Callable[[PromptBundle, BackendProfile], str]


def _extract_path(doc, path: str):
    cur = doc
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        elif isinstance(cur, Mapping) and part in cur:
            cur = cur[part]
        else:
            raise TransportError(f"response has no element at {path!r}")
    if not isinstance(cur, str):
        raise TransportError(f"response element at {path!r} is not text")
    return cur


def http_transport(bundle: PromptBundle, profile: BackendProfile) -> str:
    messages = [{"role": "system", "text": bundle.system_text},
                {"role": "user", "text": bundle.user_text}]
    if bundle.image is not None:
        messages[1]["image"] = True
    headers = {}
    if profile.credential:
        headers["Authorization"] = f"Bearer {os.environ[profile.credential]}"
    try:
        resp = requests.post(
            profile.endpoint,
            json={"model": profile.model_id, "messages": messages},
            headers=headers,
            timeout=profile.request_timeout_sec,
        )
    except requests.Timeout as exc:
        raise TimeoutError(str(exc)) from exc
    except requests.RequestException as exc:
        raise TransientFailure(str(exc)) from exc
    if resp.status_code in (401, 403):
        raise AuthError(f"backend rejected credentials ({resp.status_code})")
    if resp.status_code >= 500 or resp.status_code == 429:
        raise TransientFailure(f"backend status {resp.status_code}")
    if resp.status_code != 200:
        raise TransportError(f"backend status {resp.status_code}")
    return _extract_path(resp.json(), profile.response_path)


@dataclass
class MockTransport:
    """Deterministic offline backend.

    Phase I replies are synthesized from the scene description embedded in
    the prompt. Phase II replies defer to the rule engine on the case named
    by the embedded EDR report, so the agent loop reproduces deterministic
    inference without network access."""

    corpus: Mapping[str, CrashCase] = field(default_factory=dict)
    fixed_reply: Optional[str] = None

    def __call__(self, bundle: PromptBundle, profile: BackendProfile) -> str:
        if self.fixed_reply is not None:
            return self.fixed_reply
        if bundle.phase is Phase.PHASE_I:
            return self._phase1_reply(bundle.user_text)
        return self._phase2_reply(bundle.user_text)

    def _phase1_reply(self, prompt: str) -> str:
        vehicles = [
            line.strip() for line in prompt.splitlines()
            if line.startswith("## VEHNO=") or line.strip().startswith("### Class of Vehicle")
            or line.strip().startswith("### Damage Plane")
        ]
        events = [line for line in prompt.splitlines() if re.match(r"EVENTNO\d+:", line)]
        env = [line.strip() for line in prompt.splitlines() if line.strip().startswith("SPEEDLIMIT")]
        location = "Roadway per records. " + "; ".join(env) if env else "Roadway per records."
        process = "Reconstructed sequence:\n" + "\n".join(events)
        return (
            "## A. Scene Location Analysis\n" + location + "\n\n"
            "## B. Vehicle Information Identification\n" + "\n".join(vehicles) + "\n\n"
            "## C. Accident Process Reconstruction\n" + process + "\n"
        )

    def _phase2_reply(self, prompt: str) -> str:
        from .infer import infer_first_crash

        m = re.search(r"CASEID=([^)\s]+)\)", prompt)
        if not m or m.group(1) not in self.corpus:
            raise TransportError("mock transport: case not in corpus")
        finding = infer_first_crash(self.corpus[m.group(1)])
        doc = {
            "striking_vehno": finding.striking_vehno,
            "struck_vehno": finding.struck_vehno,
            "striking_edr": finding.striking_edr,
            "struck_edr": finding.struck_edr,
            "rationale": list(finding.rationale),
        }
        return (
            "Based on the reconstruction and the EDR report, the determination is:\n\n"
            + json.dumps(doc, indent=2)
            + "\n"
        )


def dispatch(
    bundle: PromptBundle,
    profile: BackendProfile,
    transport: Optional[Transport] = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: Optional[random.Random] = None,
) -> tuple[str, float]:
    """Sends a bundle to a backend, retrying transient failures with
    exponential backoff (1 s initial, factor 2, jitter +/-20%)."""
    if bundle.image is not None and not profile.supports_images:
        raise UnsupportedImage(f"backend {profile.name} does not accept images")
    if profile.credential and profile.credential not in os.environ:
        raise AuthError(f"environment variable {profile.credential} is not set")
    transport = transport or http_transport
    rng = rng or random.Random()

    start = time.perf_counter()
    last: Optional[Exception] = None
    for attempt in range(profile.max_retries + 1):
        try:
            text = transport(bundle, profile)
            return text, time.perf_counter() - start
        except TransientFailure as exc:
            last = exc
            if attempt < profile.max_retries:
                delay = (2.0 ** attempt) * (1.0 + rng.uniform(-0.2, 0.2))
                sleep(delay)
    if isinstance(getattr(last, "__cause__", None), requests.Timeout):
        raise TimeoutError(str(last)) from last
    raise TransportError(f"backend {profile.name} failed after {profile.max_retries} retries: {last}")


_SECTION_NAMES = {
    "scene location analysis": "scene_location",
    "vehicle information identification": "vehicle_information",
    "accident process reconstruction": "accident_process",
}
_HEADING = re.compile(
    r"^\s*#{0,6}\s*(?:[A-Z]|\d+)?[.):]?\s*(scene location analysis|"
    r"vehicle information identification|accident process reconstruction)\s*:?\s*$",
    re.IGNORECASE,
)


def parse_phase1_output(raw: str) -> ReconstructionDoc:
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in raw.splitlines():
        m = _HEADING.match(line)
        if m:
            current = _SECTION_NAMES[m.group(1).lower()]
            sections.setdefault(current, [])
        elif current is not None:
            sections[current].append(line)

    for name, key in (
        ("Scene Location Analysis", "scene_location"),
        ("Vehicle Information Identification", "vehicle_information"),
        ("Accident Process Reconstruction", "accident_process"),
    ):
        if key not in sections or not "\n".join(sections[key]).strip():
            raise ParseError(name)

    vehicles = tuple(l.strip() for l in sections["vehicle_information"] if l.strip())
    return ReconstructionDoc(
        scene_location="\n".join(sections["scene_location"]).strip(),
        vehicle_information=vehicles,
        accident_process="\n".join(sections["accident_process"]).strip(),
    )


_FINDING_KEYS = {"striking_vehno", "struck_vehno", "striking_edr", "struck_edr"}


def _iter_json_objects(raw: str):
    decoder = json.JSONDecoder()
    i = 0
    while True:
        i = raw.find("{", i)
        if i < 0:
            return
        try:
            obj, end = decoder.raw_decode(raw, i)
        except ValueError:
            i += 1
            continue
        if isinstance(obj, dict):
            yield obj
        i = end if end > i else i + 1


def parse_phase2_output(raw: str) -> FirstCrashFinding:
    for obj in _iter_json_objects(raw):
        if not _FINDING_KEYS <= set(obj):
            continue
        for key in ("striking_vehno", "struck_vehno"):
            if not isinstance(obj[key], int) or isinstance(obj[key], bool):
                raise SchemaError(f"{key} must be an integer")
        for key in ("striking_edr", "struck_edr"):
            if obj[key] is not None and (not isinstance(obj[key], int) or isinstance(obj[key], bool)):
                raise SchemaError(f"{key} must be an integer or null")
        rationale = obj.get("rationale", [])
        if not isinstance(rationale, list) or not all(isinstance(r, str) for r in rationale):
            raise SchemaError("rationale must be a list of strings")
        if obj["striking_vehno"] == obj["struck_vehno"]:
            raise SchemaError("striking and struck VEHNO are identical")
        return FirstCrashFinding(
            striking_vehno=obj["striking_vehno"],
            struck_vehno=obj["struck_vehno"],
            striking_edr=obj["striking_edr"],
            struck_edr=obj["struck_edr"],
            rationale=tuple(rationale),
        )
    raise ParseError("no JSON object matching the finding schema")


def run_pipeline(
    case: CrashCase,
    profile: BackendProfile,
    transport: Transport,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[FirstCrashFinding, float, float]:
    """Full two-phase loop; returns the finding plus per-phase latencies."""
    bundle1 = build_phase1_prompt(case, supports_images=profile.supports_images)
    raw1, lat1 = dispatch(bundle1, profile, transport, sleep=sleep)
    reconstruction = parse_phase1_output(raw1)
    bundle2 = build_phase2_prompt(reconstruction, encode_edr_report(case))
    raw2, lat2 = dispatch(bundle2, profile, transport, sleep=sleep)
    return parse_phase2_output(raw2), lat1, lat2
