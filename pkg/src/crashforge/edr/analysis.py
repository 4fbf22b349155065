"""Alignment, overlap clustering, and dynamics classification.

Alignment searches a symmetric shift grid for the shift that maximizes the
fraction of nearest-time sample pairs agreeing within per-channel
tolerances. The fraction is computed over the intersected window only, so a
short record fully contained in a long one can reach 1.0.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ..model import CH_BRAKE, CH_SPEED, DomainError, EdrRecord

try:
    from . import _scan as _kernel

    KERNEL_NAME = "cython"
except ImportError:  # extension not built; numpy fallback
    from . import _scan_py as _kernel

    KERNEL_NAME = "python"

scan_shifts = _kernel.scan_shifts


class ConfigError(DomainError):
    pass


class ChannelMissing(DomainError):
    pass


def default_tolerances() -> dict[str, float]:
    # Reported channel resolutions: 0.1 km/h speed, whole-degree steering
    return {
        "speed_kmh": 0.5,
        "steering_deg": 1.0,
        "brake_on": 0.5,
        "accel_pedal_pct": 5.0,
    }


@dataclass(frozen=True)
class AlignmentConfig:
    shift_range_sec: float = 5.0
    shift_step_sec: float = 0.1
    value_tol: dict[str, float] = field(default_factory=default_tolerances)
    min_overlap_samples: int = 5
    overlap_threshold: float = 0.8
    decel_threshold_kmh: float = 15.0
    steady_band_kmh: float = 5.0

    def validate(self) -> None:
        if self.shift_range_sec < 0 or self.shift_step_sec <= 0:
            raise ConfigError("shift grid is empty or degenerate")
        if any(t <= 0 for t in self.value_tol.values()):
            raise ConfigError("value tolerances must be positive")
        if self.min_overlap_samples < 1:
            raise ConfigError("min_overlap_samples must be >= 1")

    def shift_grid(self) -> np.ndarray:
        self.validate()
        n = int(round(self.shift_range_sec / self.shift_step_sec))
        return np.array([i * self.shift_step_sec for i in range(-n, n + 1)])


@dataclass(frozen=True)
class AlignmentResult:
    record_a: tuple[int, int]
    record_b: tuple[int, int]
    best_shift_sec: float
    matched_fraction: float
    channel_agreement: dict[str, float]


def _pair_tolerance(times: Sequence[float]) -> float:
    # strictly below half the sample period: a sample exactly between two
    # neighbours is ambiguous and must not pair
    if len(times) < 2:
        return 0.045
    return 0.45 * statistics.median(b - a for a, b in zip(times, times[1:]))


def _shared_channels(a: EdrRecord, b: EdrRecord, cfg: AlignmentConfig) -> list[str]:
    return sorted(name for name in a.channels if name in b.channels and name in cfg.value_tol)


def align_records(a: EdrRecord, b: EdrRecord, cfg: Optional[AlignmentConfig] = None) -> AlignmentResult:
    """Best time shift between two records' trigger clocks.

    best_shift_sec is the offset of b's trigger relative to a's: a sample of
    b at local time t corresponds to a's local time t + best_shift_sec.
    Counting runs in both pairing directions, so the matched fraction is
    symmetric and best shifts negate when the arguments swap.
    """
    cfg = cfg or AlignmentConfig()
    for rec, tag in ((a, "a"), (b, "b")):
        if CH_SPEED not in rec.channels:
            raise ChannelMissing(f"record {tag} {rec.key} has no {CH_SPEED} channel")

    shifts = cfg.shift_grid()
    neg_shifts = -shifts
    ns = shifts.shape[0]
    total_pairs = np.zeros(ns, dtype=np.int64)
    total_agrees = np.zeros(ns, dtype=np.int64)
    per_channel: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    speed_pairs_fwd = None
    speed_pairs_rev = None

    for name in _shared_channels(a, b, cfg):
        sa, sb = a.channels[name], b.channels[name]
        ta = np.array(sa.times())
        va = np.array(sa.values())
        tb = np.array(sb.times())
        vb = np.array(sb.values())
        max_dt = min(_pair_tolerance(sa.times()), _pair_tolerance(sb.times()))
        tol = cfg.value_tol[name]
        p_fwd, g_fwd = scan_shifts(ta, va, tb, vb, shifts, tol, max_dt)
        p_rev, g_rev = scan_shifts(tb, vb, ta, va, neg_shifts, tol, max_dt)
        pairs = p_fwd + p_rev
        agrees = g_fwd + g_rev
        per_channel[name] = (pairs, agrees)
        total_pairs += pairs
        total_agrees += agrees
        if name == CH_SPEED:
            speed_pairs_fwd, speed_pairs_rev = p_fwd, p_rev

    with np.errstate(invalid="ignore"):
        fractions = np.where(total_pairs > 0, total_agrees / np.maximum(total_pairs, 1), 0.0)
    enough = np.minimum(speed_pairs_fwd, speed_pairs_rev) >= cfg.min_overlap_samples
    fractions = np.where(enough, fractions, 0.0)

    # argmax; ties toward smallest |shift|, then the smaller shift value
    best_f = float(fractions.max())
    tied = np.flatnonzero(fractions == best_f)
    best_i = min(tied, key=lambda i: (abs(shifts[i]), shifts[i]))

    agreement = {}
    for name, (pairs, agrees) in per_channel.items():
        agreement[name] = float(agrees[best_i] / pairs[best_i]) if pairs[best_i] > 0 else 0.0

    return AlignmentResult(
        record_a=a.key,
        record_b=b.key,
        best_shift_sec=float(shifts[best_i]),
        matched_fraction=best_f,
        channel_agreement=agreement,
    )


@dataclass(frozen=True)
class OverlapCluster:
    """Connected component of the pairwise-overlap relation.

    shifts maps each member to its trigger offset relative to the anchor
    (the lowest-EDREVENTNO member); more negative means triggered earlier."""

    members: tuple[tuple[int, int], ...]
    shifts: dict[tuple[int, int], float]

    @property
    def anchor(self) -> tuple[int, int]:
        return self.members[0]


def cluster_overlaps(records: Sequence[EdrRecord], cfg: Optional[AlignmentConfig] = None) -> list[OverlapCluster]:
    """Partitions one vehicle's records into overlap clusters."""
    cfg = cfg or AlignmentConfig()
    records = sorted(records, key=lambda r: r.edr_event_no)
    vehnos = {r.vehno for r in records}
    if len(vehnos) > 1:
        raise ConfigError(f"records span multiple vehicles: {sorted(vehnos)}")

    n = len(records)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        parent[find(i)] = find(j)

    for i in range(n):
        for j in range(i + 1, n):
            if CH_SPEED not in records[i].channels or CH_SPEED not in records[j].channels:
                continue
            if align_records(records[i], records[j], cfg).matched_fraction >= cfg.overlap_threshold:
                union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    clusters = []
    for indices in sorted(groups.values(), key=lambda ix: records[ix[0]].edr_event_no):
        anchor = records[indices[0]]
        shifts: dict[tuple[int, int], float] = {anchor.key: 0.0}
        for i in indices[1:]:
            shifts[records[i].key] = align_records(anchor, records[i], cfg).best_shift_sec
        clusters.append(
            OverlapCluster(members=tuple(records[i].key for i in indices), shifts=shifts)
        )
    return clusters


class Dynamics(Enum):
    DECELERATING_LEAD = "decelerating_lead"
    APPROACH_THEN_LATE_BRAKE = "approach_then_late_brake"
    STEADY_STATE = "steady_state"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class DynamicsProfile:
    initial_speed_kmh: float
    final_speed_kmh: float
    net_delta_v_kmh: float
    brake_onset_sec: Optional[float]
    classification: Dynamics


def _steady(values: Sequence[float], band: float) -> bool:
    return bool(values) and (max(values) - min(values)) < 2 * band


def profile_dynamics(record: EdrRecord, cfg: Optional[AlignmentConfig] = None) -> DynamicsProfile:
    """Classifies a record's pre-crash dynamics; post-trigger samples (t > 0)
    are ignored."""
    cfg = cfg or AlignmentConfig()
    if CH_SPEED not in record.channels:
        raise ChannelMissing(f"record {record.key} has no {CH_SPEED} channel")

    speed = [(t, v) for t, v in record.channels[CH_SPEED].samples if t <= 0]
    if not speed:
        raise ChannelMissing(f"record {record.key} has no pre-crash speed samples")
    initial = speed[0][1]
    final = speed[-1][1]
    net = final - initial

    onset: Optional[float] = None
    if CH_BRAKE in record.channels:
        brake = [(t, v) for t, v in record.channels[CH_BRAKE].samples if t <= 0]
        for (_, prev), (t, cur) in zip(brake, brake[1:]):
            if prev == 0.0 and cur == 1.0:
                onset = t
                break

    all_speeds = [v for _, v in speed]
    early_speeds = [v for t, v in speed if t <= -1.0]

    if net <= -cfg.decel_threshold_kmh and onset is not None and onset < -0.5:
        cls = Dynamics.DECELERATING_LEAD
    elif _steady(all_speeds, cfg.steady_band_kmh) and onset is None:
        cls = Dynamics.STEADY_STATE
    elif _steady(early_speeds, cfg.steady_band_kmh) and (onset is None or -1.0 <= onset <= 0.0):
        cls = Dynamics.APPROACH_THEN_LATE_BRAKE
    else:
        cls = Dynamics.INDETERMINATE

    return DynamicsProfile(
        initial_speed_kmh=initial,
        final_speed_kmh=final,
        net_delta_v_kmh=net,
        brake_onset_sec=onset,
        classification=cls,
    )
