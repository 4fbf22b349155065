"""Pure-Python/numpy fallback for the alignment shift-scan kernel.

Semantics must match crashforge.edr._scan bit-for-bit: same pairing rule
(nearest b-sample under t_b + shift, lower index on distance ties), same
tolerance comparisons.
"""

from __future__ import annotations

import numpy as np


def scan_shifts(ta, va, tb, vb, shifts, tol, max_dt):
    ta = np.asarray(ta, dtype=float)
    va = np.asarray(va, dtype=float)
    tb = np.asarray(tb, dtype=float)
    vb = np.asarray(vb, dtype=float)
    shifts = np.asarray(shifts, dtype=float)

    ns = shifts.shape[0]
    pairs = np.zeros(ns, dtype=np.int64)
    agrees = np.zeros(ns, dtype=np.int64)
    if ta.size == 0 or tb.size == 0:
        return pairs, agrees

    for k in range(ns):
        target = ta - shifts[k]
        pos = np.searchsorted(tb, target)
        left = np.clip(pos - 1, 0, tb.size - 1)
        right = np.clip(pos, 0, tb.size - 1)
        dl = np.abs(tb[left] - target)
        dr = np.abs(tb[right] - target)
        nearest = np.where(dl <= dr, left, right)  # lower index wins ties
        dist = np.abs(tb[nearest] - target)
        paired = dist <= max_dt
        agree = paired & (np.abs(vb[nearest] - va) <= tol)
        pairs[k] = int(paired.sum())
        agrees[k] = int(agree.sum())
    return pairs, agrees
