# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled shift-scan kernel for time-series alignment.

Mirrors crashforge.edr._scan_py exactly; selected at import when built.
"""

from libc.math cimport fabs

import numpy as np


def scan_shifts(double[::1] ta, double[::1] va,
                double[::1] tb, double[::1] vb,
                double[::1] shifts, double tol, double max_dt):
    """For each shift s, pair every a-sample with the nearest b-sample under
    t_b + s, within max_dt. Returns (pairs, agrees) int64 arrays per shift.

    Nearest-time ties resolve to the lower b index.
    """
    cdef Py_ssize_t na = ta.shape[0]
    cdef Py_ssize_t nb = tb.shape[0]
    cdef Py_ssize_t ns = shifts.shape[0]
    pairs_arr = np.zeros(ns, dtype=np.int64)
    agrees_arr = np.zeros(ns, dtype=np.int64)
    cdef long long[::1] pairs = pairs_arr
    cdef long long[::1] agrees = agrees_arr
    cdef Py_ssize_t k, i, j
    cdef double s, target
    cdef long long np_, ag

    if na == 0 or nb == 0:
        return pairs_arr, agrees_arr

    for k in range(ns):
        s = shifts[k]
        j = 0
        np_ = 0
        ag = 0
        for i in range(na):
            target = ta[i] - s
            while j + 1 < nb and fabs(tb[j + 1] - target) < fabs(tb[j] - target):
                j += 1
            if fabs(tb[j] - target) <= max_dt:
                np_ += 1
                if fabs(vb[j] - va[i]) <= tol:
                    ag += 1
        pairs[k] = np_
        agrees[k] = ag
    return pairs_arr, agrees_arr
