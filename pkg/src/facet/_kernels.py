"""Compiled scan for limit-bounded accumulation.

The unlimited accumulation methods are plain scatter-sums and live as
vectorised numpy in `accumulate`; the limited method cannot be expressed
that way because each decision depends on the running per-pixel value, so
it drops to a compiled grouped scan here.

Events arrive in chronological order with a pixel/polarity cell key. A
stable counting sort groups them by cell (keeping time order within each
cell), then one pass accumulates per cell. Within a causal ramp the kernel
weight is non-decreasing in time at a fixed pixel, so in skip mode the
accepted events form a prefix of each group: after the first rejection
nothing later at that pixel can be accepted and the scan stops doing
arithmetic for the group. Clip mode pins the value at the limit the same
way. Per-group additions happen in chronological order, which keeps
results bit-identical to a literal per-event implementation (and to the
unlimited causal sum whenever the limit never binds).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _group_by_cell(keys, w, n_cells):
    n = keys.shape[0]
    counts = np.zeros(n_cells + 1, np.int64)
    for i in range(n):
        counts[keys[i] + 1] += 1
    for k in range(1, n_cells + 1):
        counts[k] += counts[k - 1]
    ks = np.empty(n, np.int64)
    ws = np.empty(n, np.float64)
    for i in range(n):
        k = keys[i]
        idx = counts[k]
        counts[k] = idx + 1
        ks[idx] = k
        ws[idx] = w[i]
    return ks, ws


@njit(cache=True, nogil=True)
def grouped_scan_skip(keys, w, n_cells, limit, out_flat):
    ks, ws = _group_by_cell(keys, w, n_cells)
    n = ks.shape[0]
    i = 0
    while i < n:
        k = ks[i]
        v = 0.0
        alive = True
        while i < n and ks[i] == k:
            if alive:
                nv = v + ws[i]
                if nv <= limit:
                    v = nv
                else:
                    alive = False
            i += 1
        out_flat[k] = v


@njit(cache=True, nogil=True)
def grouped_scan_clip(keys, w, n_cells, limit, out_flat):
    ks, ws = _group_by_cell(keys, w, n_cells)
    n = ks.shape[0]
    i = 0
    while i < n:
        k = ks[i]
        v = 0.0
        alive = True
        while i < n and ks[i] == k:
            if alive:
                nv = v + ws[i]
                if nv >= limit:
                    v = limit
                    alive = False
                else:
                    v = nv
            i += 1
        out_flat[k] = v
