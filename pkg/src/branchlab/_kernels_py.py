"""Pure-numpy implementations of the hot inner-loop kernels.

The compiled extension branchlab._kernels provides the same functions with
identical selection semantics (tie-breaks by first occurrence / smallest
index).  Either backend may be active; see branchlab.backend.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

AT_LOWER = 1
AT_UPPER = 2
FREE = 3


def ftran_etas(rows: np.ndarray, etas: np.ndarray, k: int, v: np.ndarray) -> None:
    """Apply k product-form eta updates to v in place (forward order)."""
    for t in range(k):
        r = rows[t]
        vr = v[r] / etas[t, r]
        if vr != 0.0:
            v -= etas[t] * vr
        v[r] = vr


def btran_etas(rows: np.ndarray, etas: np.ndarray, k: int, v: np.ndarray) -> None:
    """Apply k eta-transpose updates to v in place (reverse order)."""
    for t in range(k - 1, -1, -1):
        r = rows[t]
        ar = etas[t, r]
        s = float(np.dot(etas[t], v))
        v[r] = ((1.0 + ar) * v[r] - s) / ar


def dual_leaving(
    xb: np.ndarray,
    lb_b: np.ndarray,
    ub_b: np.ndarray,
    basic: np.ndarray,
    ftol: float,
    bland: bool,
) -> tuple[int, float]:
    """Pick the leaving row: most violated basic bound (or smallest column
    index in Bland mode).  Returns (row, delta) with delta = xb - bound;
    row -1 when primal feasible."""
    below = lb_b - xb
    above = xb - ub_b
    viol = np.maximum(below, above)
    if bland:
        cand = np.flatnonzero(viol > ftol)
        if cand.size == 0:
            return -1, 0.0
        r = int(cand[np.argmin(basic[cand])])
    else:
        r = int(np.argmax(viol))
        if viol[r] <= ftol:
            return -1, 0.0
    delta = -below[r] if below[r] > above[r] else above[r]
    return r, float(delta)


def forest_predict(feature, threshold, left, right, value, offsets, X) -> np.ndarray:
    """Mean leaf value over flattened trees for every row of X."""
    out = np.zeros(len(X))
    ntrees = len(offsets) - 1
    rows = np.arange(len(X))
    for t in range(ntrees):
        base = offsets[t]
        node = np.full(len(X), base, dtype=np.int64)
        while True:
            active = left[node] >= 0
            if not active.any():
                break
            cur = node[active]
            go_left = X[rows[active], feature[cur]] <= threshold[cur]
            node[active] = base + np.where(go_left, left[cur], right[cur])
        out += value[node]
    return out / ntrees


def dual_ratio(
    d: np.ndarray,
    alpha: np.ndarray,
    vstat: np.ndarray,
    enterable: np.ndarray,
    sign: float,
    ptol: float,
    bland: bool,
) -> tuple[int, float]:
    """Bounded-dual ratio test.  Returns (entering column, signed ratio);
    column -1 certifies primal infeasibility (dual unbounded)."""
    ah = sign * alpha
    adm = (enterable != 0) & (
        ((vstat == AT_LOWER) & (ah > ptol))
        | ((vstat == AT_UPPER) & (ah < -ptol))
        | ((vstat == FREE) & (np.abs(ah) > ptol))
    )
    idx = np.flatnonzero(adm)
    if idx.size == 0:
        return -1, 0.0
    ratios = d[idx] / ah[idx]
    free_sel = vstat[idx] == FREE
    if free_sel.any():
        ratios[free_sel] = np.abs(ratios[free_sel])
    theta = float(np.min(ratios))
    window = theta + 1e-9 + 1e-7 * abs(theta)
    near = idx[ratios <= window]
    if bland:
        q = int(near[0])
    else:
        q = int(near[np.argmax(np.abs(ah[near]))])
    return q, float(d[q] / ah[q])
