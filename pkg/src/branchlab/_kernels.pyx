# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot inner-loop kernels.

Selection semantics (tie-breaks, admissibility masks, tolerance windows)
match branchlab._kernels_py line for line; only the execution is C.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

BACKEND_NAME = "compiled"

DEF AT_LOWER = 1
DEF AT_UPPER = 2
DEF FREE = 3


def ftran_etas(cnp.int64_t[:] rows, cnp.float64_t[:, :] etas, Py_ssize_t k,
               cnp.float64_t[:] v):
    cdef Py_ssize_t t, i, r, m = v.shape[0]
    cdef double vr
    for t in range(k):
        r = rows[t]
        vr = v[r] / etas[t, r]
        if vr != 0.0:
            for i in range(m):
                v[i] -= etas[t, i] * vr
        v[r] = vr


def btran_etas(cnp.int64_t[:] rows, cnp.float64_t[:, :] etas, Py_ssize_t k,
               cnp.float64_t[:] v):
    cdef Py_ssize_t t, i, r, m = v.shape[0]
    cdef double s, ar
    for t in range(k - 1, -1, -1):
        r = rows[t]
        ar = etas[t, r]
        s = 0.0
        for i in range(m):
            s += etas[t, i] * v[i]
        v[r] = ((1.0 + ar) * v[r] - s) / ar


def dual_leaving(cnp.float64_t[:] xb, cnp.float64_t[:] lb_b, cnp.float64_t[:] ub_b,
                 cnp.int64_t[:] basic, double ftol, bint bland):
    cdef Py_ssize_t m = xb.shape[0]
    cdef Py_ssize_t i, r = -1
    cdef double below, above, viol, best = -INFINITY
    cdef cnp.int64_t best_col = 0
    if bland:
        for i in range(m):
            below = lb_b[i] - xb[i]
            above = xb[i] - ub_b[i]
            viol = below if below > above else above
            if viol > ftol and (r < 0 or basic[i] < best_col):
                r = i
                best_col = basic[i]
    else:
        for i in range(m):
            below = lb_b[i] - xb[i]
            above = xb[i] - ub_b[i]
            viol = below if below > above else above
            if viol > best:
                best = viol
                r = i
        if best <= ftol:
            return -1, 0.0
    if r < 0:
        return -1, 0.0
    below = lb_b[r] - xb[r]
    above = xb[r] - ub_b[r]
    if below > above:
        return r, -below
    return r, above


def forest_predict(cnp.int32_t[:] feature, cnp.float64_t[:] threshold,
                   cnp.int32_t[:] left, cnp.int32_t[:] right,
                   cnp.float64_t[:] value, cnp.int64_t[:] offsets,
                   cnp.float64_t[:, :] X):
    cdef Py_ssize_t ntrees = offsets.shape[0] - 1
    cdef Py_ssize_t ns = X.shape[0]
    cdef Py_ssize_t s, t
    cdef cnp.int64_t base, node
    out_arr = np.zeros(ns)
    cdef cnp.float64_t[:] out = out_arr
    for t in range(ntrees):
        base = offsets[t]
        for s in range(ns):
            node = base
            while left[node] >= 0:
                if X[s, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            out[s] += value[node]
    for s in range(ns):
        out[s] /= ntrees
    return out_arr


def dual_ratio(cnp.float64_t[:] d, cnp.float64_t[:] alpha, cnp.int8_t[:] vstat,
               cnp.uint8_t[:] enterable, double sign, double ptol, bint bland):
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t j, q = -1
    cdef double ah, ratio, theta = INFINITY, window, best_mag = -1.0
    cdef int st
    # pass 1: smallest ratio among admissible columns
    for j in range(n):
        if not enterable[j]:
            continue
        st = vstat[j]
        ah = sign * alpha[j]
        if st == AT_LOWER:
            if ah <= ptol:
                continue
        elif st == AT_UPPER:
            if ah >= -ptol:
                continue
        elif st == FREE:
            if fabs(ah) <= ptol:
                continue
        else:
            continue
        ratio = d[j] / ah
        if st == FREE:
            ratio = fabs(ratio)
        if ratio < theta:
            theta = ratio
        if q < 0:
            q = j
    if q < 0:
        return -1, 0.0
    window = theta + 1e-9 + 1e-7 * fabs(theta)
    # pass 2: within the window pick the largest |alpha| (first admissible
    # column in Bland mode); ties keep the smallest index
    q = -1
    for j in range(n):
        if not enterable[j]:
            continue
        st = vstat[j]
        ah = sign * alpha[j]
        if st == AT_LOWER:
            if ah <= ptol:
                continue
        elif st == AT_UPPER:
            if ah >= -ptol:
                continue
        elif st == FREE:
            if fabs(ah) <= ptol:
                continue
        else:
            continue
        ratio = d[j] / ah
        if st == FREE:
            ratio = fabs(ratio)
        if ratio <= window:
            if bland:
                q = j
                break
            if fabs(ah) > best_mag:
                best_mag = fabs(ah)
                q = j
    ah = sign * alpha[q]
    return q, d[q] / ah
