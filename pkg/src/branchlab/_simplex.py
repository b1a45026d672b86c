"""Bounded-variable revised simplex over a factorized sparse basis.

The engine keeps the constraint matrix in equality form (one logical column
per row) and iterates the dual simplex: a cold start from the logical basis
with cost-aligned nonbasic placement is always dual feasible, and node
re-solves in branch and bound warm start from the parent basis, which stays
dual feasible under bound changes.  The basis inverse is represented as a
SuperLU factorization plus a product-form eta file; the eta file is rebuilt
every REFRESH pivots or when a pivot consistency check fails.

Pricing is Dantzig-style (most violated basic bound leaves); after 1,000
consecutive degenerate steps the engine switches to Bland-style smallest
index selection for the rest of the solve, which prevents cycling.  All tie
breaks are by smallest index, so a solve is deterministic for fixed inputs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .model import MILPInstance

BASIC = 0
AT_LOWER = 1
AT_UPPER = 2
FREE = 3

FEAS_TOL = 1e-7          # primal feasibility on variable bounds
DUAL_TOL = 1e-7          # reduced-cost feasibility
PIVOT_TOL = 1e-9         # admissibility threshold in the ratio test
PIVOT_ABS_MIN = 1e-11    # hard floor for the pivot element
RESIDUAL_TOL = 1e-6      # per-row residual scale factor
REFRESH = 60             # eta-file length triggering refactorization
BLAND_TRIGGER = 1000     # consecutive degenerate pivots before Bland mode
BIG_PLACEMENT = 1e12     # stand-in bound for cost-misaligned infinite sides


class LPNumericalError(RuntimeError):
    """Unrecoverable numerical failure inside the simplex."""


class _Singular(RuntimeError):
    pass


class Standardized:
    """Equality-form view of an instance: structurals then one logical per row."""

    def __init__(self, instance: MILPInstance):
        n = instance.num_variables
        m = instance.num_constraints
        self.n, self.m = n, m
        self.ncol = n + m

        data, ri, ci = [], [], []
        b = np.zeros(m)
        log_l = np.zeros(m)
        log_u = np.zeros(m)
        for i, con in enumerate(instance.constraints):
            for idx, coeff in con.terms:
                data.append(coeff)
                ri.append(i)
                ci.append(idx)
            data.append(1.0)
            ri.append(i)
            ci.append(n + i)
            b[i] = con.rhs
            if con.sense == "<=":
                log_l[i], log_u[i] = 0.0, math.inf
            elif con.sense == ">=":
                log_l[i], log_u[i] = -math.inf, 0.0
            else:
                log_l[i], log_u[i] = 0.0, 0.0

        self.A = csc_matrix((data, (ri, ci)), shape=(m, self.ncol))
        self.AT = self.A.T.tocsr()
        self.b = b
        self.c = np.concatenate(
            [np.array([v.obj_coeff for v in instance.variables]), np.zeros(m)]
        )
        self.base_l = np.concatenate(
            [np.array([v.lower for v in instance.variables]), log_l]
        )
        self.base_u = np.concatenate(
            [np.array([v.upper for v in instance.variables]), log_u]
        )


def standardized(instance: MILPInstance) -> Standardized:
    std = getattr(instance, "_std_cache", None)
    if std is None:
        std = Standardized(instance)
        instance._std_cache = std
    return std


class _Factor:
    """SuperLU factorization of the basis plus the product-form eta file."""

    def __init__(self, lu, m: int, cap: int = REFRESH + 8):
        self.lu = lu
        self.m = m
        self.eta = np.empty((cap, m))
        self.rows = np.empty(cap, dtype=np.int64)
        self.k = 0

    def push(self, r: int, alpha: np.ndarray) -> None:
        if self.k == len(self.rows):
            self.eta = np.concatenate([self.eta, np.empty_like(self.eta)])
            self.rows = np.concatenate([self.rows, np.empty_like(self.rows)])
        self.eta[self.k] = alpha
        self.rows[self.k] = r
        self.k += 1


class Engine:
    def __init__(self, std: Standardized, kernels, max_pivots: int = 50_000):
        self.std = std
        self.K = kernels
        self.max_pivots = max_pivots
        self.l = std.base_l.copy()
        self.u = std.base_u.copy()
        self.pivots = 0
        self.bland = False
        self._degen = 0
        self.factor: _Factor | None = None
        self.basic = None
        self.vstat = None
        self.xval = None
        self.xB = None
        self.d = None
        self.enterable = None

    # -- bounds -----------------------------------------------------------

    def apply_overrides(self, overrides) -> None:
        for idx, (lo, hi) in overrides.items():
            self.l[idx] = max(self.l[idx], lo)
            self.u[idx] = min(self.u[idx], hi)
            if self.l[idx] > self.u[idx] + 1e-12:
                raise ValueError(f"bound override on variable {idx} crosses: "
                                 f"[{self.l[idx]}, {self.u[idx]}]")

    def _refresh_enterable(self) -> None:
        # uint8 rather than bool so both kernel backends share the buffer
        self.enterable = ((self.u - self.l) > 1e-12).astype(np.uint8)

    # -- starting bases ----------------------------------------------------

    def _place_nonbasic(self, j: int) -> tuple[int, float]:
        """Cost-aligned placement; returns (status, value)."""
        cj = self.std.c[j]
        lf, uf = math.isfinite(self.l[j]), math.isfinite(self.u[j])
        if cj > DUAL_TOL:
            return (AT_LOWER, self.l[j]) if lf else (AT_LOWER, -BIG_PLACEMENT)
        if cj < -DUAL_TOL:
            return (AT_UPPER, self.u[j]) if uf else (AT_UPPER, BIG_PLACEMENT)
        if lf:
            return AT_LOWER, self.l[j]
        if uf:
            return AT_UPPER, self.u[j]
        return FREE, 0.0

    def cold_start(self) -> None:
        std = self.std
        self._refresh_enterable()
        self.basic = np.arange(std.n, std.n + std.m, dtype=np.int64)
        self.vstat = np.zeros(std.ncol, dtype=np.int8)
        self.xval = np.zeros(std.ncol)
        for j in range(std.n):
            st, val = self._place_nonbasic(j)
            self.vstat[j] = st
            self.xval[j] = val
        self.vstat[std.n:] = BASIC
        self._factorize()

    def warm_start(self, basic: np.ndarray, vstat: np.ndarray) -> bool:
        """Adopt a previous basis; returns False when it is not dual feasible."""
        std = self.std
        self._refresh_enterable()
        self.basic = basic.astype(np.int64).copy()
        self.vstat = vstat.astype(np.int8).copy()
        self.xval = np.zeros(std.ncol)
        for j in range(std.ncol):
            st = self.vstat[j]
            if st == AT_LOWER:
                if not math.isfinite(self.l[j]):
                    return False
                self.xval[j] = self.l[j]
            elif st == AT_UPPER:
                if not math.isfinite(self.u[j]):
                    return False
                self.xval[j] = self.u[j]
        try:
            self._factorize()
        except _Singular:
            return False
        bad = (self.enterable != 0) & (
            ((self.vstat == AT_LOWER) & (self.d < -10 * DUAL_TOL))
            | ((self.vstat == AT_UPPER) & (self.d > 10 * DUAL_TOL))
            | ((self.vstat == FREE) & (np.abs(self.d) > 10 * DUAL_TOL))
        )
        return not bool(bad.any())

    # -- factorization -----------------------------------------------------

    def _factorize(self) -> None:
        std = self.std
        if std.m == 0:
            self.factor = _Factor(None, 0)
            self._recompute_state()
            return
        B = std.A[:, self.basic].tocsc()
        try:
            lu = splu(B)
        except RuntimeError as exc:
            raise _Singular(str(exc)) from exc
        self.factor = _Factor(lu, std.m)
        self._recompute_state()

    def _column(self, q: int) -> np.ndarray:
        A = self.std.A
        lo, hi = A.indptr[q], A.indptr[q + 1]
        v = np.zeros(self.std.m)
        v[A.indices[lo:hi]] = A.data[lo:hi]
        return v

    def _recompute_state(self) -> None:
        std = self.std
        xv = self.xval.copy()
        xv[self.basic] = 0.0
        rhs = std.b - std.A @ xv
        self.xB = self.factor.lu.solve(rhs) if std.m else np.zeros(0)
        cb = std.c[self.basic]
        y = self.factor.lu.solve(cb, trans="T") if std.m else np.zeros(0)
        self.d = std.c - std.AT @ y
        self.d[self.basic] = 0.0

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        f = self.factor
        out = f.lu.solve(v)
        if f.k:
            self.K.ftran_etas(f.rows, f.eta, f.k, out)
        return out

    def _btran_unit(self, r: int) -> np.ndarray:
        f = self.factor
        v = np.zeros(self.std.m)
        v[r] = 1.0
        if f.k:
            self.K.btran_etas(f.rows, f.eta, f.k, v)
        return f.lu.solve(v, trans="T")

    # -- main loop ----------------------------------------------------------

    def dual_solve(self) -> str:
        if self.std.m == 0:
            return "optimal"
        K = self.K
        retries = 0
        while True:
            if self.pivots >= self.max_pivots:
                return "iteration_limit"
            r, delta = K.dual_leaving(
                self.xB, self.l[self.basic], self.u[self.basic],
                self.basic, FEAS_TOL, self.bland,
            )
            if r < 0:
                return "optimal"
            jr = int(self.basic[r])
            sign = 1.0 if delta > 0 else -1.0
            rho = self._btran_unit(r)
            alpha_row = self.std.AT @ rho
            q, theta = K.dual_ratio(
                self.d, alpha_row, self.vstat, self.enterable,
                sign, PIVOT_TOL, self.bland,
            )
            if q < 0:
                if retries == 0 and self.factor.k > 0:
                    retries += 1
                    self._factorize()
                    continue
                return "infeasible"
            alpha_q = self._ftran(self._column(q))
            piv = alpha_q[r]
            if abs(piv) < PIVOT_ABS_MIN or abs(piv - alpha_row[q]) > 1e-7 * (1.0 + abs(piv)):
                if retries < 3:
                    retries += 1
                    self._factorize()
                    continue
                raise LPNumericalError(
                    f"unstable pivot {piv:.3e} vs {alpha_row[q]:.3e} after refactorization"
                )
            retries = 0

            target = self.l[jr] if delta < 0 else self.u[jr]
            dq = delta / piv
            self.xB -= dq * alpha_q
            self.xB[r] = self.xval[q] + dq
            mult = self.d[q] / piv
            if mult != 0.0:
                self.d -= mult * alpha_row
            self.d[q] = 0.0
            self.vstat[jr] = AT_LOWER if delta < 0 else AT_UPPER
            self.xval[jr] = target
            self.vstat[q] = BASIC
            self.basic[r] = q
            self.factor.push(r, alpha_q)
            self.pivots += 1

            if abs(theta) <= 1e-12:
                self._degen += 1
                if self._degen > BLAND_TRIGGER:
                    self.bland = True
            else:
                self._degen = 0
            if self.factor.k >= REFRESH:
                self._factorize()

    # -- results -------------------------------------------------------------

    def assemble_x(self) -> np.ndarray:
        x = self.xval.copy()
        if self.std.m:
            x[self.basic] = self.xB
        return x

    def certify(self) -> str:
        """Residual check after dual optimality; refactorizes and continues
        iterating when the eta-file accumulated too much error."""
        std = self.std
        for _ in range(4):
            status = self.dual_solve()
            if status != "optimal":
                return status
            x = self.assemble_x()
            synthetic = self.enterable & (self.vstat != BASIC) & (
                np.abs(self.xval) >= 0.999999 * BIG_PLACEMENT
            )
            if bool(synthetic.any()):
                return "unbounded"
            if std.m == 0:
                return "optimal"
            resid = np.abs(std.A @ x - std.b)
            if bool((resid <= RESIDUAL_TOL * (1.0 + np.abs(std.b))).all()):
                return "optimal"
            self._factorize()
        raise LPNumericalError("residual check failed after repeated refactorization")
