"""Linear-relaxation solving: public surface over the simplex engine.

solve_lp handles a full solve (optionally warm started from a Basis);
probe_bound_change re-solves with a single branching bound applied, which
is how strong-branching probes and child-node evaluations are priced.
NodeLPContext is the fast path used by branch and bound: it keeps the
factorized basis of a solved node alive so that many probes against the
same node cost only their own pivots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _simplex
from ._simplex import LPNumericalError, _Singular
from .backend import active_kernels
from .model import MILPInstance

INTEGRALITY_TOL = 1e-6
DEFAULT_MAX_PIVOTS = 50_000


class LPError(RuntimeError):
    """Solve aborted: iteration limit or numerical failure."""


@dataclass(frozen=True)
class BoundSet:
    """Node-local bound overrides relative to the instance."""

    overrides: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for idx, (lo, hi) in self.overrides.items():
            if lo > hi:
                raise ValueError(f"override for variable {idx} has lower {lo} > upper {hi}")

    def tightened(self, var: int, lo: float, hi: float) -> "BoundSet":
        new = dict(self.overrides)
        if var in new:
            old_lo, old_hi = new[var]
            lo, hi = max(lo, old_lo), min(hi, old_hi)
        new[var] = (lo, hi)
        return BoundSet(new)


class Basis:
    """Warm-start token: basic column set and nonbasic statuses."""

    __slots__ = ("basic", "vstat")

    def __init__(self, basic: np.ndarray, vstat: np.ndarray):
        self.basic = basic
        self.vstat = vstat


@dataclass
class LPResult:
    status: str                      # optimal | infeasible | unbounded | iteration_limit
    objective: float
    primal: np.ndarray | None
    iterations: int
    basis: Basis | None = None

    def value(self, var: int) -> float:
        return float(self.primal[var])


def _finish(engine: _simplex.Engine, status: str, pivots0: int) -> LPResult:
    its = engine.pivots - pivots0
    if status == "optimal":
        x = engine.assemble_x()
        n = engine.std.n
        primal = x[:n].copy()
        obj = float(engine.std.c[:n] @ primal)
        basis = Basis(engine.basic.copy(), engine.vstat.copy())
        return LPResult("optimal", obj, primal, its, basis)
    if status == "infeasible":
        return LPResult("infeasible", math.inf, None, its)
    if status == "unbounded":
        return LPResult("unbounded", -math.inf, None, its)
    return LPResult("iteration_limit", math.nan, None, its)


def solve_lp(
    instance: MILPInstance,
    bounds: BoundSet | None = None,
    warm_hint: Basis | None = None,
    max_pivots: int = DEFAULT_MAX_PIVOTS,
) -> LPResult:
    std = _simplex.standardized(instance)
    engine = _simplex.Engine(std, active_kernels(), max_pivots)
    if bounds is not None:
        engine.apply_overrides(bounds.overrides)
    pivots0 = 0
    started = False
    if warm_hint is not None:
        try:
            started = engine.warm_start(warm_hint.basic, warm_hint.vstat)
        except _Singular:
            started = False
    if not started:
        engine.cold_start()
    status = engine.certify()
    return _finish(engine, status, pivots0)


def fractional_part(value: float) -> float:
    return value - math.floor(value)


def is_fractional(value: float, tol: float = INTEGRALITY_TOL) -> bool:
    f = fractional_part(value)
    return tol < f < 1.0 - tol


def _branch_bounds(value: float, direction: str) -> tuple[float, float]:
    if direction == "down":
        return -math.inf, math.floor(value)
    if direction == "up":
        return math.ceil(value), math.inf
    raise ValueError(f"unknown probe direction {direction!r}")


def probe_bound_change(
    instance: MILPInstance,
    bounds: BoundSet | None,
    result: LPResult,
    var: int,
    direction: str,
) -> LPResult:
    """Re-solve with var's bound tightened to cut off its fractional value."""
    if result.status != "optimal":
        raise ValueError("probe requires an optimal parent result")
    value = result.value(var)
    if not is_fractional(value):
        raise ValueError(
            f"probe precondition: variable {var} has integral value {value!r}"
        )
    lo, hi = _branch_bounds(value, direction)
    v = instance.variables[var]
    child = (bounds or BoundSet()).tightened(var, max(lo, v.lower), min(hi, v.upper))
    return solve_lp(instance, child, warm_hint=result.basis)


class NodeLPContext:
    """A solved node LP whose factorization is kept alive for probing."""

    def __init__(
        self,
        instance: MILPInstance,
        bounds: BoundSet | None = None,
        warm_hint: Basis | None = None,
        max_pivots: int = DEFAULT_MAX_PIVOTS,
    ):
        self.instance = instance
        self.bounds = bounds or BoundSet()
        std = _simplex.standardized(instance)
        self._engine = _simplex.Engine(std, active_kernels(), max_pivots)
        self._engine.apply_overrides(self.bounds.overrides)
        started = False
        if warm_hint is not None:
            try:
                started = self._engine.warm_start(warm_hint.basic, warm_hint.vstat)
            except _Singular:
                started = False
        if not started:
            self._engine.cold_start()
        status = self._engine.certify()
        self.result = _finish(self._engine, status, 0)
        if status == "optimal" and self._engine.factor.k:
            # probes replay the eta file on every ftran/btran; restarting
            # from a fresh factorization makes each probe pay only for its
            # own pivots
            self._engine._factorize()

    def probe(self, var: int, direction: str) -> tuple[str, float]:
        """Tighten one bound, re-solve, restore.  Returns (status, objective)."""
        e = self._engine
        if self.result.status != "optimal":
            raise ValueError("cannot probe a node that is not optimal")
        value = self.result.value(var)
        if not is_fractional(value):
            raise ValueError(f"probe precondition: variable {var} is integral")
        lo, hi = _branch_bounds(value, direction)
        lo = max(lo, e.l[var])
        hi = min(hi, e.u[var])

        saved = (
            e.l[var], e.u[var], bool(e.enterable[var]),
            e.xB.copy(), e.xval.copy(), e.vstat.copy(), e.basic.copy(),
            e.d.copy(), e.factor, e.factor.k, e.pivots, e.bland, e._degen,
        )
        try:
            e.l[var], e.u[var] = lo, hi
            e.enterable[var] = (hi - lo) > 1e-12
            status = e.certify()
            if status == "optimal":
                x = e.assemble_x()
                obj = float(e.std.c[: e.std.n] @ x[: e.std.n])
            elif status == "infeasible":
                obj = math.inf
            elif status == "unbounded":
                obj = -math.inf
            else:
                raise LPError(f"probe hit the pivot limit on variable {var}")
        finally:
            (e.l[var], e.u[var], ent, xB, xval, vstat, basic,
             d, factor, k, pivots, bland, degen) = saved
            e.enterable[var] = ent
            e.xB, e.xval, e.vstat, e.basic, e.d = xB, xval, vstat, basic, d
            e.factor = factor
            e.factor.k = k
            e.pivots, e.bland, e._degen = pivots, bland, degen
        return status, obj
