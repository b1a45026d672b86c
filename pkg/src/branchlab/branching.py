"""Variable-selection rules: most-infeasible, reliability, and ML-scored.

Reliability branching rb:L:E sorts fractional candidates by pseudocost
score, probes the top L whose probe count is below E (solving both child
relaxations), updates the pseudocost table from the observed objective
deltas, and picks the candidate with the best product score.  rb:inf:inf
is the strong-branching oracle.  ML rules replace probing with a
regression prediction of the log product score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import TreeStats, compute_features
from .grouping import resolve_model

EPSILON = 1e-6


def score_mib(frac_value: float) -> float:
    """Most-infeasible score: distance to the nearest integer."""
    return min(frac_value, 1.0 - frac_value)


def score_product(delta_down: float, delta_up: float, eps: float = EPSILON) -> float:
    """Product score with an eps floor on each objective delta."""
    return max(delta_down, eps) * max(delta_up, eps)


def infeasible_delta(root_objective: float) -> float:
    """Stand-in objective delta for a probe whose child LP is infeasible."""
    return 1e6 * (1.0 + abs(root_objective))


@dataclass
class ScoreRecord:
    var: int
    delta_down: float
    delta_up: float
    score: float
    source: str  # probe | pseudocost | ml


class PseudocostTable:
    """Running per-direction unit objective gains, keyed by variable name."""

    def __init__(self):
        self._down: dict[str, tuple[float, int]] = {}
        self._up: dict[str, tuple[float, int]] = {}
        self._probes: dict[str, int] = {}
        self._global = {"down": (0.0, 0), "up": (0.0, 0)}

    def add_observation(self, key: str, direction: str, unit_gain: float) -> None:
        table = self._down if direction == "down" else self._up
        s, k = table.get(key, (0.0, 0))
        table[key] = (s + unit_gain, k + 1)
        gs, gk = self._global[direction]
        self._global[direction] = (gs + unit_gain, gk + 1)

    def note_probe(self, key: str) -> None:
        self._probes[key] = self._probes.get(key, 0) + 1

    def probe_count(self, key: str) -> int:
        return self._probes.get(key, 0)

    def global_average(self, direction: str) -> float:
        s, k = self._global[direction]
        return s / k if k else 1.0

    def unit_gain(self, key: str, direction: str) -> float:
        table = self._down if direction == "down" else self._up
        entry = table.get(key)
        if entry is None or entry[1] == 0:
            return self.global_average(direction)
        return entry[0] / entry[1]

    def snapshot(self) -> dict:
        return {
            "down": dict(self._down),
            "up": dict(self._up),
            "probes": dict(self._probes),
        }


@dataclass
class BranchContext:
    """Everything a rule may look at when choosing the branching variable."""

    instance: object
    node: object
    result: object                 # LPResult of this node
    candidates: list[int]          # fractional binary indices, ascending
    pseudocosts: PseudocostTable
    tree_stats: TreeStats
    probe_fn: object               # (var, direction) -> (status, objective)

    def features_for(self, var: int) -> np.ndarray:
        return compute_features(
            self.instance, self.node, self.result, var,
            self.pseudocosts, self.node.depth, self.tree_stats,
        )


@dataclass
class BranchDecision:
    var: int
    records: list[ScoreRecord]
    probed_deltas: tuple[float, float] | None = None  # for plunge ordering


class MostInfeasibleRule:
    name = "mib"

    def select(self, bc: BranchContext) -> BranchDecision:
        best, best_score = -1, -1.0
        for var in bc.candidates:
            x = bc.result.value(var)
            s = score_mib(x - math.floor(x))
            if s > best_score or (s == best_score and var < best):
                best, best_score = var, s
        return BranchDecision(best, [])

    def stats(self) -> dict:
        return {}


class ReliabilityRule:
    """rb:L:E with probing against the node's live LP context."""

    def __init__(self, lam: float = math.inf, eta: float = math.inf,
                 epsilon: float = EPSILON, probe_callback=None):
        if lam < 0 or eta < 0:
            raise ValueError("rb parameters must be nonnegative")
        self.lam = lam
        self.eta = eta
        self.epsilon = epsilon
        self.probe_callback = probe_callback
        self.probes_performed = 0

    @property
    def name(self) -> str:
        fmt = lambda v: "inf" if math.isinf(v) else str(int(v))
        return f"rb:{fmt(self.lam)}:{fmt(self.eta)}"

    def _estimate(self, bc: BranchContext, var: int) -> tuple[float, float]:
        key = bc.instance.variables[var].key.raw
        x = bc.result.value(var)
        f = x - math.floor(x)
        down = bc.pseudocosts.unit_gain(key, "down") * f
        up = bc.pseudocosts.unit_gain(key, "up") * (1.0 - f)
        return down, up

    def select(self, bc: BranchContext) -> BranchDecision:
        table = bc.pseudocosts
        est: dict[int, tuple[float, float]] = {
            var: self._estimate(bc, var) for var in bc.candidates
        }
        order = sorted(
            bc.candidates,
            key=lambda v: (-score_product(*est[v], self.epsilon), v),
        )
        big = infeasible_delta(bc.tree_stats.root_objective)

        probed: dict[int, tuple[float, float]] = {}
        for var in order:
            if len(probed) >= self.lam:
                break
            key = bc.instance.variables[var].key.raw
            if table.probe_count(key) >= self.eta:
                continue
            x = bc.result.value(var)
            f = x - math.floor(x)
            st_d, obj_d = bc.probe_fn(var, "down")
            st_u, obj_u = bc.probe_fn(var, "up")
            down_inf = st_d == "infeasible"
            up_inf = st_u == "infeasible"
            delta_down = big if down_inf else max(obj_d - bc.result.objective, 0.0)
            delta_up = big if up_inf else max(obj_u - bc.result.objective, 0.0)
            table.add_observation(key, "down", delta_down / f)
            table.add_observation(key, "up", delta_up / (1.0 - f))
            table.note_probe(key)
            probed[var] = (delta_down, delta_up)
            self.probes_performed += 1
            bc.tree_stats.total_probes += 1
            if self.probe_callback is not None:
                self.probe_callback(bc, var, delta_down, delta_up, down_inf, up_inf)

        best, best_score = -1, -math.inf
        records = []
        for var in bc.candidates:
            if var in probed:
                dd, du = probed[var]
                source = "probe"
            else:
                dd, du = est[var]
                source = "pseudocost"
            s = score_product(dd, du, self.epsilon)
            records.append(ScoreRecord(var, dd, du, s, source))
            if s > best_score or (s == best_score and var < best):
                best, best_score = var, s
        return BranchDecision(best, records, probed_deltas=probed.get(best))

    def stats(self) -> dict:
        return {"probes": self.probes_performed}


class MLRule:
    """Branch on the candidate with the highest predicted log score."""

    def __init__(self, store):
        if store.general is None:
            raise ValueError("model store is missing the general model")
        self.store = store
        self.total_evaluations = 0
        self.fallback_evaluations = 0

    @property
    def name(self) -> str:
        return f"ml:{self.store.scheme}"

    def select(self, bc: BranchContext) -> BranchDecision:
        # group candidates per resolved forest so predictions run batched
        by_forest: dict[int, tuple[object, list[int]]] = {}
        fallback = 0
        for var in bc.candidates:
            key = bc.instance.variables[var].key
            forest, used_fallback = resolve_model(self.store, self.store.scheme, key)
            fallback += used_fallback
            slot = by_forest.setdefault(id(forest), (forest, []))
            slot[1].append(var)

        scores: dict[int, float] = {}
        for forest, vars_ in by_forest.values():
            X = np.stack([bc.features_for(v) for v in vars_])
            preds = forest.predict_batch(X)
            for v, p in zip(vars_, preds):
                scores[v] = float(p)

        self.total_evaluations += len(bc.candidates)
        self.fallback_evaluations += fallback
        best, best_score = -1, -math.inf
        for var in bc.candidates:
            s = scores[var]
            if s > best_score or (s == best_score and var < best):
                best, best_score = var, s
        return BranchDecision(best, [])

    def stats(self) -> dict:
        return {
            "ml_evaluations": self.total_evaluations,
            "ml_fallback": self.fallback_evaluations,
        }


def parse_rule_name(text: str) -> dict:
    """Parse a CLI rule string: mib | rb:L:E (inf allowed) | ml:SCHEME."""
    parts = text.strip().lower().split(":")
    if parts == ["mib"]:
        return {"kind": "mib"}
    if parts[0] == "rb" and len(parts) == 3:
        def num(s):
            return math.inf if s == "inf" else int(s)
        lam, eta = num(parts[1]), num(parts[2])
        if lam != math.inf and lam < 0:
            raise ValueError(f"rb lambda must be >= 0: {text!r}")
        return {"kind": "rb", "lam": lam, "eta": eta}
    if parts[0] == "ml" and len(parts) == 2:
        from .grouping import SCHEMES
        if parts[1] not in SCHEMES:
            raise ValueError(f"unknown grouping scheme in rule {text!r}")
        return {"kind": "ml", "scheme": parts[1]}
    raise ValueError(f"unknown branching rule {text!r}")
