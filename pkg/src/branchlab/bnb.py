"""Branch and bound with best-bound node selection plus plunging.

No cuts, no primal heuristics, no presolve: the tree quality measured here
is attributable to the branching rule alone.  An optional primal hint
installs the incumbent objective at the root; incumbents found during the
search may still replace it when strictly better.

Node selection: after branching, the dive continues with whichever child
has the smaller estimated bound (the probed objective deltas when the rule
probed the branched variable, the parent bound otherwise; the down child
wins ties).  When both children of the last branching are gone, selection
falls back to the globally smallest parent bound, ties by node id.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field

from .branching import BranchContext, PseudocostTable
from .features import TreeStats
from .lp import BoundSet, LPError, NodeLPContext, is_fractional
from ._simplex import LPNumericalError

INTEGRALITY_TOL = 1e-6
PRUNE_REL_TOL = 1e-9


@dataclass
class Node:
    bounds: BoundSet
    parent_objective: float
    depth: int
    id: int
    basis: object = None
    branched_path: tuple = ()
    plunge_bound: float = -math.inf


@dataclass
class Limits:
    node_limit: int | None = None
    time_limit_s: float | None = None
    gap_limit_percent: float | None = None


@dataclass
class SolveReport:
    nodes_processed: int
    best_dual_bound: float
    primal_bound: float
    relative_gap_percent: float
    termination: str   # gap_limit | node_limit | time_limit | tree_exhausted | error
    branching_stats: dict = field(default_factory=dict)
    error_message: str = ""
    # best integer point found by the search itself (None when the primal
    # bound is only the hint); not part of the serialized report schema
    incumbent_solution: list | None = None

    def to_dict(self) -> dict:
        return {
            "nodes_processed": self.nodes_processed,
            "best_dual_bound": self.best_dual_bound,
            "primal_bound": self.primal_bound,
            "relative_gap_percent": self.relative_gap_percent,
            "termination": self.termination,
            "branching_stats": self.branching_stats,
            "error_message": self.error_message,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def relative_gap(primal: float, dual: float) -> float:
    """Gap percentage 100 (primal - dual) / max(|primal|, 1e-10), floored at 0."""
    gap = 100.0 * (primal - dual) / max(abs(primal), 1e-10)
    return max(gap, 0.0)


class OpenSet:
    """Best-bound heap with lazy deletion for plunge-selected nodes."""

    def __init__(self):
        self._heap: list[tuple[float, int]] = []
        self._nodes: dict[int, Node] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def push(self, node: Node) -> None:
        self._nodes[node.id] = node
        heapq.heappush(self._heap, (node.parent_objective, node.id))

    def remove(self, node_id: int) -> Node:
        return self._nodes.pop(node_id)

    def pop_best(self) -> Node:
        while self._heap:
            _, nid = heapq.heappop(self._heap)
            node = self._nodes.pop(nid, None)
            if node is not None:
                return node
        raise IndexError("open set is empty")

    def min_bound(self) -> float:
        while self._heap:
            bound, nid = self._heap[0]
            if nid in self._nodes:
                return bound
            heapq.heappop(self._heap)
        return math.inf

    def contains(self, node_id: int) -> bool:
        return node_id in self._nodes


def select_next_node(open_set: OpenSet, last_children: list[Node]) -> Node:
    """Plunge into the most recent children while any is open, else best bound."""
    alive = [c for c in last_children if open_set.contains(c.id)]
    if alive:
        alive.sort(key=lambda c: (c.plunge_bound, c.id))
        return open_set.remove(alive[0].id)
    return open_set.pop_best()


def _integral(instance, result) -> bool:
    return all(
        not is_fractional(result.value(i), INTEGRALITY_TOL)
        for i in instance.binary_indices
    )


def solve(
    instance,
    rule,
    limits: Limits | None = None,
    primal_hint: float | None = None,
) -> SolveReport:
    limits = limits or Limits()
    t_start = time.monotonic()

    incumbent = math.inf if primal_hint is None else float(primal_hint)
    incumbent_updates = 0
    best_dual = -math.inf
    nodes_processed = 0
    next_id = 1
    stats = TreeStats()
    pseudocosts = PseudocostTable()

    open_set = OpenSet()
    open_set.push(Node(BoundSet(), -math.inf, 0, 0))
    last_children: list[Node] = []

    def make_report(termination: str, message: str = "") -> SolveReport:
        dual = incumbent if termination == "tree_exhausted" else best_dual
        gap = (
            relative_gap(incumbent, dual)
            if math.isfinite(incumbent) and math.isfinite(dual)
            else (0.0 if termination == "tree_exhausted" else math.inf)
        )
        branching_stats = {
            "rule": rule.name,
            "incumbent_updates": incumbent_updates,
            **rule.stats(),
        }
        return SolveReport(
            nodes_processed=nodes_processed,
            best_dual_bound=dual,
            primal_bound=incumbent,
            relative_gap_percent=gap,
            termination=termination,
            branching_stats=branching_stats,
            error_message=message,
        )

    while len(open_set):
        node = select_next_node(open_set, last_children)
        try:
            ctx = NodeLPContext(instance, node.bounds, warm_hint=node.basis)
        except (LPError, LPNumericalError) as exc:
            return make_report("error", f"node {node.id}: {exc}")
        nodes_processed += 1
        stats.max_depth_seen = max(stats.max_depth_seen, node.depth)
        result = ctx.result

        if result.status == "iteration_limit":
            return make_report("error", f"node {node.id}: LP pivot limit reached")
        if result.status == "unbounded":
            return make_report("error", f"node {node.id}: relaxation is unbounded")

        if result.status == "optimal":
            if node.id == 0:
                stats.root_objective = result.objective
            prune_bound = incumbent - PRUNE_REL_TOL * (1.0 + abs(incumbent))
            if result.objective >= prune_bound:
                pass  # pruned by bound
            elif _integral(instance, result):
                if result.objective < incumbent:
                    incumbent = result.objective
                    incumbent_updates += 1
            else:
                candidates = [
                    i for i in instance.binary_indices
                    if is_fractional(result.value(i), INTEGRALITY_TOL)
                ]
                stats.node_candidate_count = len(candidates)
                bc = BranchContext(
                    instance=instance,
                    node=node,
                    result=result,
                    candidates=candidates,
                    pseudocosts=pseudocosts,
                    tree_stats=stats,
                    probe_fn=ctx.probe,
                )
                try:
                    decision = rule.select(bc)
                except (LPError, LPNumericalError) as exc:
                    return make_report("error", f"node {node.id} branching: {exc}")
                var = decision.var
                value = result.value(var)
                path = node.branched_path + (var,)
                down_est, up_est = result.objective, result.objective
                if decision.probed_deltas is not None:
                    down_est += max(decision.probed_deltas[0], 0.0)
                    up_est += max(decision.probed_deltas[1], 0.0)
                down = Node(
                    bounds=node.bounds.tightened(var, -math.inf, math.floor(value)),
                    parent_objective=result.objective,
                    depth=node.depth + 1,
                    id=next_id,
                    basis=result.basis,
                    branched_path=path,
                    plunge_bound=down_est,
                )
                up = Node(
                    bounds=node.bounds.tightened(var, math.ceil(value), math.inf),
                    parent_objective=result.objective,
                    depth=node.depth + 1,
                    id=next_id + 1,
                    basis=result.basis,
                    branched_path=path,
                    plunge_bound=up_est,
                )
                next_id += 2
                open_set.push(down)
                open_set.push(up)
                last_children = [down, up]

        best_dual = max(best_dual, min(open_set.min_bound(), incumbent))

        if limits.gap_limit_percent is not None and math.isfinite(incumbent):
            if relative_gap(incumbent, best_dual) <= limits.gap_limit_percent:
                return make_report("gap_limit")
        if limits.node_limit is not None and nodes_processed >= limits.node_limit:
            return make_report("node_limit")
        if limits.time_limit_s is not None and time.monotonic() - t_start > limits.time_limit_s:
            return make_report("time_limit")

    return make_report("tree_exhausted")
