import itertools
import math

import pytest

from branchlab.bnb import Limits, Node, OpenSet, relative_gap, select_next_node, solve
from branchlab.branching import MostInfeasibleRule, ReliabilityRule
from branchlab.lp import BoundSet
from conftest import make_instance, toy_uc
from oracles import brute_force_uc_optimum


def knapsack3():
    # min -5x0 -4x1 -3x2  s.t. 2x0+3x1+x2 <= 4
    return make_instance(
        "kn3",
        [("a", "binary", 0, 1, -5.0), ("b", "binary", 0, 1, -4.0),
         ("c", "binary", 0, 1, -3.0)],
        [(((0, 2.0), (1, 3.0), (2, 1.0)), "<=", 4.0)],
    )


def brute_knapsack3():
    best = math.inf
    for x in itertools.product((0, 1), repeat=3):
        if 2 * x[0] + 3 * x[1] + x[2] <= 4:
            best = min(best, -5 * x[0] - 4 * x[1] - 3 * x[2])
    return best


def test_knapsack_matches_enumeration():
    expected = brute_knapsack3()
    for rule in (MostInfeasibleRule(), ReliabilityRule()):
        report = solve(knapsack3(), rule, Limits())
        assert report.termination == "tree_exhausted"
        assert report.primal_bound == pytest.approx(expected, abs=1e-6)
        assert report.relative_gap_percent == 0.0


def test_integral_root_is_one_node():
    inst = make_instance("int", [("x", "binary", 0, 1, 1.0)],
                         [(((0, 1.0),), ">=", 1.0)])
    report = solve(inst, MostInfeasibleRule(), Limits())
    assert report.nodes_processed == 1
    assert report.termination == "tree_exhausted"
    assert report.relative_gap_percent == 0.0


def test_node_limit_one():
    report = solve(knapsack3(), MostInfeasibleRule(), Limits(node_limit=1))
    assert report.nodes_processed == 1
    assert report.termination == "node_limit"
    assert report.relative_gap_percent > 0


def test_toy_uc_exactness_any_rule():
    fam = toy_uc(seed=17, generators=2, hours=2, startup_categories=1, variations=2)
    for inst in fam.variations:
        expected = brute_force_uc_optimum(inst)
        for rule in (MostInfeasibleRule(), ReliabilityRule(lam=2, eta=1)):
            report = solve(inst, rule, Limits())
            assert report.termination == "tree_exhausted"
            assert report.primal_bound == pytest.approx(expected, rel=1e-6)


def test_primal_hint_installed_and_improvable():
    inst = knapsack3()
    opt = brute_knapsack3()
    report = solve(inst, MostInfeasibleRule(), Limits(), primal_hint=opt)
    assert report.primal_bound == pytest.approx(opt, abs=1e-9)
    # a loose hint must be improved by search
    report2 = solve(inst, MostInfeasibleRule(), Limits(), primal_hint=opt + 2.0)
    assert report2.primal_bound == pytest.approx(opt, abs=1e-6)
    assert report2.branching_stats["incumbent_updates"] >= 1


def test_determinism_identical_reports():
    fam = toy_uc(seed=23, generators=2, hours=3, startup_categories=1)
    inst = fam.variations[0]
    a = solve(inst, ReliabilityRule(lam=3, eta=2), Limits(node_limit=40))
    b = solve(inst, ReliabilityRule(lam=3, eta=2), Limits(node_limit=40))
    assert a.to_dict() == b.to_dict()


def test_dual_bound_monotone_under_increasing_node_limits():
    fam = toy_uc(seed=29, generators=3, hours=4, startup_categories=2)
    inst = fam.variations[0]
    prev = -math.inf
    for limit in (1, 2, 4, 8, 16, 32):
        r = solve(inst, MostInfeasibleRule(), Limits(node_limit=limit))
        assert r.best_dual_bound >= prev - 1e-9
        prev = r.best_dual_bound


def test_leaf_objectives_respect_final_dual_bound():
    fam = toy_uc(seed=31, generators=2, hours=3, startup_categories=1)
    inst = fam.variations[0]
    r = solve(inst, MostInfeasibleRule(), Limits())
    assert r.primal_bound >= r.best_dual_bound - 1e-6


# select_next_node unit behavior


def _node(nid, parent_obj, plunge=None):
    return Node(BoundSet(), parent_obj, 1, nid,
                plunge_bound=parent_obj if plunge is None else plunge)


def test_plunge_prefers_smaller_child_bound():
    open_set = OpenSet()
    a, b = _node(1, 10.0, plunge=12.0), _node(2, 10.0, plunge=11.0)
    open_set.push(a)
    open_set.push(b)
    chosen = select_next_node(open_set, [a, b])
    assert chosen.id == 2


def test_plunge_exhausted_falls_back_to_best_bound():
    open_set = OpenSet()
    stale_a, stale_b = _node(5, 3.0), _node(6, 3.0)
    better, worse = _node(3, 1.0), _node(4, 2.0)
    open_set.push(worse)
    open_set.push(better)
    chosen = select_next_node(open_set, [stale_a, stale_b])
    assert chosen.id == 3


def test_best_bound_tie_broken_by_id():
    open_set = OpenSet()
    open_set.push(_node(9, 1.0))
    open_set.push(_node(7, 1.0))
    chosen = select_next_node(open_set, [])
    assert chosen.id == 7


def test_plunge_tie_prefers_down_child():
    open_set = OpenSet()
    down, up = _node(1, 10.0), _node(2, 10.0)
    open_set.push(down)
    open_set.push(up)
    assert select_next_node(open_set, [down, up]).id == 1


def test_relative_gap_formula():
    assert relative_gap(100.0, 99.0) == pytest.approx(1.0)
    assert relative_gap(50.0, 50.0) == 0.0
    assert relative_gap(0.0, -0.5) == pytest.approx(100.0 * 0.5 / 1e-10)
    assert relative_gap(10.0, 11.0) == 0.0  # clamped
