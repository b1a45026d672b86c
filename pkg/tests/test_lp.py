import math

import numpy as np
import pytest

from branchlab.lp import BoundSet, NodeLPContext, probe_bound_change, solve_lp
from conftest import make_instance, random_bounded_lp
from oracles import vertex_enumeration_optimum


def test_bound_attained_optimum():
    inst = make_instance("t", [("x", "continuous", 0, 1, -1.0)], [])
    res = solve_lp(inst)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-1.0, abs=1e-9)
    assert res.value(0) == pytest.approx(1.0, abs=1e-9)


def test_simple_constrained_optimum():
    # min -x-y s.t. x+y <= 1 has optimum -1 at any vertex of the face;
    # expected value from vertex enumeration
    inst = make_instance(
        "t", [("x", "continuous", 0, 1, -1.0), ("y", "continuous", 0, 1, -1.0)],
        [(((0, 1.0), (1, 1.0)), "<=", 1.0)],
    )
    status, oracle = vertex_enumeration_optimum(inst)
    assert status == "optimal" and oracle == pytest.approx(-1.0)
    res = solve_lp(inst)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(oracle, abs=1e-9)


def test_contradictory_constraints_infeasible():
    inst = make_instance("t", [("x", "continuous", 0, 1, 1.0)],
                         [(((0, 1.0),), ">=", 1.0), (((0, 1.0),), "<=", 0.0)])
    assert solve_lp(inst).status == "infeasible"


def test_unbounded_detected():
    inst = make_instance("t", [("x", "continuous", 0, math.inf, -1.0)], [])
    assert solve_lp(inst).status == "unbounded"


def test_iteration_limit_status():
    rng = np.random.default_rng(0)
    inst = random_bounded_lp(rng)
    res = solve_lp(inst, max_pivots=0)
    assert res.status in ("iteration_limit", "optimal")
    full = solve_lp(inst)
    if full.iterations > 0:
        assert solve_lp(inst, max_pivots=0).status == "iteration_limit"


def test_objective_matches_primal_reevaluation():
    rng = np.random.default_rng(3)
    for _ in range(40):
        inst = random_bounded_lp(rng)
        res = solve_lp(inst)
        if res.status != "optimal":
            continue
        c = np.array([v.obj_coeff for v in inst.variables])
        assert abs(res.objective - float(c @ res.primal)) <= 1e-8 * (1 + abs(res.objective))


def test_optimal_primal_satisfies_bounds_and_rows():
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(60):
        inst = random_bounded_lp(rng)
        res = solve_lp(inst)
        if res.status != "optimal":
            continue
        checked += 1
        for j, v in enumerate(inst.variables):
            assert v.lower - 1e-7 <= res.primal[j] <= v.upper + 1e-7
        for con in inst.constraints:
            lhs = sum(co * res.primal[j] for j, co in con.terms)
            tol = 1e-6 * (1 + abs(con.rhs))
            if con.sense == ">=":
                assert lhs >= con.rhs - tol
            elif con.sense == "<=":
                assert lhs <= con.rhs + tol
            else:
                assert abs(lhs - con.rhs) <= tol
    assert checked >= 30


def test_matches_vertex_enumeration_oracle():
    rng = np.random.default_rng(11)
    agreements = 0
    for _ in range(60):
        inst = random_bounded_lp(rng, max_vars=5, max_rows=5)
        status, oracle = vertex_enumeration_optimum(inst)
        res = solve_lp(inst)
        assert res.status == status
        if status == "optimal":
            assert res.objective == pytest.approx(oracle, abs=1e-6, rel=1e-6)
        agreements += 1
    assert agreements == 60


def test_warm_start_matches_cold():
    rng = np.random.default_rng(21)
    for _ in range(30):
        inst = random_bounded_lp(rng)
        base = solve_lp(inst)
        if base.status != "optimal":
            continue
        j = int(rng.integers(0, inst.num_variables))
        v = inst.variables[j]
        mid = (v.lower + v.upper) / 2
        bounds = BoundSet({j: (v.lower, mid)})
        cold = solve_lp(inst, bounds)
        warm = solve_lp(inst, bounds, warm_hint=base.basis)
        assert cold.status == warm.status
        if cold.status == "optimal":
            assert warm.objective == pytest.approx(cold.objective, abs=1e-7, rel=1e-7)


def test_probe_monotone_and_matches_scratch_resolve():
    # fractional knapsack LP: probe objectives must equal an independent
    # from-scratch re-solve with the fixed bound
    inst = make_instance(
        "kn",
        [("x", "binary", 0, 1, -3.0), ("y", "binary", 0, 1, -2.0)],
        [(((0, 2.0), (1, 1.0)), "<=", 1.5)],
    )
    parent = solve_lp(inst)
    assert parent.status == "optimal"
    frac = [i for i in range(2) if 1e-6 < parent.primal[i] % 1 < 1 - 1e-6]
    assert frac == [0]
    down = probe_bound_change(inst, BoundSet(), parent, 0, "down")
    up = probe_bound_change(inst, BoundSet(), parent, 0, "up")
    scratch_down = solve_lp(inst, BoundSet({0: (0.0, 0.0)}))
    scratch_up = solve_lp(inst, BoundSet({0: (1.0, 1.0)}))
    assert down.objective == pytest.approx(scratch_down.objective, abs=1e-7)
    assert up.status == scratch_up.status == "infeasible"
    assert down.objective >= parent.objective - 1e-6


def test_probe_integral_variable_rejected():
    inst = make_instance("t", [("x", "binary", 0, 1, 1.0)], [(((0, 1.0),), ">=", 1.0)])
    res = solve_lp(inst)
    assert res.status == "optimal"
    with pytest.raises(ValueError, match="integral"):
        probe_bound_change(inst, BoundSet(), res, 0, "down")


def test_node_context_probe_restores_state():
    inst = make_instance(
        "kn",
        [("x", "binary", 0, 1, -3.0), ("y", "binary", 0, 1, -2.0),
         ("z", "binary", 0, 1, -1.0)],
        [(((0, 2.0), (1, 1.0), (2, 1.5)), "<=", 2.2)],
    )
    ctx = NodeLPContext(inst)
    first = [ctx.probe(0, "down"), ctx.probe(0, "up")]
    for _ in range(3):
        assert ctx.probe(0, "down") == first[0]
        assert ctx.probe(0, "up") == first[1]


def test_boundset_validation():
    with pytest.raises(ValueError):
        BoundSet({0: (1.0, 0.0)})
    b = BoundSet({0: (0.0, 1.0)})
    t = b.tightened(0, 0.0, 0.0)
    assert t.overrides[0] == (0.0, 0.0)
    assert b.overrides[0] == (0.0, 1.0)
