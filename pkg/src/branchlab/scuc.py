"""Desk-scale unit-commitment instance families.

Generates MILP instances with the commitment binary structure (is_on,
switch_on, switch_off, startup-by-category) plus continuous production,
and produces seeded variations of a base instance that differ only in
objective coefficients, demand right-hand sides, and capacity coefficients.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .model import (
    BINARY,
    CONTINUOUS,
    Constraint,
    MILPInstance,
    ModelError,
    Variable,
    VariableKey,
    parse_variable_key,
)
from .rng import Rng


@dataclass
class UCConfig:
    generators: int = 12
    hours: int = 24
    startup_categories: int = 3
    seed: int = 1
    variation_count: int = 50
    name: str = ""

    # demand profile
    peak_fraction: float = 0.70          # peak demand / fleet capacity
    peak_trough_ratio: float = 1.6
    demand_noise: float = 0.03

    # generator parameter ranges
    pmax_range: tuple[float, float] = (60.0, 400.0)
    pmin_fraction_range: tuple[float, float] = (0.15, 0.33)
    energy_cost_range: tuple[float, float] = (18.0, 45.0)
    noload_cost_factor_range: tuple[float, float] = (1.5, 4.0)
    startup_cost_factor_range: tuple[float, float] = (6.0, 15.0)
    category_cost_growth: float = 0.6
    min_up_range: tuple[int, int] = (2, 6)
    min_down_range: tuple[int, int] = (2, 6)

    # variation randomization
    demand_scale_range: tuple[float, float] = (0.90, 1.10)
    cost_scale_range: tuple[float, float] = (0.95, 1.05)
    pmax_scale_range: tuple[float, float] = (0.98, 1.02)

    train_fraction: float = 0.8

    def __post_init__(self):
        if min(self.generators, self.hours, self.startup_categories) < 1:
            raise ModelError("generators, hours and startup_categories must all be >= 1")
        if self.variation_count < 1:
            raise ModelError("variation_count must be >= 1")
        if not self.name:
            self.name = (
                f"uc_g{self.generators}_t{self.hours}"
                f"_s{self.startup_categories}_seed{self.seed}"
            )


@dataclass
class _GeneratorParams:
    pmax: float
    pmin: float
    energy_cost: float
    noload_cost: float
    startup_costs: list[float]
    min_up: int
    min_down: int


@dataclass
class UCFamily:
    config: UCConfig
    base: MILPInstance
    variations: list[MILPInstance]

    @property
    def train_count(self) -> int:
        return int(round(self.config.train_fraction * len(self.variations)))

    def train_instances(self) -> list[MILPInstance]:
        return self.variations[: self.train_count]

    def test_instances(self) -> list[MILPInstance]:
        return self.variations[self.train_count:]

    def binary_keys(self) -> list[VariableKey]:
        return [v.key for v in self.base.variables if v.kind == BINARY]


def _draw_generators(cfg: UCConfig, rng: Rng) -> list[_GeneratorParams]:
    lo_p, hi_p = cfg.pmax_range
    lo_c, hi_c = cfg.energy_cost_range
    gens = []
    for _ in range(cfg.generators):
        pmax = rng.uniform(lo_p, hi_p)
        pmin = pmax * rng.uniform(*cfg.pmin_fraction_range)
        # larger units run cheaper per MWh, with some scatter
        size01 = (pmax - lo_p) / (hi_p - lo_p) if hi_p > lo_p else 0.5
        energy = hi_c - (hi_c - lo_c) * size01 + rng.uniform(-2.0, 2.0)
        noload = pmax * rng.uniform(*cfg.noload_cost_factor_range)
        startup_base = pmax * rng.uniform(*cfg.startup_cost_factor_range)
        startups = [
            startup_base * (1.0 + cfg.category_cost_growth * s)
            for s in range(cfg.startup_categories)
        ]
        min_up = cfg.min_up_range[0] + rng.randint(cfg.min_up_range[1] - cfg.min_up_range[0] + 1)
        min_down = cfg.min_down_range[0] + rng.randint(
            cfg.min_down_range[1] - cfg.min_down_range[0] + 1
        )
        gens.append(
            _GeneratorParams(
                pmax=pmax,
                pmin=pmin,
                energy_cost=max(energy, 1.0),
                noload_cost=noload,
                startup_costs=startups,
                min_up=min(min_up, cfg.hours),
                min_down=min(min_down, cfg.hours),
            )
        )
    return gens


def _draw_demand(cfg: UCConfig, fleet_capacity: float, rng: Rng) -> np.ndarray:
    T = cfg.hours
    ratio = cfg.peak_trough_ratio
    amp = (ratio - 1.0) / (ratio + 1.0)
    mean = cfg.peak_fraction * fleet_capacity / (1.0 + amp)
    t = np.arange(T)
    curve = 1.0 + amp * np.sin(2.0 * math.pi * (t - T / 4.0) / T)
    noise = np.array([rng.uniform(1.0 - cfg.demand_noise, 1.0 + cfg.demand_noise) for _ in t])
    return mean * curve * noise


def _build_instance(
    name: str,
    cfg: UCConfig,
    gens: list[_GeneratorParams],
    demand: np.ndarray,
    pmax_eff: list[float],
    prod_upper: list[float],
) -> MILPInstance:
    G, T, S = cfg.generators, cfg.hours, cfg.startup_categories

    variables: list[Variable] = []
    vidx: dict[str, int] = {}

    def add(raw: str, kind: str, lb: float, ub: float, obj: float) -> int:
        vidx[raw] = len(variables)
        variables.append(Variable(parse_variable_key(raw), kind, lb, ub, obj))
        return vidx[raw]

    for g in range(G):
        gen = gens[g]
        for t in range(T):
            add(f"is_on[{g},{t}]", BINARY, 0.0, 1.0, gen.noload_cost)
            add(f"switch_on[{g},{t}]", BINARY, 0.0, 1.0, 0.0)
            add(f"switch_off[{g},{t}]", BINARY, 0.0, 1.0, 0.0)
            for s in range(S):
                add(f"startup[{g},{t},{s}]", BINARY, 0.0, 1.0, gen.startup_costs[s])
    for g in range(G):
        for t in range(T):
            add(f"p[{g},{t}]", CONTINUOUS, 0.0, prod_upper[g], gens[g].energy_cost)

    u = lambda g, t: vidx[f"is_on[{g},{t}]"]
    on = lambda g, t: vidx[f"switch_on[{g},{t}]"]
    off = lambda g, t: vidx[f"switch_off[{g},{t}]"]
    su = lambda g, t, s: vidx[f"startup[{g},{t},{s}]"]
    p = lambda g, t: vidx[f"p[{g},{t}]"]

    cons: list[Constraint] = []
    for g in range(G):
        gen = gens[g]
        for t in range(T):
            # production window tied to commitment
            cons.append(Constraint(((p(g, t), 1.0), (u(g, t), -gen.pmin)), ">=", 0.0))
            cons.append(Constraint(((p(g, t), 1.0), (u(g, t), -pmax_eff[g])), "<=", 0.0))
    for t in range(T):
        cons.append(
            Constraint(tuple((p(g, t), 1.0) for g in range(G)), ">=", float(demand[t]))
        )
    for g in range(G):
        for t in range(T):
            # commitment logic; all units start the horizon offline
            terms = [(u(g, t), 1.0), (on(g, t), -1.0), (off(g, t), 1.0)]
            if t > 0:
                terms.append((u(g, t - 1), -1.0))
            cons.append(Constraint(tuple(terms), "=", 0.0))
    for g in range(G):
        gen = gens[g]
        for t in range(T):
            window = range(max(0, t - gen.min_up + 1), t + 1)
            terms = [(on(g, tau), 1.0) for tau in window] + [(u(g, t), -1.0)]
            cons.append(Constraint(tuple(terms), "<=", 0.0))
            window = range(max(0, t - gen.min_down + 1), t + 1)
            terms = [(off(g, tau), 1.0) for tau in window] + [(u(g, t), 1.0)]
            cons.append(Constraint(tuple(terms), "<=", 1.0))
    for g in range(G):
        for t in range(T):
            terms = [(on(g, t), 1.0)] + [(su(g, t, s), -1.0) for s in range(S)]
            cons.append(Constraint(tuple(terms), "=", 0.0))

    return MILPInstance(name, variables, cons)


def _check_all_on_feasible(cfg: UCConfig, gens, demand, pmax_eff) -> None:
    """Reject configs where the all-on proportional dispatch is infeasible."""
    cap = sum(pmax_eff)
    peak = float(np.max(demand))
    if peak > cap:
        raise ModelError(f"infeasible config: peak demand {peak:.1f} exceeds capacity {cap:.1f}")
    for t, d in enumerate(demand):
        for g, gen in enumerate(gens):
            share = d * pmax_eff[g] / cap
            if share < gen.pmin - 1e-9:
                raise ModelError(
                    f"infeasible config: proportional dispatch at hour {t} puts "
                    f"generator {g} below its minimum power"
                )


def generate_family(cfg: UCConfig) -> UCFamily:
    root = Rng(cfg.seed).child("family")
    gens = _draw_generators(cfg, root.child("generators"))
    base_demand = _draw_demand(cfg, sum(g.pmax for g in gens), root.child("demand"))

    # production upper bounds are shared across variations so that only
    # coefficients, rhs and objective differ within the family
    hi_scale = cfg.pmax_scale_range[1]
    prod_upper = [g.pmax * hi_scale for g in gens]

    base_pmax = [g.pmax for g in gens]
    _check_all_on_feasible(cfg, gens, base_demand, base_pmax)
    base = _build_instance(cfg.name, cfg, gens, base_demand, base_pmax, prod_upper)

    variations = []
    for v in range(cfg.variation_count):
        r = root.child("variation", v)
        demand = base_demand * np.array(
            [r.uniform(*cfg.demand_scale_range) for _ in range(cfg.hours)]
        )
        cost_scale = [r.uniform(*cfg.cost_scale_range) for _ in range(cfg.generators)]
        pmax_eff = [g.pmax * r.uniform(*cfg.pmax_scale_range) for g in gens]
        vgens = [
            _GeneratorParams(
                pmax=g.pmax,
                pmin=g.pmin,
                energy_cost=g.energy_cost * cost_scale[i],
                noload_cost=g.noload_cost * cost_scale[i],
                startup_costs=[c * cost_scale[i] for c in g.startup_costs],
                min_up=g.min_up,
                min_down=g.min_down,
            )
            for i, g in enumerate(gens)
        ]
        _check_all_on_feasible(cfg, vgens, demand, pmax_eff)
        variations.append(
            _build_instance(f"{cfg.name}_v{v:03d}", cfg, vgens, demand, pmax_eff, prod_upper)
        )

    return UCFamily(config=cfg, base=base, variations=variations)


def write_family(family: UCFamily, outdir) -> dict:
    """Write one JSON file per variation plus the family manifest."""
    from .model import save_instance

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for inst in family.variations:
        fname = f"{inst.name}.json"
        save_instance(inst, outdir / fname)
        files.append(fname)
    cfg = asdict(family.config)
    manifest = {
        "config": cfg,
        "seed": family.config.seed,
        "variations": files,
        "split": {
            "train": files[: family.train_count],
            "test": files[family.train_count:],
        },
    }
    with open(outdir / "family_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def enumerate_binary_optimum(instance: MILPInstance, solve_lp_fn) -> float:
    """True optimum by enumerating binary assignments, LP for the rest.

    Exponential in the binary count; guarded to <= 20 binaries.  Pure-binary
    constraints filter assignments before any LP is solved.
    """
    bins = instance.binary_indices
    if len(bins) > 20:
        raise ModelError(f"enumeration limited to 20 binaries, instance has {len(bins)}")
    bin_set = set(bins)
    cont = [i for i in range(instance.num_variables) if i not in bin_set]
    nb = len(bins)

    pure, mixed = [], []
    for con in instance.constraints:
        (pure if all(i in bin_set for i, _ in con.terms) else mixed).append(con)

    assignments = np.array(list(itertools.product((0.0, 1.0), repeat=nb))) if nb else np.zeros((1, 0))
    pos = {v: k for k, v in enumerate(bins)}
    keep = np.ones(len(assignments), dtype=bool)
    for con in pure:
        lhs = np.zeros(len(assignments))
        for idx, coeff in con.terms:
            lhs += coeff * assignments[:, pos[idx]]
        if con.sense == ">=":
            keep &= lhs >= con.rhs - 1e-9
        elif con.sense == "<=":
            keep &= lhs <= con.rhs + 1e-9
        else:
            keep &= np.abs(lhs - con.rhs) <= 1e-9

    obj_bin = np.array([instance.variables[i].obj_coeff for i in bins])
    best = math.inf
    for x in assignments[keep]:
        fixed_cost = float(obj_bin @ x) if nb else 0.0
        if cont:
            sub = _continuous_subproblem(instance, bins, x, cont, mixed)
            if sub is None:
                continue
            res = solve_lp_fn(sub)
            if res.status != "optimal":
                continue
            fixed_cost += res.objective
        else:
            ok = True
            for con in mixed:
                lhs = sum(c * x[pos[i]] for i, c in con.terms)
                if con.sense == ">=" and lhs < con.rhs - 1e-9:
                    ok = False
                elif con.sense == "<=" and lhs > con.rhs + 1e-9:
                    ok = False
                elif con.sense == "=" and abs(lhs - con.rhs) > 1e-9:
                    ok = False
            if not ok:
                continue
        best = min(best, fixed_cost)
    if not math.isfinite(best):
        raise ModelError(f"instance {instance.name} is infeasible")
    return best


def _continuous_subproblem(instance, bins, x, cont, mixed) -> MILPInstance | None:
    pos = {v: k for k, v in enumerate(bins)}
    new_idx = {v: k for k, v in enumerate(cont)}
    variables = [instance.variables[i] for i in cont]
    cons = []
    for con in mixed:
        terms, shift = [], 0.0
        for idx, coeff in con.terms:
            if idx in pos:
                shift += coeff * x[pos[idx]]
            else:
                terms.append((new_idx[idx], coeff))
        rhs = con.rhs - shift
        if not terms:
            if con.sense == ">=" and rhs > 1e-9:
                return None
            if con.sense == "<=" and rhs < -1e-9:
                return None
            if con.sense == "=" and abs(rhs) > 1e-9:
                return None
            continue
        cons.append(Constraint(tuple(terms), con.sense, rhs))
    return MILPInstance(f"{instance.name}_sub", variables, cons)


def heuristic_incumbent(instance: MILPInstance) -> float | None:
    """Objective of the all-on schedule with cost-optimal dispatch.

    Fixes every commitment binary to the always-on pattern (cheapest startup
    category at hour 0) and solves the remaining dispatch LP.  Valid for any
    instance built by this generator; returns None when the instance does
    not carry the commitment structure or the schedule is infeasible.
    """
    from .lp import BoundSet, solve_lp

    overrides: dict[int, tuple[float, float]] = {}
    startup_group: dict[tuple[int, int], list[int]] = {}
    for i, v in enumerate(instance.variables):
        if v.kind != BINARY:
            continue
        k = v.key
        if k.base == "is_on":
            overrides[i] = (1.0, 1.0)
        elif k.base == "switch_on":
            overrides[i] = (1.0, 1.0) if k.time == 0 else (0.0, 0.0)
        elif k.base == "switch_off":
            overrides[i] = (0.0, 0.0)
        elif k.base == "startup":
            overrides[i] = (0.0, 0.0)
            if k.time == 0:
                startup_group.setdefault((k.generator, k.time), []).append(i)
        else:
            return None
    if not overrides:
        return None
    for members in startup_group.values():
        cheapest = min(members, key=lambda i: (instance.variables[i].obj_coeff, i))
        overrides[cheapest] = (1.0, 1.0)
    result = solve_lp(instance, BoundSet(overrides))
    return result.objective if result.status == "optimal" else None


def optimal_value_oracle(instance: MILPInstance) -> float:
    """True MILP optimum: enumeration when small, exhaustive search otherwise."""
    from .lp import solve_lp

    if len(instance.binary_indices) <= 20:
        return enumerate_binary_optimum(instance, lambda sub: solve_lp(sub))
    from .bnb import Limits, solve
    from .branching import MostInfeasibleRule

    report = solve(instance, MostInfeasibleRule(), Limits())
    if report.termination != "tree_exhausted":
        raise ModelError(f"exhaustive solve of {instance.name} ended with {report.termination}")
    return report.primal_bound
