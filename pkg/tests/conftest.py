import numpy as np
import pytest

from branchlab.model import Constraint, MILPInstance, Variable, parse_variable_key
from branchlab.scuc import UCConfig, generate_family


def make_instance(name, variables, constraints):
    """variables: (name, kind, lb, ub, obj); constraints: (terms, sense, rhs)."""
    vs = [Variable(parse_variable_key(n), k, lb, ub, ob) for n, k, lb, ub, ob in variables]
    cs = [Constraint(tuple(t), s, r) for t, s, r in constraints]
    return MILPInstance(name, vs, cs)


def random_bounded_lp(rng: np.random.Generator, max_vars=6, max_rows=6):
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    lower = rng.uniform(-3, 0, n)
    upper = lower + rng.uniform(0.5, 4, n)
    c = rng.uniform(-2, 2, n)
    mid = (lower + upper) / 2
    cons = []
    for _ in range(m):
        a = rng.uniform(-2, 2, n) * (rng.random(n) < 0.7)
        if not a.any():
            a[int(rng.integers(0, n))] = 1.0
        sense = str(rng.choice([">=", "<=", "="], p=[0.42, 0.42, 0.16]))
        rhs = float(a @ mid + rng.uniform(-1.5, 1.5))
        cons.append((tuple((j, float(a[j])) for j in range(n) if a[j] != 0.0), sense, rhs))
    variables = [(f"v{j}", "continuous", float(lower[j]), float(upper[j]), float(c[j]))
                 for j in range(n)]
    return make_instance("rand", variables, cons)


def toy_uc(seed=5, generators=1, hours=3, startup_categories=1, variations=1):
    """UC family small enough for brute-force enumeration (<= 16 binaries)."""
    return generate_family(UCConfig(
        generators=generators, hours=hours, startup_categories=startup_categories,
        seed=seed, variation_count=variations,
        peak_fraction=0.55, pmin_fraction_range=(0.10, 0.25),
    ))


@pytest.fixture(scope="session")
def small_family():
    """A mid-size family used by several pipeline tests."""
    return generate_family(UCConfig(
        generators=3, hours=8, startup_categories=2, seed=11, variation_count=8,
    ))
