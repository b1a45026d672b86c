"""Candidate-variable feature vectors for branching-score regression.

One fixed 16-slot layout, shared verbatim between training-data collection
and inference (single code path).  Slots 1-6 are static problem features,
7-9 describe the candidate at the current relaxation, 10-16 are dynamic
search features.

Layout (0-based array index / declared range):
   0  sign of the objective coefficient            {-1, 0, 1}
   1  |c_i| / max_j |c_j|                          [0, 1]
   2  fraction of constraints containing i         [0, 1]
   3  min over rows of |a_ji| / sum_k |a_jk|       [0, 1]
   4  mean of the same row shares                  [0, 1]
   5  max of the same row shares                   [0, 1]
   6  fractionality min(f, 1-f)                    [0, 0.5]
   7  distance to floor f                          [0, 1]
   8  relaxation value of the variable             [0, 1] for binaries
   9  up pseudocost unit gain                      unnormalized
  10  down pseudocost unit gain                    unnormalized
  11  probe count of i / (total probes + 1)        [0, 1]
  12  depth / (1 + max depth seen)                 [0, 1]
  13  (node obj - root obj) / (1 + |root obj|)     unnormalized, >= -eps
  14  fractional candidates / binary count         [0, 1]
  15  1 if branched on an ancestor, else 0         {0, 1}
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEATURE_LAYOUT_VERSION = "fv1"
NUM_FEATURES = 16


@dataclass
class TreeStats:
    """Search-level counters visible to feature extraction."""

    root_objective: float = 0.0
    max_depth_seen: int = 0
    total_probes: int = 0
    node_candidate_count: int = 0


def _static_table(instance) -> np.ndarray:
    """Per-variable static slots (0-5), cached on the instance."""
    cached = getattr(instance, "_feat_static", None)
    if cached is not None:
        return cached
    n = instance.num_variables
    m = instance.num_constraints
    table = np.zeros((n, 6))
    c = np.array([v.obj_coeff for v in instance.variables])
    cmax = float(np.max(np.abs(c))) if n else 0.0
    table[:, 0] = np.sign(c)
    if cmax > 0:
        table[:, 1] = np.abs(c) / cmax

    shares: list[list[float]] = [[] for _ in range(n)]
    for con in instance.constraints:
        total = sum(abs(coeff) for _, coeff in con.terms)
        if total <= 0:
            continue
        for idx, coeff in con.terms:
            shares[idx].append(abs(coeff) / total)
    for i in range(n):
        if shares[i]:
            table[i, 2] = len(shares[i]) / m
            table[i, 3] = min(shares[i])
            table[i, 4] = sum(shares[i]) / len(shares[i])
            table[i, 5] = max(shares[i])
    instance._feat_static = table
    return table


def compute_features(
    instance,
    node,
    lp_result,
    var: int,
    pseudocosts,
    depth: int,
    tree_stats: TreeStats,
) -> np.ndarray:
    phi = np.zeros(NUM_FEATURES)
    phi[:6] = _static_table(instance)[var]

    x = lp_result.value(var)
    f = x - math.floor(x)
    phi[6] = min(f, 1.0 - f)
    phi[7] = f
    phi[8] = x

    key = instance.variables[var].key.raw
    phi[9] = pseudocosts.unit_gain(key, "up")
    phi[10] = pseudocosts.unit_gain(key, "down")
    phi[11] = pseudocosts.probe_count(key) / (tree_stats.total_probes + 1.0)
    phi[12] = depth / (1.0 + tree_stats.max_depth_seen)
    phi[13] = (lp_result.objective - tree_stats.root_objective) / (
        1.0 + abs(tree_stats.root_objective)
    )
    nbin = len(instance.binary_indices)
    phi[14] = tree_stats.node_candidate_count / max(nbin, 1)
    phi[15] = 1.0 if var in node.branched_path else 0.0
    return phi
