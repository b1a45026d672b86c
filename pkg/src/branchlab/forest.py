"""Extremely randomized trees regression with reproducible growth.

Every tree sees the full sample set (no bootstrap).  At each node a fixed
number of candidate features is drawn without replacement, each gets one
threshold drawn uniformly between the feature's min and max over the node's
samples, and the candidate with the largest variance reduction wins.  All
randomness comes from the package Rng, so a (data, hyperparams, seed)
triple grows a bit-identical forest on any platform.

Stream discipline: tree t uses rng.child("tree", t); within a node the
draws are the feature subset first, then one threshold per non-constant
candidate in draw order; children are grown left before right.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .backend import active_kernels
from .features import FEATURE_LAYOUT_VERSION
from .rng import Rng

MODEL_FORMAT = "branchlab-forest-v1"


class ModelLoadError(ValueError):
    """Corrupt model file or feature-layout mismatch."""


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 25
    min_split: int = 10
    max_depth: int = 25
    k_features: int = 4


# Per-scheme settings; finer groupings get smaller trees to curb overfitting.
SCHEME_HYPERPARAMS = {
    "et": Hyperparams(n_trees=25, min_split=10, max_depth=25),
    "pna": Hyperparams(n_trees=25, min_split=8, max_depth=16),
    "pti": Hyperparams(n_trees=25, min_split=8, max_depth=12),
    "pge": Hyperparams(n_trees=25, min_split=5, max_depth=12),
    "pv": Hyperparams(n_trees=25, min_split=5, max_depth=12),
}


class Tree:
    """Flattened binary tree; leaves have left == -1 and carry the value."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    def __len__(self) -> int:
        return len(self.feature)


class _TreeBuilder:
    def __init__(self, X: np.ndarray, y: np.ndarray, hp: Hyperparams, rng: Rng):
        self.X, self.y, self.hp, self.rng = X, y, hp, rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        ys = self.y[idx]
        n = len(idx)
        if n < self.hp.min_split or depth >= self.hp.max_depth or ys.min() == ys.max():
            self.value[node] = float(ys.mean())
            return node

        nfeat = self.X.shape[1]
        cand = self.rng.sample_indices(nfeat, min(self.hp.k_features, nfeat))
        best_feat, best_thr, best_mask, best_red = -1, 0.0, None, -1.0
        total_var = float(ys.var())
        for f in cand:
            col = self.X[idx, f]
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                continue
            thr = self.rng.uniform(lo, hi)
            mask = col <= thr
            n_left = int(mask.sum())
            if n_left == 0 or n_left == n:
                # threshold rounded onto a bound of the value range
                continue
            yl, yr = ys[mask], ys[~mask]
            red = total_var - (n_left * float(yl.var()) + (n - n_left) * float(yr.var())) / n
            if red > best_red:
                best_feat, best_thr, best_mask, best_red = f, thr, mask, red

        if best_mask is None:
            # duplicated feature rows with differing targets
            self.value[node] = float(ys.mean())
            return node

        self.feature[node] = best_feat
        self.threshold[node] = best_thr
        self.left[node] = self.build(idx[best_mask], depth + 1)
        self.right[node] = self.build(idx[~best_mask], depth + 1)
        return node

    def finish(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int32),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int32),
            np.array(self.right, dtype=np.int32),
            np.array(self.value, dtype=np.float64),
        )


class Forest:
    def __init__(self, trees: list[Tree], hyperparams: Hyperparams, seed: int,
                 feature_layout_version: str = FEATURE_LAYOUT_VERSION):
        self.trees = trees
        self.hyperparams = hyperparams
        self.seed = seed
        self.feature_layout_version = feature_layout_version
        self._flat = None

    def _flatten(self):
        if self._flat is None:
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            for i, t in enumerate(self.trees):
                offsets[i + 1] = offsets[i] + len(t)
            self._flat = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([t.left for t in self.trees]),
                np.concatenate([t.right for t in self.trees]),
                np.concatenate([t.value for t in self.trees]),
                offsets,
            )
        return self._flat

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("predict_batch expects a 2-d sample matrix")
        feature, threshold, left, right, value, offsets = self._flatten()
        return active_kernels().forest_predict(
            feature, threshold, left, right, value, offsets, X
        )

    def predict(self, x: np.ndarray) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])


def fit(X: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("cannot fit a forest on an empty sample set")
    if len(X) != len(y):
        raise ValueError("feature and target lengths differ")
    root = Rng(seed)
    trees = []
    idx = np.arange(len(X))
    for t in range(hp.n_trees):
        builder = _TreeBuilder(X, y, hp, root.child("tree", t))
        builder.build(idx, 0)
        trees.append(builder.finish())
    return Forest(trees, hp, seed)


def training_mse(forest: Forest, X: np.ndarray, y: np.ndarray) -> float:
    pred = forest.predict_batch(np.asarray(X, dtype=np.float64))
    return float(np.mean((pred - np.asarray(y)) ** 2))


def cross_validate(X, y, hp: Hyperparams, folds: int, seed: int) -> list[float]:
    """Per-fold MSE from a seeded shuffle split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(X) < folds:
        raise ValueError(f"{folds} folds but only {len(X)} samples")
    order = list(range(len(X)))
    Rng(seed).child("cv-shuffle").shuffle(order)
    parts = np.array_split(np.array(order), folds)
    mses = []
    for f, test_idx in enumerate(parts):
        train_idx = np.concatenate([p for i, p in enumerate(parts) if i != f])
        model = fit(X[train_idx], y[train_idx], hp, Rng(seed).child("cv-fold", f).seed)
        pred = model.predict_batch(X[test_idx])
        mses.append(float(np.mean((pred - y[test_idx]) ** 2)))
    return mses


def save_model(forest: Forest, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "feature_layout_version": forest.feature_layout_version,
        "seed": forest.seed,
        "hyperparams": {
            "n_trees": forest.hyperparams.n_trees,
            "min_split": forest.hyperparams.min_split,
            "max_depth": forest.hyperparams.max_depth,
            "k_features": forest.hyperparams.k_features,
        },
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in forest.trees
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path, expected_layout: str = FEATURE_LAYOUT_VERSION) -> Forest:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, OSError) as exc:
        raise ModelLoadError(f"{path}: cannot parse model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelLoadError(f"{path}: not a {MODEL_FORMAT} file")
    layout = doc.get("feature_layout_version")
    if layout != expected_layout:
        raise ModelLoadError(
            f"{path}: feature layout {layout!r} does not match expected {expected_layout!r}"
        )
    hp = Hyperparams(**doc["hyperparams"])
    try:
        trees = [
            Tree(
                np.array(t["feature"], dtype=np.int32),
                np.array(t["threshold"], dtype=np.float64),
                np.array(t["left"], dtype=np.int32),
                np.array(t["right"], dtype=np.int32),
                np.array(t["value"], dtype=np.float64),
            )
            for t in doc["trees"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"{path}: malformed tree data: {exc}") from exc
    return Forest(trees, hp, int(doc["seed"]), layout)
