"""Training-data collection, per-group model training, and evaluation.

collect() runs the probing oracle over training instances and appends one
sample per strong-branching probe: the candidate's feature vector plus the
log of the product score built from the two observed objective deltas.
train_store() fits the general model plus one forest per group that has at
least MIN_GROUP_SAMPLES samples.  evaluate() runs a rule set over test
instances and tabulates gaps, node counts and fallback rates.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bnb import Limits, solve
from .branching import (
    EPSILON,
    MLRule,
    MostInfeasibleRule,
    ReliabilityRule,
    parse_rule_name,
    score_product,
)
from .features import FEATURE_LAYOUT_VERSION, NUM_FEATURES
from .forest import (
    Forest,
    SCHEME_HYPERPARAMS,
    fit,
    load_model,
    save_model,
    training_mse,
)
from .grouping import ET, SCHEMES, GroupKey, group_of
from .model import MILPInstance, ModelError, load_instance, parse_variable_key
from .rng import Rng

MIN_GROUP_SAMPLES = 10

HINT_RULE = "rb:16:4"
HINT_NODE_LIMIT = 3000
HINT_GAP_LIMIT = 0.002


def compute_hint(instance: MILPInstance, mode: str, seed: int = 0) -> float | None:
    """Primal objective handed to solves.  'oracle' is the true optimum
    (enumeration or exhaustive search; desk-infeasible on large instances),
    'heuristic' the all-on dispatch bound, 'probe' improves the heuristic
    with a budgeted reliability solve."""
    from .scuc import heuristic_incumbent, optimal_value_oracle

    if mode == "none":
        return None
    if mode == "oracle":
        return optimal_value_oracle(instance)
    start = heuristic_incumbent(instance)
    if mode == "heuristic":
        return start
    if mode != "probe":
        raise ModelError(f"unknown hint mode {mode!r}")
    report = solve(
        instance,
        make_rule(HINT_RULE),
        Limits(node_limit=HINT_NODE_LIMIT, gap_limit_percent=HINT_GAP_LIMIT),
        primal_hint=start,
    )
    if math.isfinite(report.primal_bound):
        return report.primal_bound
    return start

CSV_COLUMNS = (
    ["instance", "node_id", "var_name", "base", "generator", "time", "startup_category"]
    + [f"f{i}" for i in range(1, NUM_FEATURES + 1)]
    + ["delta_down", "delta_up", "infeasible_flag", "label"]
)


@dataclass
class TrainingSample:
    instance: str
    node_id: int
    var_name: str
    phi: np.ndarray
    delta_down: float
    delta_up: float
    infeasible_flag: int
    label: float

    def row(self) -> list[str]:
        key = parse_variable_key(self.var_name)
        fmt = lambda v: repr(float(v))
        opt = lambda v: "" if v is None else str(v)
        return (
            [self.instance, str(self.node_id), self.var_name, key.base,
             opt(key.generator), opt(key.time), opt(key.startup_category)]
            + [fmt(v) for v in self.phi]
            + [fmt(self.delta_down), fmt(self.delta_up),
               str(self.infeasible_flag), fmt(self.label)]
        )


@dataclass
class ModelStore:
    scheme: str
    general: Forest
    by_group: dict[GroupKey, Forest] = field(default_factory=dict)
    training_manifest: dict = field(default_factory=dict)


def _collect_one(instance: MILPInstance, limits: Limits, lam, eta,
                 primal_hint: float | None) -> list[TrainingSample]:
    samples: list[TrainingSample] = []

    def recorder(bc, var, delta_down, delta_up, down_inf, up_inf):
        phi = bc.features_for(var)
        label = math.log(score_product(delta_down, delta_up, EPSILON))
        samples.append(
            TrainingSample(
                instance=instance.name,
                node_id=bc.node.id,
                var_name=instance.variables[var].key.raw,
                phi=phi,
                delta_down=delta_down,
                delta_up=delta_up,
                infeasible_flag=(1 if down_inf else 0) + (2 if up_inf else 0),
                label=label,
            )
        )

    rule = ReliabilityRule(lam=lam, eta=eta, probe_callback=recorder)
    report = solve(instance, rule, limits, primal_hint=primal_hint)
    if report.termination == "error":
        raise RuntimeError(f"{instance.name}: {report.error_message}")
    return samples


def _resolve_hint(instance, hints: dict, hint_mode: str, seed: int):
    if instance.name in hints:
        return hints[instance.name]
    return compute_hint(instance, hint_mode, seed)


def _collect_worker(args) -> tuple[list[TrainingSample], float | None, str]:
    path, limits, lam, eta, hints, hint_mode, seed = args
    try:
        instance = load_instance(path)
        hint = _resolve_hint(instance, hints, hint_mode, seed)
        return _collect_one(instance, limits, lam, eta, hint), hint, ""
    except RuntimeError as exc:
        return [], None, str(exc)


def collect(
    instances: list,
    limits: Limits,
    out_path,
    lam: float = 100,
    eta: float = math.inf,
    primal_hints: dict[str, float] | None = None,
    hint_mode: str = "none",
    seed: int = 0,
    jobs: int = 1,
) -> tuple[int, dict]:
    """Run the probing oracle over instances; write the training CSV.

    instances may be MILPInstance objects or file paths (paths enable
    multi-process collection).  Failed instances are skipped with a note on
    stderr; remaining instances still contribute samples.  Returns the
    sample count and the primal hints used per instance.
    """
    import sys

    hints = primal_hints or {}
    used_hints: dict[str, float | None] = {}
    blocks: list[list[TrainingSample]] = []
    if jobs > 1 and all(not isinstance(i, MILPInstance) for i in instances):
        work = [
            (path, limits, lam, eta, hints, hint_mode, seed)
            for path in instances
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for path, (result, hint, err) in zip(instances, pool.map(_collect_worker, work)):
                if err:
                    print(f"collect: skipping instance: {err}", file=sys.stderr)
                blocks.append(result)
                used_hints[Path(path).stem] = hint
    else:
        for inst in instances:
            if not isinstance(inst, MILPInstance):
                inst = load_instance(inst)
            try:
                hint = _resolve_hint(inst, hints, hint_mode, seed)
                used_hints[inst.name] = hint
                blocks.append(_collect_one(inst, limits, lam, eta, hint))
            except RuntimeError as exc:
                print(f"collect: skipping instance: {exc}", file=sys.stderr)
                blocks.append([])

    count = 0
    with open(out_path, "w", newline="") as fh:
        fh.write(f"# feature_layout {FEATURE_LAYOUT_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for block in blocks:
            for s in block:
                writer.writerow(s.row())
                count += 1
    return count, used_hints


def read_training_csv(path, exclude_infeasible: bool = False):
    """Returns (X, y, keys, meta) from a collection CSV."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# feature_layout "):
            raise ModelError(f"{path}: missing feature layout header")
        layout = header.split()[-1]
        if layout != FEATURE_LAYOUT_VERSION:
            raise ModelError(
                f"{path}: feature layout {layout!r} does not match "
                f"this build ({FEATURE_LAYOUT_VERSION!r})"
            )
        reader = csv.reader(fh)
        columns = next(reader)
        if columns != CSV_COLUMNS:
            raise ModelError(f"{path}: unexpected column set")
        f_lo = columns.index("f1")
        flag_ix = columns.index("infeasible_flag")
        label_ix = columns.index("label")
        name_ix = columns.index("var_name")
        X, y, keys = [], [], []
        for row in reader:
            if exclude_infeasible and row[flag_ix] != "0":
                continue
            X.append([float(v) for v in row[f_lo:f_lo + NUM_FEATURES]])
            y.append(float(row[label_ix]))
            keys.append(parse_variable_key(row[name_ix]))
    if not X:
        raise ModelError(f"{path}: no usable training samples")
    return np.array(X), np.array(y), keys, {"layout": layout}


def train_store(
    csv_path,
    scheme: str,
    seed: int,
    exclude_infeasible: bool = False,
) -> ModelStore:
    if scheme not in SCHEMES:
        raise ModelError(f"unknown grouping scheme {scheme!r}")
    X, y, keys, _ = read_training_csv(csv_path, exclude_infeasible)
    rng = Rng(seed)

    general = fit(X, y, SCHEME_HYPERPARAMS[ET], rng.child("general").seed)
    manifest = {
        "scheme": scheme,
        "seed": seed,
        "layout": FEATURE_LAYOUT_VERSION,
        "samples": len(y),
        "groups": {},
        "training_mse": {"general": training_mse(general, X, y)},
        "target_variance": {"general": float(np.var(y))},
    }

    by_group: dict[GroupKey, Forest] = {}
    if scheme != ET:
        buckets: dict[GroupKey, list[int]] = {}
        for i, key in enumerate(keys):
            gk = group_of(scheme, key)
            if gk.scheme == ET:
                continue
            buckets.setdefault(gk, []).append(i)
        hp = SCHEME_HYPERPARAMS[scheme]
        for gk in sorted(buckets, key=lambda g: g.encode()):
            idx = buckets[gk]
            manifest["groups"][gk.encode()] = len(idx)
            if len(idx) < MIN_GROUP_SAMPLES:
                continue
            sel = np.array(idx)
            model = fit(X[sel], y[sel], hp, rng.child("group:" + gk.encode()).seed)
            by_group[gk] = model
            manifest["training_mse"][gk.encode()] = training_mse(model, X[sel], y[sel])
            manifest["target_variance"][gk.encode()] = float(np.var(y[sel]))

    manifest["trained_models"] = 1 + len(by_group)
    return ModelStore(scheme, general, by_group, manifest)


def save_store(store: ModelStore, outdir) -> None:
    import json

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_model(store.general, outdir / "general.json")
    files = {}
    for gk, model in sorted(store.by_group.items(), key=lambda kv: kv[0].encode()):
        fname = gk.encode() + ".json"
        save_model(model, outdir / fname)
        files[gk.encode()] = {"file": fname, "parts": list(gk.parts)}
    doc = {
        "scheme": store.scheme,
        "groups": files,
        "manifest": store.training_manifest,
    }
    with open(outdir / "store_manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def load_store(directory) -> ModelStore:
    import json

    directory = Path(directory)
    manifest_path = directory / "store_manifest.json"
    if not manifest_path.exists():
        raise ModelError(
            f"{directory}: no model store found; train one with "
            f"'branchlab train --data <csv> --scheme <scheme> --out <dir>'"
        )
    with open(manifest_path) as fh:
        doc = json.load(fh)
    scheme = doc["scheme"]
    general = load_model(directory / "general.json")
    by_group = {}
    for enc, entry in doc["groups"].items():
        parts = tuple(
            None if p == "None" else (int(p) if isinstance(p, str) and p.isdigit() else p)
            for p in entry["parts"]
        )
        by_group[GroupKey(scheme, parts)] = load_model(directory / entry["file"])
    return ModelStore(scheme, general, by_group, doc.get("manifest", {}))


# -- evaluation --------------------------------------------------------------


def make_rule(name: str, stores: dict[str, ModelStore] | None = None):
    spec = parse_rule_name(name)
    if spec["kind"] == "mib":
        return MostInfeasibleRule()
    if spec["kind"] == "rb":
        return ReliabilityRule(lam=spec["lam"], eta=spec["eta"])
    scheme = spec["scheme"]
    if not stores or scheme not in stores:
        raise ModelError(
            f"rule {name!r} needs a trained model store; run "
            f"'branchlab train --data <csv> --scheme {scheme} --out <models>/{scheme}'"
        )
    return MLRule(stores[scheme])


@dataclass
class EvalRow:
    instance: str
    rule: str
    gap_percent: float
    nodes: int
    fallback_rate: float
    termination: str
    probes: int

    def as_list(self) -> list[str]:
        return [
            self.instance, self.rule, repr(self.gap_percent), str(self.nodes),
            repr(self.fallback_rate), self.termination, str(self.probes),
        ]


def _eval_one(instance: MILPInstance, rule_name: str, stores, limits, hint) -> EvalRow:
    rule = make_rule(rule_name, stores)
    report = solve(instance, rule, limits, primal_hint=hint)
    if report.termination == "error":
        raise RuntimeError(f"{instance.name} / {rule_name}: {report.error_message}")
    stats = report.branching_stats
    total_ml = stats.get("ml_evaluations", 0)
    fallback = stats.get("ml_fallback", 0)
    rate = fallback / total_ml if total_ml else 0.0
    return EvalRow(
        instance=instance.name,
        rule=rule_name,
        gap_percent=report.relative_gap_percent,
        nodes=report.nodes_processed,
        fallback_rate=rate,
        termination=report.termination,
        probes=stats.get("probes", 0),
    )


def _eval_rules(instance, rule_names, stores, limits, hint) -> list[EvalRow]:
    rows = []
    for rn in rule_names:
        try:
            rows.append(_eval_one(instance, rn, stores, limits, hint))
        except RuntimeError as exc:
            rows.append(EvalRow(instance.name, rn, math.nan, 0, 0.0,
                                f"error: {exc}", 0))
    return rows


def _eval_worker(args) -> tuple[list, str, float | None]:
    path, rule_names, store_dirs, limits, hints, hint_mode, seed = args
    instance = load_instance(path)
    stores = {s: load_store(d) for s, d in store_dirs.items()}
    hint = _resolve_hint(instance, hints, hint_mode, seed)
    return _eval_rules(instance, rule_names, stores, limits, hint), instance.name, hint


def evaluate(
    instances: list,
    rule_names: list[str],
    limits: Limits,
    primal_hints: dict[str, float] | None = None,
    hint_mode: str = "none",
    seed: int = 0,
    stores: dict[str, ModelStore] | None = None,
    store_dirs: dict[str, str] | None = None,
    jobs: int = 1,
) -> tuple[list[EvalRow], dict]:
    """Per-(instance, rule) solves; failed cells become termination='error'.

    Returns (rows, hints used).  Row order follows the instance order, so
    output files are identical regardless of --jobs.
    """
    hints = primal_hints or {}
    used_hints: dict[str, float | None] = {}
    rows: list[EvalRow] = []
    if jobs > 1 and all(not isinstance(i, MILPInstance) for i in instances):
        work = [
            (path, rule_names, store_dirs or {}, limits, hints, hint_mode, seed)
            for path in instances
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for block, name, hint in pool.map(_eval_worker, work):
                rows.extend(block)
                used_hints[name] = hint
    else:
        if stores is None and store_dirs:
            stores = {s: load_store(d) for s, d in store_dirs.items()}
        for inst in instances:
            if not isinstance(inst, MILPInstance):
                inst = load_instance(inst)
            hint = _resolve_hint(inst, hints, hint_mode, seed)
            used_hints[inst.name] = hint
            rows.extend(_eval_rules(inst, rule_names, stores, limits, hint))
    return rows, used_hints


def averages(rows: list[EvalRow]) -> dict[str, dict]:
    by_rule: dict[str, list[EvalRow]] = {}
    for r in rows:
        by_rule.setdefault(r.rule, []).append(r)
    out = {}
    for rule, rs in by_rule.items():
        out[rule] = {
            "gap_percent": float(np.mean([r.gap_percent for r in rs])),
            "nodes": float(np.mean([r.nodes for r in rs])),
            "fallback_rate": float(np.mean([r.fallback_rate for r in rs])),
        }
    return out


def format_table(rows: list[EvalRow], avg: dict[str, dict]) -> str:
    rules = sorted({r.rule for r in rows}, key=lambda rn: [rn != "mib", rn])
    instances = []
    for r in rows:
        if r.instance not in instances:
            instances.append(r.instance)
    cell = {(r.instance, r.rule): r.gap_percent for r in rows}
    ml_avgs = {rn: a["gap_percent"] for rn, a in avg.items() if rn.startswith("ml:")}
    best_ml = min(ml_avgs, key=ml_avgs.get) if ml_avgs else None

    width = max(len(i) for i in instances + ["average"]) + 2
    head = "".join(rn.rjust(14) for rn in rules)
    lines = ["gap percent by rule", "instance".ljust(width) + head]
    for inst in instances:
        vals = "".join(
            (f"{cell[(inst, rn)]:.4f}" if (inst, rn) in cell else "-").rjust(14)
            for rn in rules
        )
        lines.append(inst.ljust(width) + vals)
    avg_vals = "".join(
        (f"{avg[rn]['gap_percent']:.4f}" + ("*" if rn == best_ml else "")).rjust(14)
        for rn in rules
    )
    lines.append("average".ljust(width) + avg_vals)
    if best_ml:
        lines.append(f"best ML rule by average gap: {best_ml}")
    return "\n".join(lines)


def write_eval_csv(rows: list[EvalRow], avg: dict[str, dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "rule", "gap_percent", "nodes",
                         "fallback_rate", "termination", "probes"])
        for r in rows:
            writer.writerow(r.as_list())
        for rule in sorted(avg):
            a = avg[rule]
            writer.writerow(["average", rule, repr(a["gap_percent"]),
                             repr(a["nodes"]), repr(a["fallback_rate"]), "", ""])


# -- cross-validation ---------------------------------------------------------


def crossval_report(
    csv_path,
    scheme: str,
    folds: int = 5,
    seed: int = 0,
    exclude_infeasible: bool = False,
    scatter_path=None,
) -> dict:
    """Grouped k-fold CV: pooled MSE over held-out predictions plus a
    per-group breakdown; fallback predictions (group untrained in that
    fold) are included and counted."""
    X, y, keys, _ = read_training_csv(csv_path, exclude_infeasible)
    n = len(y)
    if folds < 2:
        raise ModelError("need at least 2 folds")
    if n < folds:
        raise ModelError(f"{folds} folds but only {n} samples")
    order = list(range(n))
    Rng(seed).child("crossval-shuffle").shuffle(order)
    parts = np.array_split(np.array(order), folds)
    rng = Rng(seed)

    group_keys = [group_of(scheme, k) for k in keys]
    sq_errors = np.zeros(n)
    fallback_mask = np.zeros(n, dtype=bool)
    scatter: list[tuple] = []

    for f, test_idx in enumerate(parts):
        train_idx = np.concatenate([p for i, p in enumerate(parts) if i != f])
        general = fit(
            X[train_idx], y[train_idx], SCHEME_HYPERPARAMS[ET],
            rng.child(f"fold{f}:general").seed,
        )
        fold_models: dict[GroupKey, Forest] = {}
        if scheme != ET:
            buckets: dict[GroupKey, list[int]] = {}
            for i in train_idx:
                gk = group_keys[i]
                if gk.scheme != ET:
                    buckets.setdefault(gk, []).append(i)
            hp = SCHEME_HYPERPARAMS[scheme]
            for gk in sorted(buckets, key=lambda g: g.encode()):
                idx = buckets[gk]
                if len(idx) >= MIN_GROUP_SAMPLES:
                    sel = np.array(idx)
                    fold_models[gk] = fit(
                        X[sel], y[sel], hp, rng.child(f"fold{f}:" + gk.encode()).seed
                    )
        for i in test_idx:
            gk = group_keys[i]
            model = fold_models.get(gk) if scheme != ET and gk.scheme != ET else None
            used_fallback = model is None and scheme != ET
            if model is None:
                model = general
            pred = model.predict(X[i])
            sq_errors[i] = (pred - y[i]) ** 2
            fallback_mask[i] = used_fallback
            if scatter_path is not None:
                scatter.append((y[i], pred, gk.encode(), int(used_fallback)))

    per_group: dict[str, dict] = {}
    for i, gk in enumerate(group_keys):
        slot = per_group.setdefault(
            gk.encode(), {"count": 0, "sq_sum": 0.0, "fallback": 0}
        )
        slot["count"] += 1
        slot["sq_sum"] += float(sq_errors[i])
        slot["fallback"] += int(fallback_mask[i])
    for slot in per_group.values():
        slot["mse"] = slot["sq_sum"] / slot["count"]
        del slot["sq_sum"]

    if scatter_path is not None:
        with open(scatter_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["actual", "predicted", "group", "fallback"])
            for actual, pred, enc, fb in scatter:
                writer.writerow([repr(float(actual)), repr(float(pred)), enc, fb])

    return {
        "scheme": scheme,
        "folds": folds,
        "samples": n,
        "pooled_mse": float(np.mean(sq_errors)),
        "fallback_fraction": float(np.mean(fallback_mask)),
        "per_group": per_group,
    }
