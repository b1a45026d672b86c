"""Command-line entry point: generate, collect, train, solve, evaluate, crossval.

Every command takes --seed and derives all randomness from it through
labeled streams, so a command line is a complete description of its
outputs.  Commands with --out write a manifest.json describing the run.

Exit codes: 0 success, 1 usage, 2 data or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .backend import backend_name
from .bnb import Limits, solve
from .features import FEATURE_LAYOUT_VERSION
from .forest import MODEL_FORMAT, ModelLoadError
from .grouping import SCHEMES
from .lp import LPError
from ._simplex import LPNumericalError
from .model import ModelError, load_instance
from .pipeline import (
    averages,
    collect,
    compute_hint,
    crossval_report,
    evaluate,
    format_table,
    load_store,
    make_rule,
    save_store,
    train_store,
    write_eval_csv,
)
from .scuc import UCConfig, generate_family, write_family


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _write_manifest(outdir: Path, command: str, args: argparse.Namespace,
                    artifacts: list[str], extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": getattr(args, "seed", None),
        "versions": {
            "package": __version__,
            "feature_layout": FEATURE_LAYOUT_VERSION,
            "model_format": MODEL_FORMAT,
            "kernel_backend": backend_name(),
        },
        "timestamp_unix": time.time(),
        "artifacts": sorted(artifacts),
    }
    if extra:
        doc.update(extra)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _family_paths(family_dir: Path, split: str) -> list[Path]:
    manifest_path = family_dir / "family_manifest.json"
    if not manifest_path.exists():
        raise ModelError(f"{family_dir}: not a family directory (no family_manifest.json)")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if split == "all":
        names = manifest["variations"]
    else:
        names = manifest["split"][split]
    return [family_dir / n for n in names]


def _add_limit_flags(p: _Parser, node_default=1000):
    p.add_argument("--node-limit", type=int, default=node_default)
    p.add_argument("--time-limit", type=float, default=None, metavar="SECONDS")
    p.add_argument("--gap-limit", type=float, default=0.01, metavar="PERCENT")


def _limits(args) -> Limits:
    node = args.node_limit if args.node_limit and args.node_limit > 0 else None
    return Limits(node_limit=node, time_limit_s=args.time_limit,
                  gap_limit_percent=args.gap_limit)


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = UCConfig(
        generators=args.generators,
        hours=args.hours,
        startup_categories=args.startup_categories,
        seed=args.seed,
        variation_count=args.variations,
        name=args.name or "",
    )
    family = generate_family(cfg)
    outdir = Path(args.out)
    manifest = write_family(family, outdir)
    inst = family.base
    nbin = len(inst.binary_indices)
    print(f"family {cfg.name}: {len(family.variations)} variations "
          f"({len(manifest['split']['train'])} train / {len(manifest['split']['test'])} test)")
    print(f"  hours={cfg.hours} generators={cfg.generators} "
          f"variables={inst.num_variables} rows={inst.num_constraints} binaries={nbin}")
    _write_manifest(outdir, "generate", args, manifest["variations"])
    return 0


def cmd_collect(args) -> int:
    family_dir = Path(args.family)
    paths = _family_paths(family_dir, args.split)
    rule_spec = args.rule
    from .branching import parse_rule_name
    spec = parse_rule_name(rule_spec)
    if spec["kind"] != "rb" or spec["lam"] < 1:
        raise ModelError("collect requires a probing rb rule (lambda >= 1)")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "training.csv"
    count, hints = collect(
        paths, _limits(args), csv_path,
        lam=spec["lam"], eta=spec["eta"],
        hint_mode=args.hint_mode, seed=args.seed, jobs=args.jobs,
    )
    print(f"collected {count} samples from {len(paths)} instances -> {csv_path}")
    _write_manifest(outdir, "collect", args, ["training.csv"], {"hints": hints})
    return 0


def cmd_train(args) -> int:
    schemes = list(SCHEMES) if args.scheme == "all" else [args.scheme]
    outroot = Path(args.out)
    written = []
    for scheme in schemes:
        store = train_store(args.data, scheme, args.seed,
                            exclude_infeasible=args.exclude_infeasible)
        store_dir = outroot / scheme
        save_store(store, store_dir)
        written.append(scheme)
        n_groups = len(store.training_manifest["groups"])
        print(f"{scheme}: {store.training_manifest['trained_models']} models "
              f"({n_groups} groups seen, min {10} samples) -> {store_dir}")
    outroot.mkdir(parents=True, exist_ok=True)
    _write_manifest(outroot, "train", args, written)
    return 0


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    stores = {}
    if args.rule.startswith("ml:"):
        scheme = args.rule.split(":")[1]
        stores[scheme] = load_store(Path(args.models) / scheme)
    rule = make_rule(args.rule, stores or None)
    hint = args.primal_hint
    if hint is None and args.hint_mode != "none":
        hint = compute_hint(instance, args.hint_mode, args.seed)
    report = solve(instance, rule, _limits(args), primal_hint=hint)
    doc = report.to_dict()
    doc["instance"] = instance.name
    doc["primal_hint"] = hint
    print(json.dumps(doc, indent=1, sort_keys=True))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "report.json", "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        _write_manifest(outdir, "solve", args, ["report.json"])
    return 3 if report.termination == "error" else 0


def cmd_evaluate(args) -> int:
    family_dir = Path(args.family)
    paths = _family_paths(family_dir, args.split)
    rule_names = [r.strip() for r in args.rules.split(",") if r.strip()]
    store_dirs = {}
    for rn in rule_names:
        if rn.startswith("ml:"):
            scheme = rn.split(":")[1]
            store_dir = Path(args.models) / scheme
            if not (store_dir / "store_manifest.json").exists():
                raise ModelError(
                    f"no trained store for {rn!r} at {store_dir}; run "
                    f"'branchlab train --data <csv> --scheme {scheme} --out {args.models}'"
                )
            store_dirs[scheme] = str(store_dir)

    rows, hints = evaluate(
        paths, rule_names, _limits(args),
        hint_mode=args.hint_mode, seed=args.seed,
        store_dirs=store_dirs, jobs=args.jobs,
    )
    avg = averages(rows)
    table = format_table(rows, avg)
    print(table)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_eval_csv(rows, avg, outdir / "results.csv")
    with open(outdir / "table.txt", "w") as fh:
        fh.write(table + "\n")
    _write_manifest(outdir, "evaluate", args, ["results.csv", "table.txt"],
                    {"hints": hints, "averages": avg})
    return 0


def cmd_crossval(args) -> int:
    schemes = list(SCHEMES) if args.scheme == "all" else [args.scheme]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    summary = {}
    for scheme in schemes:
        scatter = outdir / f"scatter_{scheme}.csv" if args.scatter else None
        report = crossval_report(
            args.data, scheme, folds=args.folds, seed=args.seed,
            exclude_infeasible=args.exclude_infeasible,
            scatter_path=scatter,
        )
        fname = f"crossval_{scheme}.json"
        with open(outdir / fname, "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
            fh.write("\n")
        artifacts.append(fname)
        if scatter:
            artifacts.append(scatter.name)
        summary[scheme] = report["pooled_mse"]
        print(f"{scheme}: pooled MSE {report['pooled_mse']:.6f} "
              f"(fallback fraction {report['fallback_fraction']:.3f})")
    _write_manifest(outdir, "crossval", args, artifacts, {"pooled_mse": summary})
    return 0


# -- wiring -------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="branchlab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="generate a UC instance family")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--generators", type=int, default=12)
    p.add_argument("--hours", type=int, default=24)
    p.add_argument("--startup-categories", type=int, default=3)
    p.add_argument("--variations", type=int, default=50)
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("collect", help="collect strong-branching training data")
    p.add_argument("--family", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="train")
    p.add_argument("--rule", default="rb:100:inf", help="probing oracle rule")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--hint-mode", choices=["probe", "heuristic", "oracle", "none"],
                   default="heuristic")
    _add_limit_flags(p)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train per-group models from a training CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--scheme", choices=list(SCHEMES) + ["all"], required=True)
    p.add_argument("--out", required=True, help="models root; store goes to OUT/SCHEME")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--exclude-infeasible", action="store_true",
                   help="drop samples whose probe child was infeasible")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one instance with one rule")
    p.add_argument("--instance", required=True)
    p.add_argument("--rule", default="rb:8:8")
    p.add_argument("--models", default="models")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--primal-hint", type=float, default=None)
    p.add_argument("--hint-mode", choices=["probe", "heuristic", "oracle", "none"],
                   default="none")
    _add_limit_flags(p, node_default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="gap table over test instances for a rule set")
    p.add_argument("--family", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--rules", default="mib,rb:100:inf,ml:et,ml:pv")
    p.add_argument("--models", default="models")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--hint-mode", choices=["probe", "heuristic", "oracle", "none"],
                   default="probe")
    _add_limit_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="k-fold CV MSE of the grouping schemes")
    p.add_argument("--data", required=True)
    p.add_argument("--scheme", choices=list(SCHEMES) + ["all"], default="all")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--scatter", action="store_true",
                   help="export actual-vs-predicted scatter CSVs")
    p.add_argument("--exclude-infeasible", action="store_true")
    p.set_defaults(func=cmd_crossval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, ModelLoadError, FileNotFoundError, ValueError) as exc:
        print(f"branchlab: error: {exc}", file=sys.stderr)
        return 2
    except (LPError, LPNumericalError) as exc:
        print(f"branchlab: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
