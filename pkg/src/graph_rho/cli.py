"""Command line: generate, collect, train, eval, run, report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__
from .bench import BenchError, ladder_cells, policy_cells, report, rows_to_csv, run_matrix
from .config import (ConfigError, format_config, label_oracle, load_config, resolved, rho_config,
                     train_config)
from .fjsp import InstanceError, ParseError, generate_instance, parse_instance, serialize_instance
from .gnn import ModelLoadError, load_model, save_model
from .rho import POLICIES, RhoError
from .trainer import TrainingError, collect_dataset, evaluate, load_dataset, save_dataset, train


def _instances(directory: str) -> list[tuple[str, object]]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"instance directory {d} does not exist")
    files = sorted(d.glob("*.fjs"))
    if not files:
        raise FileNotFoundError(f"no .fjs files in {d}")
    seeds = {}
    manifest = d / "manifest.csv"
    if manifest.exists():
        with open(manifest, newline="") as fh:
            seeds = {row["file"]: int(row["seed"]) for row in csv.DictReader(fh)}
    out = []
    for f in files:
        inst = parse_instance(f.read_text())
        if f.name in seeds:
            inst = type(inst)(inst.num_machines, inst.jobs, seeds[f.name])
        out.append((f.stem, inst))
    return out


def cmd_generate(args) -> int:
    if args.count < 1:
        raise InstanceError("--count must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flex = (args.flex_min, args.flex_max or args.machines)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["file", "seed", "machines", "jobs", "ops_per_job", "flex_min", "flex_max", "p_min", "p_max"])
    width = max(4, len(str(args.count - 1)))
    for i in range(args.count):
        seed = args.seed + i
        inst = generate_instance(args.machines, args.jobs, args.ops, flex, (args.p_min, args.p_max), seed)
        name = f"inst_{i:0{width}d}.fjs"
        (out / name).write_text(serialize_instance(inst))
        w.writerow([name, seed, args.machines, args.jobs, args.ops, *flex, args.p_min, args.p_max])
    (out / "manifest.csv").write_text(buf.getvalue())
    print(f"wrote {args.count} instances to {out}")
    return 0


def cmd_collect(args) -> int:
    flat = load_config(args.config, args.set)
    cfg = rho_config(flat, policy="default")
    oracle = args.oracle or label_oracle(flat)
    insts = [inst for _, inst in _instances(args.instances)]
    data = collect_dataset(insts, cfg, oracle)
    save_dataset(data, args.out)
    Path(str(args.out) + ".config").write_text(format_config(resolved(cfg, **{"labels.oracle": oracle})))
    n = sum(len(lg.y_fix) for lg in data)
    pos = sum(float(lg.y_fix.sum()) for lg in data) / max(n, 1)
    print(f"collected {len(data)} graphs, {n} labeled candidates, fix positive rate {pos:.3f}")
    return 0


def cmd_train(args) -> int:
    flat = load_config(args.config, args.set)
    cfg = train_config(flat, lam=args.lam, epochs=args.epochs, lr=args.lr, seed=args.seed,
                       batch_size=args.batch_size)
    data = load_dataset(args.data)

    def progress(row):
        if not args.quiet:
            print(f"epoch {row['epoch']:>4}  l_total {row['l_total']:.4f}  val {row['val_l_total']:.4f}  "
                  f"auc_fix {row['val_auc_fix'] if row['val_auc_fix'] is not None else 'n/a'}")

    res = train(data, cfg, progress=progress)
    provenance = resolved(train=cfg)
    provenance["best_epoch"] = res.best_epoch
    save_model(res.params, args.out, extra=provenance)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.csv")
    log_path.write_text(res.log_csv())
    Path(str(args.out) + ".config").write_text(format_config(provenance))
    print(f"saved model to {args.out} (best epoch {res.best_epoch}); log {log_path}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    metrics = evaluate(model, load_dataset(args.data), args.lam)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    flat = load_config(args.config, args.set)
    cfg = rho_config(flat)
    insts = _instances(args.instances)
    models = {}
    model_path = args.model or flat.get("model.path")
    if model_path:
        models["full"] = load_model(model_path)
    if args.gnn_model:
        models["gnn"] = load_model(args.gnn_model)
    if args.ladder:
        cells = ladder_cells()
    else:
        policies = [p.strip() for p in (args.policies or flat.get("run.policies", "default")).split(",")]
        bad = [p for p in policies if p not in POLICIES]
        if bad:
            raise ConfigError(f"unknown policies {bad}; choose from {POLICIES}")
        cells = policy_cells(policies, args.thr)
    for c in cells:
        if c.policy == "learned" and c.model not in models:
            flag = "--gnn-model" if c.model == "gnn" else "--model"
            raise ConfigError(f"cell {c.name} needs a model ({flag})")
    out = Path(args.out or flat.get("output.dir", "results"))
    out.mkdir(parents=True, exist_ok=True)
    rows = run_matrix(insts, cells, cfg, models, out,
                      progress=None if args.quiet else
                      (lambda r: print(f"{r.instance:<16} {r.policy:<18} makespan {r.makespan:>6} "
                                       f"moves {r.moves:>8} fix {r.fix_ratio:.2f}")))
    (out / "results.csv").write_text(rows_to_csv(rows))
    echo = resolved(cfg, **{"run.cells": ";".join(f"{c.name}={c.policy}@{c.threshold}" for c in cells),
                            "model.path": model_path, "model.gnn_path": args.gnn_model})
    (out / "config.txt").write_text(format_config(echo))
    print(f"{len(rows)} validated runs written to {out / 'results.csv'}")
    return 0


def cmd_report(args) -> int:
    results = Path(args.results)
    if not results.is_file():
        raise FileNotFoundError(f"results file {results} does not exist")
    traces = Path(args.traces) if args.traces else results.parent / "traces"
    out = Path(args.out) if args.out else results.parent / "report"
    summary = report(results, traces, out)
    print((out / "summary.txt").read_text(), end="")
    print(f"{len(summary)} policies summarized into {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graph-rho", description="Learning-accelerated rolling horizon FJSP toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")

    g = sub.add_parser("generate", help="write seeded random instances")
    g.add_argument("--machines", type=int, required=True)
    g.add_argument("--jobs", type=int, required=True)
    g.add_argument("--ops", type=int, required=True, help="operations per job")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--flex-min", type=int, default=1)
    g.add_argument("--flex-max", type=int, default=None)
    g.add_argument("--p-min", type=int, default=1)
    g.add_argument("--p-max", type=int, default=20)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("collect", help="label windows of default runs")
    c.add_argument("--instances", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--oracle", choices=["current_window", "next_window"])
    common(c)
    c.set_defaults(func=cmd_collect)

    t = sub.add_parser("train", help="train the graph network")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    t.add_argument("--quiet", action="store_true")
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="AUC, accuracy and label balance of a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--lambda", dest="lam", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="run a policy matrix over instances")
    r.add_argument("--instances", required=True)
    r.add_argument("--policies", help="comma list from " + ",".join(POLICIES))
    r.add_argument("--thr", default="adaptive", help="'adaptive' or 'static:<tau>' for learned cells")
    r.add_argument("--ladder", action="store_true", help="default, +gnn, +cpa, full ablation cells")
    r.add_argument("--model", help="model for learned / full cells")
    r.add_argument("--gnn-model", help="fix-head-only model for the +gnn ladder cell")
    r.add_argument("--out")
    r.add_argument("--quiet", action="store_true")
    common(r)
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="summaries and plots from a results CSV")
    rp.add_argument("--results", required=True)
    rp.add_argument("--traces")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ConfigError, InstanceError, ParseError, ModelLoadError,
            TrainingError, RhoError, BenchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
