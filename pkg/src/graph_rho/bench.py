"""Experiment harness: policy matrices, result rows, summaries and plots."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fjsp import Instance, format_schedule, validate_schedule
from .gnn import ModelParams
from .rho import RhoConfig, RhoResult, probs_to_csv, run_rho, trace_to_csv


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cell:
    """One column of the policy matrix."""

    name: str
    policy: str
    threshold: str = "adaptive"
    model: str | None = None  # key into the model table for learned cells


def ladder_cells() -> list[Cell]:
    """default -> +gnn (fix head only, static 0.5) -> +cpa (joint loss, static 0.5) -> full (adaptive)."""
    return [
        Cell("default", "default"),
        Cell("gnn", "learned", "static:0.5", "gnn"),
        Cell("gnn_cpa", "learned", "static:0.5", "full"),
        Cell("full", "learned", "adaptive", "full"),
    ]


def policy_cells(policies: Iterable[str], threshold: str = "adaptive") -> list[Cell]:
    out = []
    for p in policies:
        if p == "learned":
            out.append(Cell("learned" if threshold == "adaptive" else f"learned[{threshold}]",
                            "learned", threshold, "full"))
        else:
            out.append(Cell(p, p))
    return out


@dataclass
class ResultRow:
    instance: str
    policy: str
    makespan: int
    wall_ms: float
    moves: int
    fix_ratio: float
    fallbacks: int
    seed: int


RESULT_FIELDS = [f.name for f in fields(ResultRow)]


def run_cell(inst: Instance, cell: Cell, cfg: RhoConfig, models: dict[str, ModelParams]) -> RhoResult:
    model = None
    if cell.policy == "learned":
        if cell.model not in models:
            raise BenchError(f"cell {cell.name} needs model {cell.model!r}")
        model = models[cell.model]
    return run_rho(inst, replace(cfg, policy=cell.policy, threshold=cell.threshold), model)


def run_matrix(instances: Sequence[tuple[str, Instance]], cells: Sequence[Cell], cfg: RhoConfig,
               models: dict[str, ModelParams], out_dir: Path | None = None,
               progress=None) -> list[ResultRow]:
    """Every (instance, cell) run, validated before its row is kept."""
    rows = []
    for name, inst in instances:
        for cell in cells:
            t0 = time.perf_counter()
            res = run_cell(inst, cell, cfg, models)
            wall = (time.perf_counter() - t0) * 1e3
            bad = validate_schedule(inst, res.schedule)
            if bad:
                raise BenchError(f"{name}/{cell.name}: invalid schedule: {bad[0].message}")
            row = ResultRow(name, cell.name, res.schedule.makespan, round(wall, 3), res.total_moves,
                            round(res.fix_ratio, 6), res.fallbacks, cfg.seed)
            rows.append(row)
            if out_dir is not None:
                stem = f"{name}__{cell.name}"
                (out_dir / "traces").mkdir(parents=True, exist_ok=True)
                (out_dir / "schedules").mkdir(parents=True, exist_ok=True)
                (out_dir / "traces" / f"{stem}.csv").write_text(trace_to_csv(res.trace))
                if cell.policy == "learned":
                    (out_dir / "traces" / f"{stem}.probs.csv").write_text(probs_to_csv(res.trace))
                (out_dir / "schedules" / f"{stem}.sched").write_text(format_schedule(inst, res.schedule))
            if progress:
                progress(row)
    return rows


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, RESULT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(asdict(r))
    return buf.getvalue()


def read_results(path: str | Path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(RESULT_FIELDS) - set(reader.fieldnames):
            raise BenchError(f"{path}: missing result columns")
        rows = [ResultRow(r["instance"], r["policy"], int(r["makespan"]), float(r["wall_ms"]),
                          int(r["moves"]), float(r["fix_ratio"]), int(r["fallbacks"]), int(r["seed"]))
                for r in reader]
    if not rows:
        raise BenchError(f"{path}: no result rows")
    return rows


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Per-policy mean and sample std, policies in first-appearance order."""
    if not rows:
        raise BenchError("no result rows to summarize")
    order = list(dict.fromkeys(r.policy for r in rows))
    out = []
    for p in order:
        sel = [r for r in rows if r.policy == p]
        entry = {"policy": p, "n": len(sel)}
        for col in ("makespan", "wall_ms", "moves", "fix_ratio"):
            vals = np.array([getattr(r, col) for r in sel], dtype=float)
            entry[f"{col}_mean"] = float(vals.mean())
            entry[f"{col}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        entry["fallbacks"] = sum(r.fallbacks for r in sel)
        out.append(entry)
    return out


def summary_csv(summary: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, list(summary[0]), lineterminator="\n")
    w.writeheader()
    for s in summary:
        w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in s.items()})
    return buf.getvalue()


def summary_table(summary: Sequence[dict]) -> str:
    lines = [f"{'policy':<22} {'n':>4} {'makespan':>18} {'time (ms)':>20} {'moves':>20}"]
    for s in summary:
        lines.append(f"{s['policy']:<22} {s['n']:>4} "
                     f"{s['makespan_mean']:>9.2f} ± {s['makespan_std']:<6.2f} "
                     f"{s['wall_ms_mean']:>10.1f} ± {s['wall_ms_std']:<7.1f} "
                     f"{s['moves_mean']:>10.1f} ± {s['moves_std']:<7.1f}")
    return "\n".join(lines) + "\n"


# -- plots ---------------------------------------------------------------------

def read_trace(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tau_series(trace_dir: Path) -> list[tuple[str, int, float]]:
    """(run, iteration, tau) for every learned run with a finite threshold."""
    out = []
    for probs_path in sorted(trace_dir.glob("*.probs.csv")):
        run = probs_path.name[: -len(".probs.csv")]
        for row in read_trace(trace_dir / f"{run}.csv"):
            if row["tau"] not in ("", "inf"):
                out.append((run, int(row["iter"]), float(row["tau"])))
    return out


def prob_histograms(trace_dir: Path, bins: int = 20) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Density of predicted fix probabilities per iteration, pooled over runs."""
    per_iter: dict[int, list[float]] = {}
    for path in sorted(trace_dir.glob("*.probs.csv")):
        for row in read_trace(path):
            per_iter.setdefault(int(row["iter"]), []).append(float(row["prob"]))
    edges = np.linspace(0.0, 1.0, bins + 1)
    hists = {t: np.histogram(v, bins=edges, density=True)[0] for t, v in sorted(per_iter.items())}
    return edges, hists


def _svg_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "graph-rho"
    return plt


def _save_svg(plt, fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def ridgeline_svg(edges: np.ndarray, hists: dict[int, np.ndarray], path: Path) -> None:
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(6, 1 + 0.5 * max(len(hists), 1)))
    centers = 0.5 * (edges[:-1] + edges[1:])
    top = max((h.max() for h in hists.values()), default=1.0) or 1.0
    for i, (t, h) in enumerate(sorted(hists.items())):
        base = i * 0.8
        ax.fill_between(centers, base, base + h / top * 1.5, alpha=0.6, lw=0.8)
        ax.text(-0.02, base, f"t={t}", ha="right", va="bottom", fontsize=7)
    ax.set_xlim(0, 1)
    ax.set_yticks([])
    ax.set_xlabel("predicted fix probability")
    _save_svg(plt, fig, path)


def tau_svg(series: list[tuple[str, int, float]], path: Path) -> None:
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(6, 3))
    by_iter: dict[int, list[float]] = {}
    for _, t, tau in series:
        by_iter.setdefault(t, []).append(tau)
    its = sorted(by_iter)
    means = [float(np.mean(by_iter[t])) for t in its]
    ax.plot(its, means, marker="o", lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean threshold")
    ax.set_ylim(0, 1.05)
    _save_svg(plt, fig, path)


def report(results: Path, trace_dir: Path | None, out_dir: Path) -> list[dict]:
    """Summary CSV/table plus probability and threshold plots; a pure function of the inputs."""
    rows = read_results(results)
    summary = summarize(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.csv").write_text(summary_csv(summary))
    (out_dir / "summary.txt").write_text(summary_table(summary))
    if trace_dir is not None and trace_dir.is_dir():
        edges, hists = prob_histograms(trace_dir)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "bin_lo", "bin_hi", "density"])
        for t, h in hists.items():
            for lo, hi, d in zip(edges[:-1], edges[1:], h):
                w.writerow([t, f"{lo:.3f}", f"{hi:.3f}", f"{d:.6f}"])
        (out_dir / "prob_hist.csv").write_text(buf.getvalue())
        ridgeline_svg(edges, hists, out_dir / "prob_ridgeline.svg")
        series = tau_series(trace_dir)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "iter", "tau"])
        for run, t, tau in series:
            w.writerow([run, t, f"{tau:.6f}"])
        (out_dir / "tau_trajectory.csv").write_text(buf.getvalue())
        tau_svg(series, out_dir / "tau_trajectory.svg")
    return summary

