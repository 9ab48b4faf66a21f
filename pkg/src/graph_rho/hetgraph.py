"""Heterogeneous graph view of a rolling-horizon window.

Nodes are the window's operations (15 features) and all machines (11 features).
Four relations point into operation nodes, each edge carrying 2 features:

    r1  machine -> op   current tentative assignment
    r2  machine -> op   other compatible machines
    r3  op -> op        job precedence inside the window
    r4  op -> op        consecutive operations on a machine in the tentative schedule

The tentative schedule is the previous window's schedule for the overlap, extended
by earliest-completion dispatching for operations that are new to the window.
Times are measured from the window origin (earliest tentative start) and scaled by
the tentative span; durations are scaled by the largest option time in the window.
No feature depends on job or machine ids, so relabeling permutes the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .cpm import slack_report
from .fjsp import Instance, OpKey, Schedule
from .solvers.subproblem import Compiled, Subproblem

SCHEMA_VERSION = "hg-v1"
RELATIONS = ("r1", "r2", "r3", "r4")
EDGE_DIM = 2

OP_FEATURES = (
    ("p_assigned", "p on tentative machine / max window p"),
    ("p_min", "min option p / max window p"),
    ("p_max", "max option p / max window p"),
    ("p_mean", "mean option p / max window p"),
    ("flexibility", "number of options / N_m"),
    ("job_remaining_work", "mean-p work from this op to job end / whole job mean-p work"),
    ("pos_in_job", "k / n_i"),
    ("ops_left_in_job", "(n_i - k) / n_i"),
    ("start", "tentative start, window-relative / span"),
    ("end", "tentative end, window-relative / span"),
    ("overlap", "1 if carried over from the previous window"),
    ("fixed_last_iter", "1 if the op was fixed in the previous iteration"),
    ("slack", "total slack in the tentative schedule / span"),
    ("critical", "1 if slack is zero"),
    ("job_window_rank", "rank among the job's window ops / w"),
)

MA_FEATURES = (
    ("assigned_count", "tentatively assigned ops / w"),
    ("assigned_overlap_count", "assigned overlap ops / w"),
    ("assigned_work", "sum of assigned p / span"),
    ("mean_completion", "mean window-relative end of assigned ops / span"),
    ("max_completion", "last window-relative end / span"),
    ("idle_fraction", "idle time between availability and last end / span"),
    ("candidate_count", "window ops that can use the machine / w"),
    ("utilization", "assigned work / time from availability to horizon"),
    ("available_at", "window-relative machine ready time / span"),
    ("candidate_p_mean", "mean p of candidate ops on this machine / max window p"),
    ("fastest_share", "window ops for which the machine is a fastest option / w"),
)

EDGE_FEATURES = {
    "r1": ("p / max window p", "assignment indicator (1)"),
    "r2": ("p on this alternative / max window p", "assignment indicator (0)"),
    "r3": ("gap from predecessor end to successor start / span", "predecessor p / max window p"),
    "r4": ("idle gap between the two ops / span", "same-job indicator"),
}


class EncodingError(ValueError):
    pass


def feature_schema() -> dict:
    return {
        "version": SCHEMA_VERSION,
        "op": [name for name, _ in OP_FEATURES],
        "machine": [name for name, _ in MA_FEATURES],
        "edges": {r: list(EDGE_FEATURES[r]) for r in RELATIONS},
        "descriptions": {name: desc for name, desc in OP_FEATURES + MA_FEATURES},
    }


@dataclass(frozen=True)
class EdgeSet:
    src: np.ndarray  # int64 (E,)
    dst: np.ndarray  # int64 (E,)
    feat: np.ndarray  # float64 (E, EDGE_DIM)

    def __len__(self) -> int:
        return len(self.src)


@dataclass(frozen=True)
class HeteroGraph:
    x_op: np.ndarray
    x_ma: np.ndarray
    edges: dict[str, EdgeSet]
    op_keys: tuple[OpKey, ...]
    candidate_rows: np.ndarray
    assigned: np.ndarray  # machine row of each op's r1 edge
    schema: str = SCHEMA_VERSION
    op_index: dict[OpKey, int] = field(default_factory=dict, compare=False)

    @property
    def num_ops(self) -> int:
        return self.x_op.shape[0]

    @property
    def num_machines(self) -> int:
        return self.x_ma.shape[0]


def tentative_schedule(sub: Subproblem, prev: Schedule | None) -> Schedule:
    """Previous assignments and order for covered ops, dispatching for the rest."""
    c = Compiled(sub.with_fixed({}))
    prefix = c.from_schedule(prev) if prev is not None else None
    if prev is not None and prefix is None:
        raise EncodingError("previous schedule is inconsistent with the window")
    seq, mach = c.greedy(*prefix) if prefix else c.greedy()
    return c.to_schedule(seq, mach)


def _div(a: float, b: float) -> float:
    return float(a) / b if b > 0 else 0.0


def encode(sub: Subproblem, prev: Schedule | None, inst: Instance | None = None, *,
           overlap: Iterable[OpKey] | None = None,
           was_fixed: Iterable[OpKey] = ()) -> HeteroGraph:
    """Encode a window; candidate rows are the overlap operations.

    ``overlap`` defaults to the window operations covered by ``prev``.
    """
    inst = inst or sub.inst
    ops = list(sub.ops)
    if overlap is None:
        overlap = [k for k in ops if prev is not None and k in prev]
    overlap = list(overlap)
    if len(set(overlap)) != len(overlap) or not set(overlap) <= set(ops):
        raise EncodingError("overlap must list distinct operations of the window")
    missing = [k for k in overlap if prev is None or k not in prev]
    if missing:
        raise EncodingError(f"overlap operation {missing[0]} has no previous assignment")
    tent = tentative_schedule(sub, prev.restrict(inst, [k for k in ops if k in prev]) if prev else None)
    report = slack_report(inst, tent, sub.release(tent))

    n, nm, w = len(ops), inst.num_machines, len(ops)
    row = {k: i for i, k in enumerate(ops)}
    overlap_set, fixed_set = set(overlap), set(was_fixed)
    pmax = max(p for k in ops for _, p in inst.op(k).options)
    t0 = min(tent.start(k) for k in ops)
    horizon = max(tent.makespan, t0 + 1)
    span = horizon - t0
    assigned_m = {k: tent.machine(k) for k in ops}
    end = {k: tent.end(inst, k) for k in ops}

    job_rank: dict[OpKey, int] = {}
    for j in {k[0] for k in ops}:
        for r, k in enumerate(sorted(k for k in ops if k[0] == j)):
            job_rank[k] = r
    job_work = {}
    for k in ops:
        j = k[0]
        if j not in job_work:
            means = [np.mean([p for _, p in op.options]) for op in inst.jobs[j].ops]
            job_work[j] = np.cumsum(means[::-1])[::-1] / sum(means)

    x_op = np.zeros((n, len(OP_FEATURES)))
    for i, k in enumerate(ops):
        op = inst.op(k)
        times = [p for _, p in op.options]
        p = op.ptime(assigned_m[k])
        n_i = len(inst.jobs[k[0]].ops)
        s = tent.start(k)
        x_op[i] = (
            p / pmax, min(times) / pmax, max(times) / pmax, np.mean(times) / pmax,
            len(times) / nm, job_work[k[0]][k[1]], k[1] / n_i, (n_i - k[1]) / n_i,
            (s - t0) / span, (s + p - t0) / span,
            float(k in overlap_set), float(k in fixed_set),
            report.ops[k].slack / span, float(report.ops[k].critical),
            job_rank[k] / w,
        )

    x_ma = np.zeros((nm, len(MA_FEATURES)))
    for m in range(nm):
        mine = [k for k in ops if assigned_m[k] == m]
        cands = [k for k in ops if inst.op(k).has_machine(m)]
        ready = sub.machine_ready.get(m, 0)
        avail = max(ready, t0)
        busy = sum(inst.ptime(k, m) for k in mine)
        last = max((end[k] for k in mine), default=avail)
        fastest = sum(1 for k in ops if inst.op(k).has_machine(m)
                      and inst.ptime(k, m) == min(p for _, p in inst.op(k).options))
        x_ma[m] = (
            len(mine) / w,
            sum(1 for k in mine if k in overlap_set) / w,
            busy / span,
            _div(sum(end[k] - t0 for k in mine), len(mine) * span),
            _div(last - t0, span) if mine else 0.0,
            _div(max(last - avail - busy, 0), span) if mine else 0.0,
            len(cands) / w,
            _div(busy, horizon - avail),
            (avail - t0) / span,
            _div(np.mean([inst.ptime(k, m) for k in cands]) if cands else 0.0, pmax),
            fastest / w,
        )

    edges: dict[str, list] = {r: [] for r in RELATIONS}
    for k in ops:
        v = row[k]
        for m, p in inst.op(k).options:
            rel = "r1" if m == assigned_m[k] else "r2"
            edges[rel].append((m, v, p / pmax, 1.0 if rel == "r1" else 0.0))
        prev_k = (k[0], k[1] - 1)
        if prev_k in row:
            gap = tent.start(k) - end[prev_k]
            edges["r3"].append((row[prev_k], v, gap / span,
                                inst.ptime(prev_k, assigned_m[prev_k]) / pmax))
    for m, seq in sorted(tent.machine_sequences().items()):
        for a, b in zip(seq, seq[1:]):
            edges["r4"].append((row[a], row[b], (tent.start(b) - end[a]) / span, float(a[0] == b[0])))

    edge_sets = {}
    for r in RELATIONS:
        rows = sorted(edges[r], key=lambda e: (e[1], e[0]))
        if rows:
            arr = np.array(rows, dtype=float)
            edge_sets[r] = EdgeSet(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64),
                                   np.clip(arr[:, 2:], 0.0, 1.0))
        else:
            edge_sets[r] = EdgeSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, EDGE_DIM)))

    return HeteroGraph(
        x_op=np.clip(x_op, 0.0, 1.0),
        x_ma=np.clip(x_ma, 0.0, 1.0),
        edges=edge_sets,
        op_keys=tuple(ops),
        candidate_rows=np.array([row[k] for k in overlap], dtype=np.int64),
        assigned=np.array([assigned_m[k] for k in ops], dtype=np.int64),
        op_index=row,
    )


def dump_graph(g: HeteroGraph) -> str:
    """Line-oriented debug listing of nodes, features and edges."""
    fmt = lambda xs: " ".join(f"{x:.4f}" for x in xs)  # noqa: E731
    out = [f"# schema {g.schema}", f"# ops {g.num_ops} machines {g.num_machines}"]
    cand = set(g.candidate_rows.tolist())
    for i, k in enumerate(g.op_keys):
        out.append(f"op {i} job {k[0]} pos {k[1]}{' candidate' if i in cand else ''} | {fmt(g.x_op[i])}")
    for m in range(g.num_machines):
        out.append(f"ma {m} | {fmt(g.x_ma[m])}")
    for r in RELATIONS:
        es = g.edges[r]
        for s, d, f in zip(es.src, es.dst, es.feat):
            out.append(f"{r} {s} -> {d} | {fmt(f)}")
    return "\n".join(out) + "\n"
