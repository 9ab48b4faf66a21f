"""Critical path analysis on the disjunctive graph of a fixed schedule.

Job-precedence (conjunctive) arcs and machine-order (disjunctive) arcs are taken
from the schedule as given; machine sequences are never re-optimized here.
Schedules may be fragments (a rolling window) with per-operation release times.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Mapping

from .fjsp import Instance, OpKey, Schedule


class CPMError(RuntimeError):
    """Internal consistency failure, e.g. a cyclic machine/job order."""


@dataclass(frozen=True)
class DisjunctiveGraph:
    order: tuple[OpKey, ...]  # topological order
    ptime: Mapping[OpKey, int]
    release: Mapping[OpKey, int]
    conjunctive: tuple[tuple[OpKey, OpKey], ...]
    disjunctive: tuple[tuple[OpKey, OpKey], ...]

    def successors(self) -> dict[OpKey, list[OpKey]]:
        succ: dict[OpKey, list[OpKey]] = {k: [] for k in self.order}
        for u, v in self.conjunctive + self.disjunctive:
            succ[u].append(v)
        return succ

    def predecessors(self) -> dict[OpKey, list[OpKey]]:
        pred: dict[OpKey, list[OpKey]] = {k: [] for k in self.order}
        for u, v in self.conjunctive + self.disjunctive:
            pred[v].append(u)
        return pred


@dataclass(frozen=True)
class OpSlack:
    earliest_start: int
    latest_start: int
    slack: int
    critical: bool


@dataclass(frozen=True)
class SlackReport:
    ops: Mapping[OpKey, OpSlack]
    makespan: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["job", "op", "es", "ls", "slack", "critical"])
        for (j, k), r in sorted(self.ops.items()):
            w.writerow([j, k, r.earliest_start, r.latest_start, r.slack, int(r.critical)])
        return buf.getvalue()


def build_disjunctive_graph(inst: Instance, sched: Schedule,
                            release: Mapping[OpKey, int] | None = None) -> DisjunctiveGraph:
    keys = sorted(sched.assignments)
    present = set(keys)
    ptime = {k: inst.ptime(k, sched.machine(k)) for k in keys}
    conj = tuple(((j, k), (j, k + 1)) for j, k in keys if (j, k + 1) in present)
    disj = []
    for seq in sched.machine_sequences().values():
        disj.extend(zip(seq, seq[1:]))
    ts: TopologicalSorter = TopologicalSorter({k: () for k in keys})
    for u, v in conj + tuple(disj):
        ts.add(v, u)
    try:
        order = tuple(ts.static_order())
    except CycleError as exc:
        raise CPMError(f"job and machine orders form a cycle: {exc.args[1]}") from exc
    rel = {k: int(release.get(k, 0)) if release else 0 for k in keys}
    return DisjunctiveGraph(order, ptime, rel, conj, tuple(disj))


def compute_slack(g: DisjunctiveGraph) -> SlackReport:
    pred, succ = g.predecessors(), g.successors()
    es: dict[OpKey, int] = {}
    for v in g.order:
        es[v] = max([g.release[v]] + [es[u] + g.ptime[u] for u in pred[v]])
    span = max((es[v] + g.ptime[v] for v in g.order), default=0)
    ls: dict[OpKey, int] = {}
    for v in reversed(g.order):
        finish = min([span] + [ls[w] for w in succ[v]])
        ls[v] = finish - g.ptime[v]
    ops = {v: OpSlack(es[v], ls[v], ls[v] - es[v], ls[v] == es[v]) for v in g.order}
    return SlackReport(ops, span)


def slack_report(inst: Instance, sched: Schedule,
                 release: Mapping[OpKey, int] | None = None) -> SlackReport:
    return compute_slack(build_disjunctive_graph(inst, sched, release))


def criticality_labels(inst: Instance, sched: Schedule,
                       release: Mapping[OpKey, int] | None = None) -> dict[OpKey, bool]:
    """``True`` for every operation with zero total slack, keyed in sorted op order."""
    report = slack_report(inst, sched, release)
    return {k: report.ops[k].critical for k in sorted(report.ops)}


def critical_path(g: DisjunctiveGraph, report: SlackReport) -> list[OpKey]:
    """One source-to-sink chain of zero-slack operations whose lengths add up to the makespan."""
    pred = g.predecessors()
    ends = [v for v in g.order
            if report.ops[v].critical and report.ops[v].earliest_start + g.ptime[v] == report.makespan]
    if not ends:
        return []
    path = [ends[0]]
    while True:
        v = path[-1]
        es = report.ops[v].earliest_start
        tight = [u for u in pred[v]
                 if report.ops[u].critical and report.ops[u].earliest_start + g.ptime[u] == es]
        if not tight:
            break
        path.append(min(tight))
    path.reverse()
    return path
