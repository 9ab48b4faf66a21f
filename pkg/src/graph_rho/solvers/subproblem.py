"""Windowed FJSP subproblems and the schedule decoder shared by both solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..fjsp import Instance, OpKey, Schedule


class SubproblemError(ValueError):
    pass


OPTIMAL, FEASIBLE, INFEASIBLE, TIMEOUT = "optimal", "feasible", "infeasible", "timeout"


@dataclass(frozen=True)
class Subproblem:
    inst: Instance
    ops: tuple[OpKey, ...]
    job_ready: Mapping[int, int] = field(default_factory=dict)
    machine_ready: Mapping[int, int] = field(default_factory=dict)
    fixed: Mapping[OpKey, int] = field(default_factory=dict)
    warm_start: Schedule | None = None

    def __post_init__(self) -> None:
        ops = tuple(tuple(k) for k in self.ops)
        object.__setattr__(self, "ops", ops)
        present = set(ops)
        if len(present) != len(ops):
            raise SubproblemError("duplicate operation in window")
        for j, k in ops:
            if not (0 <= j < self.inst.num_jobs and 0 <= k < len(self.inst.jobs[j].ops)):
                raise SubproblemError(f"{(j, k)} is not an operation of the instance")
        by_job: dict[int, list[int]] = {}
        for j, k in ops:
            by_job.setdefault(j, []).append(k)
        for j, ks in by_job.items():
            if max(ks) - min(ks) + 1 != len(ks):
                raise SubproblemError(f"job {j} is not contiguous inside the window")
        for key in self.fixed:
            if key not in present:
                raise SubproblemError(f"fixed operation {key} is not in the window")
        if any(t < 0 for t in self.job_ready.values()) or any(t < 0 for t in self.machine_ready.values()):
            raise SubproblemError("ready times must be >= 0")

    def __len__(self) -> int:
        return len(self.ops)

    def with_fixed(self, fixed: Mapping[OpKey, int]) -> "Subproblem":
        return Subproblem(self.inst, self.ops, self.job_ready, self.machine_ready, dict(fixed), self.warm_start)

    def with_warm_start(self, warm: Schedule | None) -> "Subproblem":
        return Subproblem(self.inst, self.ops, self.job_ready, self.machine_ready, self.fixed, warm)

    def release(self, sched: Schedule | None = None) -> dict[OpKey, int]:
        """Lower bound on each operation's start implied by committed work.

        With a schedule, the ready time of the operation's machine is included too.
        """
        out = {}
        for key in self.ops:
            rel = self.job_ready.get(key[0], 0)
            if sched is not None and key in sched.assignments:
                rel = max(rel, self.machine_ready.get(sched.machine(key), 0))
            out[key] = rel
        return out


@dataclass
class SolveStats:
    moves: int = 0  # neighbour evaluations (local search) or nodes (branch and bound)
    restarts: int = 0
    improvements: int = 0
    wall_ms: float = 0.0
    history: list[tuple[int, int]] = field(default_factory=list)  # (effort, incumbent makespan)


@dataclass
class SolveResult:
    schedule: Schedule | None
    makespan_local: int | None
    status: str
    stats: SolveStats


class Compiled:
    """Index-based view of a subproblem used by the inner loops of both solvers.

    Machine options are already filtered by ``fixed``; an empty option list means
    the fixed machine cannot process the operation.
    """

    def __init__(self, sub: Subproblem):
        inst = sub.inst
        self.sub = sub
        # sorting by (job, pos) makes job predecessors precede successors
        self.keys: list[OpKey] = sorted(sub.ops)
        self.n = len(self.keys)
        index = {k: i for i, k in enumerate(self.keys)}
        self.index = index
        self.job = [k[0] for k in self.keys]
        self.job_pred = [index.get((j, k - 1), -1) for j, k in self.keys]
        self.job_succ = [index.get((j, k + 1), -1) for j, k in self.keys]
        self.release = [sub.job_ready.get(j, 0) if self.job_pred[i] < 0 else 0
                        for i, (j, k) in enumerate(self.keys)]
        self.machine_ready = [sub.machine_ready.get(m, 0) for m in range(inst.num_machines)]
        self.options: list[list[tuple[int, int]]] = []
        self.ptime: list[dict[int, int]] = []
        for key in self.keys:
            opts = list(inst.op(key).options)
            self.ptime.append(dict(opts))
            if key in sub.fixed:
                opts = [(m, p) for m, p in opts if m == sub.fixed[key]]
            self.options.append(opts)
        self.feasible = all(self.options)
        self.free = [i for i in range(self.n) if len(self.options[i]) > 1]

    def decode(self, seq: list[int], mach: list[int]) -> tuple[list[int], int, int]:
        """Semi-active starts for a job-order-respecting sequence; returns (starts, makespan, sum of ends)."""
        mready = list(self.machine_ready)
        ends = [0] * self.n
        starts = [0] * self.n
        release, pred, ptime = self.release, self.job_pred, self.ptime
        span = total = 0
        for i in seq:
            m = mach[i]
            jp = pred[i]
            s = ends[jp] if jp >= 0 else release[i]
            if mready[m] > s:
                s = mready[m]
            e = s + ptime[i][m]
            starts[i] = s
            ends[i] = e
            mready[m] = e
            total += e
            if e > span:
                span = e
        return starts, span, total

    def to_schedule(self, seq: list[int], mach: list[int]) -> Schedule:
        starts, span, _ = self.decode(seq, mach)
        return Schedule({self.keys[i]: (mach[i], starts[i]) for i in range(self.n)}, span)

    def to_schedule_from_starts(self, mach: list[int], starts: list[int]) -> Schedule:
        assignments = {self.keys[i]: (mach[i], starts[i]) for i in range(self.n)}
        span = max((starts[i] + self.ptime[i][mach[i]] for i in range(self.n)), default=0)
        return Schedule(assignments, span)

    def greedy(self, seq: list[int] | None = None, mach: list[int] | None = None) -> tuple[list[int], list[int]]:
        """Earliest-completion-time dispatching, optionally extending a partial (seq, machine) prefix."""
        seq = list(seq or [])
        mach = list(mach) if mach is not None else [-1] * self.n
        done = [False] * self.n
        mready = list(self.machine_ready)
        ends = [0] * self.n
        for i in seq:
            jp = self.job_pred[i]
            s = max(ends[jp] if jp >= 0 else self.release[i], mready[mach[i]])
            ends[i] = s + self.ptime[i][mach[i]]
            mready[mach[i]] = ends[i]
            done[i] = True
        avail = [i for i in range(self.n) if not done[i] and (self.job_pred[i] < 0 or done[self.job_pred[i]])]
        while avail:
            best = None
            for i in avail:
                jp = self.job_pred[i]
                ready = ends[jp] if jp >= 0 else self.release[i]
                for m, p in self.options[i]:
                    s = max(ready, mready[m])
                    cand = (s + p, p, self.keys[i], m)
                    if best is None or cand < best[0]:
                        best = (cand, i, m, s)
            (end, _, _, _), i, m, s = best
            seq.append(i)
            mach[i] = m
            ends[i] = end
            mready[m] = end
            done[i] = True
            avail.remove(i)
            nxt = self.job_succ[i]
            if nxt >= 0 and not done[nxt]:
                avail.append(nxt)
        return seq, mach

    def from_schedule(self, sched: Schedule) -> tuple[list[int], list[int]] | None:
        """(seq, machines) prefix for the operations a prior schedule covers, or None if it breaks `fixed`."""
        covered = [i for i, k in enumerate(self.keys) if k in sched.assignments]
        mach = [-1] * self.n
        for i in covered:
            m = sched.machine(self.keys[i])
            if all(m != mm for mm, _ in self.options[i]):
                return None
            mach[i] = m
        covered_set = set(covered)
        for i in covered:
            jp = self.job_pred[i]
            if jp >= 0 and jp not in covered_set:
                return None
        seq = sorted(covered, key=lambda i: (sched.start(self.keys[i]), self.keys[i]))
        return seq, mach


def check_fragment(sub: Subproblem, sched: Schedule) -> list[str]:
    """Feasibility problems of a window solution: coverage, ready times, precedence, capacity, fixing."""
    inst = sub.inst
    problems = []
    if set(sched.assignments) != set(sub.ops):
        problems.append("fragment does not cover exactly the window operations")
        return problems
    ends = {}
    for key, (m, s) in sched.assignments.items():
        op = inst.op(key)
        if not op.has_machine(m):
            problems.append(f"{key} on incompatible machine {m}")
            continue
        if key in sub.fixed and sub.fixed[key] != m:
            problems.append(f"{key} ignores its fixed machine {sub.fixed[key]}")
        ends[key] = s + op.ptime(m)
        if s < sub.machine_ready.get(m, 0):
            problems.append(f"{key} starts before machine {m} is ready")
        prev = (key[0], key[1] - 1)
        if prev not in sched.assignments and s < sub.job_ready.get(key[0], 0):
            problems.append(f"{key} starts before job {key[0]} is ready")
    for key in ends:
        prev = (key[0], key[1] - 1)
        if prev in ends and sched.start(key) < ends[prev]:
            problems.append(f"{key} starts before {prev} ends")
    for m, seq in sched.machine_sequences().items():
        for a, b in zip(seq, seq[1:]):
            if a in ends and sched.start(b) < ends[a]:
                problems.append(f"{a} and {b} overlap on machine {m}")
    if ends and sched.makespan != max(ends.values()):
        problems.append("recorded local makespan is wrong")
    return problems
