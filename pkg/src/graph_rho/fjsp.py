"""Flexible job-shop instances, schedules, file I/O and feasibility checks.

Operations are identified by ``(job_id, pos_in_job)`` tuples, both 0-based.
Machine ids are 0-based in memory and 1-based in every file written here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, TextIO

import numpy as np

OpKey = tuple[int, int]


class InstanceError(ValueError):
    """Raised for invalid instance data or generator parameters."""


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Operation:
    job_id: int
    pos_in_job: int
    options: tuple[tuple[int, int], ...]  # (machine_id, processing_time)

    def __post_init__(self) -> None:
        if not self.options:
            raise InstanceError(f"operation {self.key} has no compatible machine")
        machines = [m for m, _ in self.options]
        if len(set(machines)) != len(machines):
            raise InstanceError(f"operation {self.key} lists a machine twice")
        for m, p in self.options:
            if int(p) != p or p < 1:
                raise InstanceError(f"operation {self.key}: processing time {p} is not an integer >= 1")

    @property
    def key(self) -> OpKey:
        return (self.job_id, self.pos_in_job)

    @property
    def machines(self) -> tuple[int, ...]:
        return tuple(m for m, _ in self.options)

    def ptime(self, machine: int) -> int:
        for m, p in self.options:
            if m == machine:
                return p
        raise KeyError(f"machine {machine} cannot process operation {self.key}")

    def has_machine(self, machine: int) -> bool:
        return any(m == machine for m, _ in self.options)


@dataclass(frozen=True)
class Job:
    id: int
    ops: tuple[Operation, ...]

    def __post_init__(self) -> None:
        if not self.ops:
            raise InstanceError(f"job {self.id} has no operations")
        for k, op in enumerate(self.ops):
            if op.job_id != self.id or op.pos_in_job != k:
                raise InstanceError(f"job {self.id}: operation {k} carries key {op.key}")


@dataclass(frozen=True)
class Instance:
    num_machines: int
    jobs: tuple[Job, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.num_machines < 1:
            raise InstanceError("an instance needs at least one machine")
        if not self.jobs:
            raise InstanceError("an instance needs at least one job")
        for i, job in enumerate(self.jobs):
            if job.id != i:
                raise InstanceError(f"job at index {i} has id {job.id}")
            for op in job.ops:
                for m, _ in op.options:
                    if not 0 <= m < self.num_machines:
                        raise InstanceError(f"operation {op.key}: machine {m} out of range")

    @property
    def num_jobs(self) -> int:
        return len(self.jobs)

    @property
    def num_ops(self) -> int:
        return sum(len(j.ops) for j in self.jobs)

    def op(self, key: OpKey) -> Operation:
        return self.jobs[key[0]].ops[key[1]]

    def ops(self) -> Iterator[Operation]:
        for job in self.jobs:
            yield from job.ops

    def keys(self) -> list[OpKey]:
        return [op.key for op in self.ops()]

    def ptime(self, key: OpKey, machine: int) -> int:
        return self.op(key).ptime(machine)

    @classmethod
    def from_lists(cls, num_machines: int, jobs: list[list[list[tuple[int, int]]]],
                   seed: int | None = None) -> "Instance":
        """Build from nested lists ``jobs[j][k] = [(machine, ptime), ...]``."""
        return cls(
            num_machines=num_machines,
            jobs=tuple(
                Job(j, tuple(Operation(j, k, tuple((int(m), int(p)) for m, p in opts))
                             for k, opts in enumerate(job)))
                for j, job in enumerate(jobs)
            ),
            seed=seed,
        )


@dataclass(frozen=True)
class Schedule:
    """Machine and start time per operation. May cover a subset of an instance."""

    assignments: Mapping[OpKey, tuple[int, int]]
    makespan: int

    @classmethod
    def build(cls, inst: Instance, assignments: Mapping[OpKey, tuple[int, int]]) -> "Schedule":
        assignments = {tuple(k): (int(m), int(s)) for k, (m, s) in assignments.items()}
        span = max((s + inst.ptime(k, m) for k, (m, s) in assignments.items()), default=0)
        return cls(assignments, span)

    def machine(self, key: OpKey) -> int:
        return self.assignments[key][0]

    def start(self, key: OpKey) -> int:
        return self.assignments[key][1]

    def end(self, inst: Instance, key: OpKey) -> int:
        m, s = self.assignments[key]
        return s + inst.ptime(key, m)

    def __contains__(self, key: object) -> bool:
        return key in self.assignments

    def __len__(self) -> int:
        return len(self.assignments)

    def restrict(self, inst: Instance, keys: Iterable[OpKey]) -> "Schedule":
        return Schedule.build(inst, {k: self.assignments[k] for k in keys})

    def machine_sequences(self) -> dict[int, list[OpKey]]:
        seqs: dict[int, list[OpKey]] = {}
        for key, (m, s) in sorted(self.assignments.items(), key=lambda kv: (kv[1][1], kv[0])):
            seqs.setdefault(m, []).append(key)
        return seqs


@dataclass(frozen=True)
class Violation:
    kind: str  # missing | invalid_option | negative_start | precedence | capacity | makespan
    ops: tuple[OpKey, ...]
    message: str = field(default="", compare=False)


# -- generation ---------------------------------------------------------------

def generate_instance(num_machines: int, num_jobs: int, ops_per_job: int,
                      flex_range: tuple[int, int] | None = None,
                      p_range: tuple[int, int] = (1, 20),
                      seed: int = 0) -> Instance:
    """Random instance: uniform flexibility, machines without replacement, uniform times."""
    if min(num_machines, num_jobs, ops_per_job) < 1:
        raise InstanceError("machine, job and operation counts must be >= 1")
    fmin, fmax = flex_range if flex_range is not None else (1, num_machines)
    if not 1 <= fmin <= fmax <= num_machines:
        raise InstanceError(f"flex_range {(fmin, fmax)} invalid for {num_machines} machines")
    pmin, pmax = p_range
    if not 1 <= pmin <= pmax:
        raise InstanceError(f"p_range {p_range} invalid")
    rng = np.random.default_rng(seed)
    jobs = []
    for j in range(num_jobs):
        job = []
        for _ in range(ops_per_job):
            n_opt = int(rng.integers(fmin, fmax + 1))
            machines = np.sort(rng.choice(num_machines, size=n_opt, replace=False))
            times = rng.integers(pmin, pmax + 1, size=n_opt)
            job.append([(int(m), int(p)) for m, p in zip(machines, times)])
        jobs.append(job)
    return Instance.from_lists(num_machines, jobs, seed=seed)


# -- text format ---------------------------------------------------------------

def _ints(tokens: list[str], lineno: int) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        bad = next(t for t in tokens if not t.lstrip("-").isdigit())
        raise ParseError(f"expected an integer, got {bad!r}", lineno) from None


def parse_instance(text: str | TextIO) -> Instance:
    if not isinstance(text, str):
        text = text.read()
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines:
        raise ParseError("empty instance", 1)
    lineno, header = lines[0]
    if len(header) == 3:
        # many published files append the average flexibility; it carries no information
        try:
            float(header[2])
        except ValueError:
            raise ParseError(f"unexpected header token {header[2]!r}", lineno) from None
        header = header[:2]
    if len(header) != 2:
        raise ParseError("header must be '<num_jobs> <num_machines>'", lineno)
    num_jobs, num_machines = _ints(header, lineno)
    if num_jobs < 1 or num_machines < 1:
        raise ParseError("job and machine counts must be positive", lineno)
    if len(lines) - 1 < num_jobs:
        raise ParseError(f"expected {num_jobs} job lines, found {len(lines) - 1}", lineno)
    if len(lines) - 1 > num_jobs:
        raise ParseError("trailing content after the last job", lines[num_jobs + 1][0])
    jobs = []
    for lineno, toks in lines[1:]:
        vals = _ints(toks, lineno)
        n_ops, pos = vals[0], 1
        if n_ops < 1:
            raise ParseError("a job needs at least one operation", lineno)
        job = []
        for _ in range(n_ops):
            if pos >= len(vals):
                raise ParseError("job line ends early", lineno)
            n_opt = vals[pos]
            pos += 1
            if n_opt < 1 or pos + 2 * n_opt > len(vals):
                raise ParseError(f"bad option count {n_opt}", lineno)
            opts = []
            for _ in range(n_opt):
                m, p = vals[pos], vals[pos + 1]
                pos += 2
                if not 1 <= m <= num_machines:
                    raise ParseError(f"machine id {m} outside 1..{num_machines}", lineno)
                if p < 1:
                    raise ParseError(f"processing time {p} must be >= 1", lineno)
                opts.append((m - 1, p))
            if len({m for m, _ in opts}) != len(opts):
                raise ParseError("duplicate machine in operation options", lineno)
            job.append(opts)
        if pos != len(vals):
            raise ParseError("trailing tokens after the last operation", lineno)
        jobs.append(job)
    return Instance.from_lists(num_machines, jobs)


def serialize_instance(inst: Instance) -> str:
    out = [f"{inst.num_jobs} {inst.num_machines}"]
    for job in inst.jobs:
        toks = [str(len(job.ops))]
        for op in job.ops:
            toks.append(str(len(op.options)))
            for m, p in op.options:
                toks += [str(m + 1), str(p)]
        out.append(" ".join(toks))
    return "\n".join(out) + "\n"


def normalize_instance_text(text: str) -> str:
    """Canonical whitespace form of an instance file (what serialize_instance emits)."""
    lines = [ln.split() for ln in text.splitlines() if ln.split()]
    if lines and len(lines[0]) == 3:
        lines[0] = lines[0][:2]
    return "\n".join(" ".join(toks) for toks in lines) + "\n"


def format_schedule(inst: Instance, sched: Schedule) -> str:
    """``# makespan N`` then ``job op machine start end`` lines, all indices 1-based."""
    out = [f"# makespan {sched.makespan}"]
    for key in sorted(sched.assignments):
        m, s = sched.assignments[key]
        out.append(f"{key[0] + 1} {key[1] + 1} {m + 1} {s} {s + inst.ptime(key, m)}")
    return "\n".join(out) + "\n"


def parse_schedule(inst: Instance, text: str) -> Schedule:
    assignments = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks or toks[0] == "#":
            continue
        if len(toks) != 5:
            raise ParseError("expected 'job op machine start end'", lineno)
        j, k, m, s, _ = _ints(toks, lineno)
        assignments[(j - 1, k - 1)] = (m - 1, s)
    return Schedule.build(inst, assignments)


# -- validation ----------------------------------------------------------------

def validate_schedule(inst: Instance, sched: Schedule) -> list[Violation]:
    """Every violated schedule invariant; empty iff the schedule is feasible and complete."""
    out: list[Violation] = []
    ends: dict[OpKey, int] = {}
    for op in inst.ops():
        if op.key not in sched.assignments:
            out.append(Violation("missing", (op.key,), f"{op.key} not scheduled"))
            continue
        m, s = sched.assignments[op.key]
        if not op.has_machine(m):
            out.append(Violation("invalid_option", (op.key,), f"{op.key} cannot run on machine {m}"))
            continue
        if s < 0:
            out.append(Violation("negative_start", (op.key,), f"{op.key} starts at {s}"))
        ends[op.key] = s + op.ptime(m)

    for job in inst.jobs:
        for a, b in zip(job.ops, job.ops[1:]):
            if a.key in ends and b.key in ends and sched.start(b.key) < ends[a.key]:
                out.append(Violation("precedence", (a.key, b.key),
                                     f"{b.key} starts at {sched.start(b.key)} before {a.key} ends at {ends[a.key]}"))

    by_machine: dict[int, list[OpKey]] = {}
    for key in ends:
        by_machine.setdefault(sched.machine(key), []).append(key)
    for m, keys in sorted(by_machine.items()):
        keys.sort(key=lambda k: (sched.start(k), k))
        for a, b in zip(keys, keys[1:]):
            if sched.start(b) < ends[a]:
                out.append(Violation("capacity", (a, b), f"{a} and {b} overlap on machine {m}"))

    extra = [k for k in sched.assignments if k not in ends and not _in_instance(inst, k)]
    for k in extra:
        out.append(Violation("invalid_option", (k,), f"{k} is not an operation of the instance"))

    if not out and sched.makespan != max(ends.values()):
        out.append(Violation("makespan", (), f"recorded makespan {sched.makespan} != {max(ends.values())}"))
    return out


def _in_instance(inst: Instance, key: OpKey) -> bool:
    j, k = key
    return 0 <= j < inst.num_jobs and 0 <= k < len(inst.jobs[j].ops)


def makespan(inst: Instance, sched: Schedule) -> int:
    return max(s + inst.ptime(k, m) for k, (m, s) in sched.assignments.items())
