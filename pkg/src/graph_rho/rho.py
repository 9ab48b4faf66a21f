"""Rolling horizon loop: windows of ``w`` operations, ``s`` committed per iteration.

Operations of the previous window that were not committed (the overlap) are
carried into the next window first; the rest is filled job by job. Depending on
the policy, part of the overlap keeps its previous machine before the window is
handed to the subsolver.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fjsp import Instance, OpKey, Schedule
from .labels import fix_labels
from .solvers import (INFEASIBLE, MAX_EXACT_OPS, SolveResult, Subproblem, check_fragment,
                      solve_exact, solve_heuristic)

POLICIES = ("default", "warm_start", "oracle_fix", "learned")


class RhoError(RuntimeError):
    pass


@dataclass
class SubsolverConfig:
    kind: str = "heuristic"  # heuristic | exact
    time_limit_ms: float = 500.0
    max_moves: int | None = None  # set -> move-count mode (deterministic)
    restarts: int = 8
    node_limit: int = 1_000_000


@dataclass
class RhoConfig:
    window_w: int = 80
    step_s: int = 30
    policy: str = "default"
    gamma: float = 0.6
    tau_min: float = 0.3
    threshold: str = "adaptive"  # adaptive | static:<tau>
    window_rule: str = "round_robin"  # round_robin | earliest_ready
    warm_start_learned: bool = True
    seed: int = 0
    subsolver: SubsolverConfig = field(default_factory=SubsolverConfig)

    def __post_init__(self) -> None:
        if not 1 <= self.step_s < self.window_w:
            raise ValueError(f"need 1 <= step_s < window_w, got s={self.step_s}, w={self.window_w}")
        if not 0 < self.gamma <= 1 or not 0 <= self.tau_min <= 1:
            raise ValueError("gamma must lie in (0, 1] and tau_min in [0, 1]")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.window_rule not in ("round_robin", "earliest_ready"):
            raise ValueError(f"unknown window rule {self.window_rule!r}")
        parse_threshold(self.threshold)


def parse_threshold(spec: str) -> float | None:
    """``None`` for the adaptive rule, otherwise the static cut-off."""
    if spec == "adaptive":
        return None
    if spec.startswith("static:"):
        tau = float(spec.split(":", 1)[1])
        if not 0 <= tau <= 1:
            raise ValueError(f"static threshold {tau} outside [0, 1]")
        return tau
    raise ValueError(f"threshold must be 'adaptive' or 'static:<tau>', got {spec!r}")


@dataclass
class IterationRecord:
    iter: int
    window_size: int
    overlap_size: int
    fix_count: int
    tau: float  # nan when the policy sets no threshold
    solve_ms: float
    local_makespan: int
    fallback: bool
    moves: int
    committed: int
    probs: tuple[float, ...] = ()
    fixed: dict[OpKey, int] = field(default_factory=dict)


@dataclass
class WindowRecord:
    sub: Subproblem
    prev_local: Schedule | None
    overlap: tuple[OpKey, ...]
    local: Schedule
    was_fixed: frozenset[OpKey] = frozenset()


@dataclass
class RhoState:
    committed: dict[OpKey, tuple[int, int]]
    job_next: list[int]
    job_ready: dict[int, int]
    machine_ready: dict[int, int]
    t: int = 0
    prev_window: tuple[OpKey, ...] = ()
    prev_local: Schedule | None = None
    overlap: tuple[OpKey, ...] = ()
    fix_set: frozenset[OpKey] = frozenset()
    trace: list[IterationRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, inst: Instance) -> "RhoState":
        return cls({}, [0] * inst.num_jobs, {}, {})

    def remaining(self, inst: Instance) -> int:
        return inst.num_ops - len(self.committed)


@dataclass
class RhoResult:
    schedule: Schedule
    trace: list[IterationRecord]
    windows: list[WindowRecord] = field(default_factory=list)

    @property
    def total_moves(self) -> int:
        return sum(r.moves for r in self.trace)

    @property
    def fallbacks(self) -> int:
        return sum(r.fallback for r in self.trace)

    @property
    def fix_ratio(self) -> float:
        rows = [r.fix_count / r.overlap_size for r in self.trace if r.overlap_size]
        return float(np.mean(rows)) if rows else 0.0


def build_window(state: RhoState, inst: Instance, w: int, rule: str = "round_robin") -> Subproblem:
    """Overlap carried over first, then new operations picked job by job (ascending ids)."""
    if state.remaining(inst) == 0:
        raise RhoError("no uncommitted operations remain")
    window = [k for k in state.prev_window if k not in state.committed]
    nxt = list(state.job_next)
    for j, k in window:
        nxt[j] = max(nxt[j], k + 1)
    if rule == "round_robin":
        while len(window) < w:
            progressed = False
            for j, job in enumerate(inst.jobs):
                if len(window) >= w:
                    break
                if nxt[j] < len(job.ops):
                    window.append((j, nxt[j]))
                    nxt[j] += 1
                    progressed = True
            if not progressed:
                break
    else:
        # estimated ready time of each job's next candidate: committed end plus minimum work queued in the window
        est = {j: state.job_ready.get(j, 0) for j in range(inst.num_jobs)}
        for j, k in window:
            est[j] += min(p for _, p in inst.op((j, k)).options)
        while len(window) < w:
            open_jobs = [j for j in range(inst.num_jobs) if nxt[j] < len(inst.jobs[j].ops)]
            if not open_jobs:
                break
            j = min(open_jobs, key=lambda jj: (est[jj], jj))
            window.append((j, nxt[j]))
            est[j] += min(p for _, p in inst.op((j, nxt[j])).options)
            nxt[j] += 1
    return Subproblem(inst, tuple(window), dict(state.job_ready), dict(state.machine_ready))


def commit_step(state: RhoState, inst: Instance, sub: Subproblem, local: Schedule, s: int) -> RhoState:
    """Commit the ``s`` earliest-starting window operations (everything on the final window)."""
    in_window = set(sub.ops)
    final = state.remaining(inst) == len(in_window)
    order = sorted(sub.ops, key=lambda k: (local.start(k), k))
    if final:
        chosen = order
    else:
        chosen, picked = [], set()
        for key in order:
            if len(chosen) >= s:
                break
            # a successor is never committed before its predecessor
            j, k = key
            while (j, k - 1) in in_window and (j, k - 1) not in picked:
                k -= 1
            key = (j, k)
            if key in picked:
                continue
            chosen.append(key)
            picked.add(key)
    committed = dict(state.committed)
    job_next = list(state.job_next)
    job_ready = dict(state.job_ready)
    machine_ready = dict(state.machine_ready)
    for key in chosen:
        m, st = local.assignments[key]
        end = st + inst.ptime(key, m)
        committed[key] = (m, st)
        job_next[key[0]] = max(job_next[key[0]], key[1] + 1)
        job_ready[key[0]] = max(job_ready.get(key[0], 0), end)
        machine_ready[m] = max(machine_ready.get(m, 0), end)
    chosen_set = set(chosen)
    overlap = tuple(k for k in sub.ops if k not in chosen_set)
    return RhoState(committed, job_next, job_ready, machine_ready, state.t + 1,
                    tuple(sub.ops), local, overlap, state.fix_set, state.trace)


def adaptive_threshold(probs: Sequence[float], gamma: float, tau_min: float) -> tuple[float, np.ndarray]:
    """Rank cut at the floor(gamma * N)-th largest probability, floored at ``tau_min``.

    Ties with the cut value are fixed too, so the mask may exceed k entries.
    """
    p = np.asarray(probs, dtype=float)
    if p.size == 0:
        raise ValueError("adaptive_threshold needs at least one probability")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    k = math.floor(gamma * p.size + 1e-9)
    tau = math.inf if k == 0 else float(np.sort(p)[::-1][k - 1])
    tau_safe = max(tau, tau_min)
    return tau_safe, p >= tau_safe


def static_threshold(probs: Sequence[float], tau: float) -> tuple[float, np.ndarray]:
    p = np.asarray(probs, dtype=float)
    return tau, p >= tau


def window_seed(base: int, t: int) -> int:
    return base * 1_000_003 + t


def solve_window(sub: Subproblem, cfg: SubsolverConfig, seed: int) -> SolveResult:
    if cfg.kind == "exact":
        if len(sub) > MAX_EXACT_OPS:
            raise RhoError(f"exact subsolver needs windows of at most {MAX_EXACT_OPS} operations")
        return solve_exact(sub, cfg.node_limit)
    if cfg.kind != "heuristic":
        raise RhoError(f"unknown subsolver {cfg.kind!r}")
    return solve_heuristic(sub, cfg.time_limit_ms, seed, max_moves=cfg.max_moves, restarts=cfg.restarts)


class _LearnedFixer:
    def __init__(self, model, cfg: RhoConfig):
        from .gnn import forward
        from .hetgraph import encode

        self.model = model
        self.cfg = cfg
        self._forward = forward
        self._encode = encode
        self.static = parse_threshold(cfg.threshold)

    def __call__(self, sub: Subproblem, state: RhoState):
        overlap = state.overlap
        g = self._encode(sub, state.prev_local, sub.inst, overlap=overlap, was_fixed=state.fix_set)
        yfix, _, _ = self._forward(g, self.model, training=False)
        if self.static is None:
            tau, mask = adaptive_threshold(yfix, self.cfg.gamma, self.cfg.tau_min)
        else:
            tau, mask = static_threshold(yfix, self.static)
        fixed = {g.op_keys[r]: state.prev_local.machine(g.op_keys[r])
                 for r, on in zip(g.candidate_rows, mask) if on}
        return fixed, tau, tuple(float(p) for p in yfix)


def run_rho(inst: Instance, cfg: RhoConfig, model=None, *, record: bool = False) -> RhoResult:
    """Run the rolling horizon loop to a complete schedule."""
    if cfg.policy == "learned" and model is None:
        raise RhoError("policy 'learned' needs a model")
    fixer = _LearnedFixer(model, cfg) if cfg.policy == "learned" else None
    sub_cfg = cfg.subsolver
    state = RhoState.initial(inst)
    windows: list[WindowRecord] = []
    while state.remaining(inst) > 0:
        t = state.t
        seed = window_seed(cfg.seed, t)
        sub = build_window(state, inst, cfg.window_w, cfg.window_rule)
        overlap = state.overlap
        fixed: dict[OpKey, int] = {}
        tau, probs = math.nan, ()
        warm = None
        use_prev = overlap and state.prev_local is not None
        if cfg.policy == "warm_start" and use_prev:
            warm = state.prev_local
        elif cfg.policy == "oracle_fix" and use_prev:
            lookahead = solve_window(sub, sub_cfg, seed)
            labels = fix_labels(overlap, state.prev_local, lookahead.schedule)
            fixed = {k: state.prev_local.machine(k) for k, y in labels.items() if y}
            warm = state.prev_local if cfg.warm_start_learned else None
        elif cfg.policy == "learned" and use_prev:
            fixed, tau, probs = fixer(sub, state)
            warm = state.prev_local if cfg.warm_start_learned else None

        t0 = time.perf_counter()
        res = solve_window(sub.with_fixed(fixed).with_warm_start(warm), sub_cfg, seed)
        moves = res.stats.moves
        fallback = False
        if res.status == INFEASIBLE:
            if not fixed:
                raise RhoError(f"window {t} is infeasible without any fixing")
            fallback = True
            res = solve_window(sub.with_warm_start(warm), sub_cfg, seed)
            moves += res.stats.moves
            fixed = {}
            if res.status == INFEASIBLE:
                raise RhoError(f"window {t} stays infeasible after dropping the fix set")
        solve_ms = (time.perf_counter() - t0) * 1e3
        local = res.schedule
        problems = check_fragment(sub.with_fixed(fixed), local)
        if problems:
            raise RhoError(f"subsolver returned an invalid window schedule: {problems[0]}")
        if record:
            windows.append(WindowRecord(sub, state.prev_local, overlap, local, state.fix_set))
        before = len(state.committed)
        state = commit_step(state, inst, sub, local, cfg.step_s)
        state.fix_set = frozenset(fixed)
        state.trace.append(IterationRecord(
            iter=t, window_size=len(sub), overlap_size=len(overlap), fix_count=len(fixed),
            tau=tau, solve_ms=solve_ms, local_makespan=local.makespan, fallback=fallback,
            moves=moves, committed=len(state.committed) - before, probs=probs, fixed=fixed))
    return RhoResult(Schedule.build(inst, state.committed), state.trace, windows)


TRACE_FIELDS = ["iter", "window_size", "overlap_size", "fix_count", "tau", "solve_ms",
                "local_makespan", "fallback"]


def trace_to_csv(trace: list[IterationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in trace:
        tau = "" if math.isnan(r.tau) else ("inf" if math.isinf(r.tau) else f"{r.tau:.6f}")
        w.writerow([r.iter, r.window_size, r.overlap_size, r.fix_count, tau,
                    f"{r.solve_ms:.3f}", r.local_makespan, int(r.fallback)])
    return buf.getvalue()


def probs_to_csv(trace: list[IterationRecord]) -> str:
    """Long format ``iter,prob`` of every predicted fix probability."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "prob"])
    for r in trace:
        for p in r.probs:
            w.writerow([r.iter, f"{p:.6f}"])
    return buf.getvalue()
