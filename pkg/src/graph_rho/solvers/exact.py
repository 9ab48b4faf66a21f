"""Depth-first branch and bound for small windows (the reference optimum).

Branching appends one (operation, machine) pair at a time. Children must start no
earlier than the previously appended operation (ties broken by op key), so each
semi-active schedule is generated exactly once; every optimum has a semi-active
representative, so the search stays exact.
"""

from __future__ import annotations

import time

from .subproblem import (INFEASIBLE, OPTIMAL, TIMEOUT, Compiled, SolveResult,
                         SolveStats, Subproblem, SubproblemError)

MAX_EXACT_OPS = 12


def solve_exact(sub: Subproblem, node_limit: int = 1_000_000) -> SolveResult:
    if len(sub) > MAX_EXACT_OPS:
        raise SubproblemError(f"solve_exact handles at most {MAX_EXACT_OPS} operations, got {len(sub)}")
    t0 = time.perf_counter()
    c = Compiled(sub)
    stats = SolveStats()
    if not c.feasible:
        stats.wall_ms = (time.perf_counter() - t0) * 1e3
        return SolveResult(None, None, INFEASIBLE, stats)
    if c.n == 0:
        return SolveResult(c.to_schedule([], []), 0, OPTIMAL, stats)

    seq0, mach0 = c.greedy()
    _, best_span, _ = c.decode(seq0, mach0)
    best = [best_span, list(seq0), list(mach0)]
    stats.history.append((0, best_span))

    n, nm = c.n, len(c.machine_ready)
    min_p = [min(p for _, p in opts) for opts in c.options]
    # tail[i]: minimum work from i to the end of its job inside the window
    tail = [0] * n
    for i in reversed(range(n)):
        nxt = c.job_succ[i]
        tail[i] = min_p[i] + (tail[nxt] if nxt >= 0 else 0)

    ends = [0] * n
    mready = list(c.machine_ready)
    seq: list[int] = []
    mach = [-1] * n
    done = [False] * n
    exhausted = True

    def lower_bound(span: int, remaining_work: int, avail: list[int]) -> int:
        lb = span
        for i in avail:
            jp = c.job_pred[i]
            ready = ends[jp] if jp >= 0 else c.release[i]
            lb = max(lb, ready + tail[i])
        # machines ready after the final makespan contribute no capacity, so cap at span
        load = -(-(sum(min(r, span) for r in mready) + remaining_work) // nm)
        return max(lb, load)

    def dfs(span: int, remaining_work: int, last: tuple[int, tuple[int, int]]) -> None:
        nonlocal exhausted
        stats.moves += 1
        if stats.moves > node_limit:
            exhausted = False
            return
        avail = [i for i in range(n) if not done[i] and (c.job_pred[i] < 0 or done[c.job_pred[i]])]
        if not avail:
            if span < best[0]:
                best[0], best[1], best[2] = span, list(seq), list(mach)
                stats.improvements += 1
                stats.history.append((stats.moves, span))
            return
        if lower_bound(span, remaining_work, avail) >= best[0]:
            return
        children = []
        for i in avail:
            jp = c.job_pred[i]
            ready = ends[jp] if jp >= 0 else c.release[i]
            for m, p in c.options[i]:
                s = max(ready, mready[m])
                if (s, c.keys[i]) < last:
                    continue
                children.append((s + p, s, i, m, p))
        children.sort()
        for end, s, i, m, p in children:
            if max(span, end) >= best[0]:
                continue
            prev_ready = mready[m]
            seq.append(i)
            mach[i], ends[i], mready[m], done[i] = m, end, end, True
            dfs(max(span, end), remaining_work - min_p[i], (s, c.keys[i]))
            seq.pop()
            mach[i], mready[m], done[i] = -1, prev_ready, False
            if not exhausted:
                return

    dfs(0, sum(min_p), (-1, (-1, -1)))
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    sched = c.to_schedule(best[1], best[2])
    return SolveResult(sched, sched.makespan, OPTIMAL if exhausted else TIMEOUT, stats)
