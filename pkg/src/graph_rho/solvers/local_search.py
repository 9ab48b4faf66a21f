"""Anytime window solver: greedy dispatching followed by iterated local search.

A solution is a machine per operation plus an operation order per machine; starts
are the longest-path (semi-active) times of the resulting disjunctive graph. The
neighbourhood has two move types:

* reassign: move an unfixed operation to another compatible machine, slotted into
  that machine's order by its current start time
* swap: exchange two operations adjacent on the same machine (moves that would
  create a cycle are evaluated and rejected)

Search is first-improvement on (makespan, sum of completion times). At a local
optimum the incumbent is perturbed by a short random walk with annealing-style
acceptance, up to ``restarts`` times. Effort is counted in neighbour evaluations,
so a move budget makes runs bit-reproducible.
"""

from __future__ import annotations

import bisect
import math
import random
import time

from .subproblem import (FEASIBLE, INFEASIBLE, Compiled, SolveResult, SolveStats,
                         Subproblem)

_CYCLE = (1 << 62, 1 << 62)


class _Budget(Exception):
    pass


class _State:
    __slots__ = ("mach", "orders", "starts", "cost")

    def __init__(self, mach, orders, starts, cost):
        self.mach = mach
        self.orders = orders
        self.starts = starts
        self.cost = cost


class _Search:
    def __init__(self, c: Compiled, rng: random.Random, max_moves: int | None,
                 deadline: float | None, stats: SolveStats):
        self.c = c
        self.rng = rng
        self.max_moves = max_moves
        self.deadline = deadline
        self.stats = stats

    def decode(self, mach: list[int], orders: list[list[int]]):
        """Longest-path starts; ``None`` when job and machine orders form a cycle."""
        c = self.c
        n = c.n
        mpred = [-1] * n
        msucc = [-1] * n
        for seq in orders:
            for a, b in zip(seq, seq[1:]):
                mpred[b] = a
                msucc[a] = b
        indeg = [(c.job_pred[i] >= 0) + (mpred[i] >= 0) for i in range(n)]
        stack = [i for i in range(n) if indeg[i] == 0]
        starts = [0] * n
        ends = [0] * n
        mready, release, ptime, jsucc = c.machine_ready, c.release, c.ptime, c.job_succ
        seen = span = total = 0
        while stack:
            i = stack.pop()
            seen += 1
            m = mach[i]
            jp, mp = c.job_pred[i], mpred[i]
            s = ends[jp] if jp >= 0 else release[i]
            t = ends[mp] if mp >= 0 else mready[m]
            if t > s:
                s = t
            e = s + ptime[i][m]
            starts[i] = s
            ends[i] = e
            total += e
            if e > span:
                span = e
            for nxt in (jsucc[i], msucc[i]):
                if nxt >= 0:
                    indeg[nxt] -= 1
                    if indeg[nxt] == 0:
                        stack.append(nxt)
        if seen < n:
            return None
        return starts, (span, total)

    def evaluate(self, mach, orders):
        st = self.stats
        if self.max_moves is not None and st.moves >= self.max_moves:
            raise _Budget
        if self.deadline is not None and st.moves % 32 == 0 and time.perf_counter() >= self.deadline:
            raise _Budget
        st.moves += 1
        out = self.decode(mach, orders)
        if out is None:
            return None
        return _State(mach, orders, out[0], out[1])

    def neighbourhood(self, state: _State) -> list[tuple]:
        c = self.c
        moves: list[tuple] = []
        for i in c.free:
            for m, _ in c.options[i]:
                if m != state.mach[i]:
                    moves.append(("r", i, m))
        for m, seq in enumerate(state.orders):
            for pos in range(len(seq) - 1):
                if c.job[seq[pos]] != c.job[seq[pos + 1]]:
                    moves.append(("s", m, pos))
        return moves

    def apply(self, state: _State, move: tuple):
        orders = list(state.orders)
        if move[0] == "s":
            _, m, pos = move
            seq = list(orders[m])
            seq[pos], seq[pos + 1] = seq[pos + 1], seq[pos]
            orders[m] = seq
            return self.evaluate(state.mach, orders)
        _, i, m = move
        old = state.mach[i]
        mach = list(state.mach)
        mach[i] = m
        orders[old] = [x for x in orders[old] if x != i]
        starts = state.starts
        seq = list(orders[m])
        keys = [(starts[x], self.c.keys[x]) for x in seq]
        seq.insert(bisect.bisect(keys, (starts[i], self.c.keys[i])), i)
        orders[m] = seq
        return self.evaluate(mach, orders)

    def descend(self, state: _State):
        """First-improvement descent; yields every improved state."""
        while True:
            moves = self.neighbourhood(state)
            self.rng.shuffle(moves)
            for move in moves:
                cand = self.apply(state, move)
                if cand is not None and cand.cost < state.cost:
                    state = cand
                    self.stats.improvements += 1
                    yield state
                    break
            else:
                return

    def perturb(self, state: _State, steps: int, temperature: float) -> _State:
        """Random walk accepting worse neighbours with probability exp(-delta / T)."""
        for _ in range(steps):
            moves = self.neighbourhood(state)
            if not moves:
                break
            cand = self.apply(state, self.rng.choice(moves))
            if cand is None:
                continue
            delta = cand.cost[0] - state.cost[0]
            if delta <= 0 or self.rng.random() < math.exp(-delta / max(temperature, 1e-9)):
                state = cand
        return state


def _orders_from_seq(c: Compiled, seq: list[int], mach: list[int]) -> list[list[int]]:
    orders: list[list[int]] = [[] for _ in c.machine_ready]
    for i in seq:
        orders[mach[i]].append(i)
    return orders


def solve_heuristic(sub: Subproblem, time_limit_ms: float | None = 500, seed: int = 0, *,
                    max_moves: int | None = None, restarts: int = 8) -> SolveResult:
    """Solve a window heuristically; never reports optimality.

    Passing ``max_moves`` switches to move-count mode: the wall-clock limit is
    ignored and the result depends only on (sub, seed, max_moves, restarts).
    """
    if max_moves is None and (time_limit_ms is None or time_limit_ms < 1):
        raise ValueError("time_limit_ms must be >= 1 unless a move budget is given")
    t0 = time.perf_counter()
    deadline = None if max_moves is not None else t0 + time_limit_ms / 1e3
    stats = SolveStats()
    c = Compiled(sub)
    if not c.feasible:
        stats.wall_ms = (time.perf_counter() - t0) * 1e3
        return SolveResult(None, None, INFEASIBLE, stats)

    rng = random.Random(seed)
    search = _Search(c, rng, max_moves, deadline, stats)

    def from_seq(seq, mach) -> _State:
        orders = _orders_from_seq(c, seq, mach)
        starts, cost = search.decode(mach, orders)
        return _State(mach, orders, starts, cost)

    state = from_seq(*c.greedy())
    if sub.warm_start is not None:
        prefix = c.from_schedule(sub.warm_start)
        if prefix is not None:
            warm = from_seq(*c.greedy(*prefix))
            if warm.cost <= state.cost:
                state = warm
    best = state
    stats.history.append((0, best.cost[0]))

    kick = max(2, c.n // 3)
    try:
        for r in range(restarts + 1):
            for state in search.descend(state):
                if state.cost < best.cost:
                    best = state
                    stats.history.append((stats.moves, best.cost[0]))
            if r == restarts:
                break
            stats.restarts += 1
            temperature = max(1.0, 0.05 * best.cost[0]) * 0.5 ** (r % 4)
            state = search.perturb(best, kick, temperature)
            if state.cost < best.cost:
                best = state
                stats.history.append((stats.moves, best.cost[0]))
    except _Budget:
        pass

    sched = c.to_schedule_from_starts(best.mach, best.starts)
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return SolveResult(sched, sched.makespan, FEASIBLE, stats)
