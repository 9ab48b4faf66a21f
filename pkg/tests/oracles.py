"""Independent reference computations. Nothing here imports solver or CPM code."""

from __future__ import annotations

import itertools
from typing import Mapping

from graph_rho.fjsp import Instance, OpKey, Schedule


def evaluate_orders(inst: Instance, keys: list[OpKey], mach: Mapping[OpKey, int],
                    orders: Mapping[int, list[OpKey]], job_ready: Mapping[int, int] | None = None,
                    machine_ready: Mapping[int, int] | None = None,
                    forced: Mapping[OpKey, int] | None = None) -> dict[OpKey, int] | None:
    """Earliest starts for fixed assignments and machine orders, or None if they form a cycle.

    ``forced`` raises individual start times to at least the given value.
    """
    job_ready = job_ready or {}
    machine_ready = machine_ready or {}
    forced = forced or {}
    present = set(keys)
    preds: dict[OpKey, list[OpKey]] = {k: [] for k in keys}
    for j, k in keys:
        if (j, k - 1) in present:
            preds[(j, k)].append((j, k - 1))
    for seq in orders.values():
        for a, b in zip(seq, seq[1:]):
            preds[b].append(a)
    start: dict[OpKey, int] = {}
    remaining = set(keys)
    while remaining:
        ready = [k for k in remaining if all(p in start for p in preds[k])]
        if not ready:
            return None
        for k in ready:
            first_on_m = orders[mach[k]][0] == k
            t = max([forced.get(k, 0)]
                    + [start[p] + inst.ptime(p, mach[p]) for p in preds[k]]
                    + ([job_ready.get(k[0], 0)] if (k[0], k[1] - 1) not in present else [0])
                    + ([machine_ready.get(mach[k], 0)] if first_on_m else [0]))
            start[k] = t
            remaining.discard(k)
    return start


def span_of(inst: Instance, mach: Mapping[OpKey, int], start: Mapping[OpKey, int]) -> int:
    return max(start[k] + inst.ptime(k, mach[k]) for k in start)


def brute_force_optimum(inst: Instance, keys: list[OpKey] | None = None,
                        job_ready: Mapping[int, int] | None = None,
                        machine_ready: Mapping[int, int] | None = None,
                        fixed: Mapping[OpKey, int] | None = None) -> int | None:
    """Minimum makespan over every machine assignment times every per-machine ordering."""
    keys = list(keys if keys is not None else inst.keys())
    fixed = fixed or {}
    choices = [[fixed[k]] if k in fixed else list(inst.op(k).machines) for k in keys]
    best = None
    for combo in itertools.product(*choices):
        mach = dict(zip(keys, combo))
        if any(not inst.op(k).has_machine(m) for k, m in mach.items()):
            continue
        groups: dict[int, list[OpKey]] = {}
        for k in keys:
            groups.setdefault(mach[k], []).append(k)
        ms = sorted(groups)
        for perms in itertools.product(*(itertools.permutations(groups[m]) for m in ms)):
            orders = {m: list(p) for m, p in zip(ms, perms)}
            start = evaluate_orders(inst, keys, mach, orders, job_ready, machine_ready)
            if start is None:
                continue
            span = span_of(inst, mach, start)
            if best is None or span < best:
                best = span
    return best


def semi_active(inst: Instance, sched: Schedule) -> tuple[dict, dict, dict[OpKey, int]]:
    """Machine map, machine orders and earliest starts implied by a schedule's orders."""
    keys = sorted(sched.assignments)
    mach = {k: sched.machine(k) for k in keys}
    orders: dict[int, list[OpKey]] = {}
    for k in sorted(keys, key=lambda k: (sched.start(k), k)):
        orders.setdefault(mach[k], []).append(k)
    start = evaluate_orders(inst, keys, mach, orders)
    assert start is not None
    return mach, orders, start


def delay_probe_slack(inst: Instance, sched: Schedule) -> dict[OpKey, int]:
    """Largest delay of each op (successors re-propagated) that keeps the makespan."""
    mach, orders, start = semi_active(inst, sched)
    keys = list(start)
    base = span_of(inst, mach, start)
    out = {}
    for k in keys:
        delta = 0
        while True:
            probe = evaluate_orders(inst, keys, mach, orders, forced={k: start[k] + delta + 1})
            if span_of(inst, mach, probe) != base:
                break
            delta += 1
        out[k] = delta
    return out
