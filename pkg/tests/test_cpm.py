from __future__ import annotations

import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graph_rho.cpm import (CPMError, build_disjunctive_graph, compute_slack, critical_path,
                           criticality_labels, slack_report)
from graph_rho.fjsp import Instance, Schedule, generate_instance
from graph_rho.solvers import Subproblem, solve_heuristic
from oracles import delay_probe_slack, semi_active


def _solved(seed: int, nm=3, nj=3, no=4):
    inst = generate_instance(nm, nj, no, seed=seed)
    sched = solve_heuristic(Subproblem(inst, tuple(inst.keys())), None, seed, max_moves=300).schedule
    return inst, sched


def test_chain_all_critical(chain):
    s = Schedule.build(chain, {(0, 0): (0, 0), (0, 1): (0, 3), (0, 2): (0, 5)})
    g = build_disjunctive_graph(chain, s)
    assert g.order == ((0, 0), (0, 1), (0, 2))
    rep = compute_slack(g)
    assert [rep.ops[k].earliest_start for k in g.order] == [0, 3, 5]
    assert all(r.slack == 0 and r.critical for r in rep.ops.values())
    assert list(criticality_labels(chain, s).values()) == [True, True, True]


def test_two_parallel_jobs():
    inst = Instance.from_lists(2, [[[(0, 5)]], [[(1, 3)]]])
    s = Schedule.build(inst, {(0, 0): (0, 0), (1, 0): (1, 0)})
    rep = slack_report(inst, s)
    assert rep.ops[(1, 0)].slack == 2 and not rep.ops[(1, 0)].critical
    assert rep.ops[(0, 0)].critical
    assert list(criticality_labels(inst, s).values()) == [True, False]


def test_interleaved_jobs_follow_start_order():
    inst = Instance.from_lists(1, [[[(0, 1)], [(0, 1)]], [[(0, 1)], [(0, 1)]]])
    s = Schedule.build(inst, {(0, 0): (0, 0), (1, 0): (0, 1), (0, 1): (0, 2), (1, 1): (0, 3)})
    g = build_disjunctive_graph(inst, s)
    assert g.disjunctive == (((0, 0), (1, 0)), ((1, 0), (0, 1)), ((0, 1), (1, 1)))


def test_cyclic_orders_raise():
    inst = Instance.from_lists(2, [[[(0, 1)], [(1, 1)]], [[(1, 1)], [(0, 1)]]])
    # machine orders contradict job order: (0,1) before (1,0) on m1 and (1,1) before (0,0) on m0
    s = Schedule({(0, 0): (0, 5), (0, 1): (1, 0), (1, 0): (1, 6), (1, 1): (0, 0)}, 7)
    with pytest.raises(CPMError):
        build_disjunctive_graph(inst, s)


def test_release_times_shift_earliest_starts(chain):
    s = Schedule.build(chain, {(0, 0): (0, 4), (0, 1): (0, 7), (0, 2): (0, 9)})
    rep = slack_report(chain, s, {(0, 0): 4, (0, 1): 0, (0, 2): 0})
    assert rep.ops[(0, 0)].earliest_start == 4 and rep.makespan == 13


def test_csv_export(chain):
    s = Schedule.build(chain, {(0, 0): (0, 0), (0, 1): (0, 3), (0, 2): (0, 5)})
    lines = slack_report(chain, s).to_csv().splitlines()
    assert lines[0] == "job,op,es,ls,slack,critical"
    assert lines[1] == "0,0,0,0,0,1"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_slack_invariants(seed):
    inst, sched = _solved(seed)
    g = build_disjunctive_graph(inst, sched)
    rep = compute_slack(g)
    es = {k: r.earliest_start for k, r in rep.ops.items()}
    ls = {k: r.latest_start for k, r in rep.ops.items()}
    for u, v in g.conjunctive + g.disjunctive:
        assert es[v] >= es[u] + g.ptime[u]
        assert ls[u] <= ls[v] - g.ptime[u]
    for k, r in rep.ops.items():
        assert r.slack >= 0 and r.critical == (r.slack == 0)
        if es[k] + g.ptime[k] == rep.makespan:
            assert r.critical
    _, _, start = semi_active(inst, sched)
    assert rep.makespan == max(start[k] + g.ptime[k] for k in start)
    path = critical_path(g, rep)
    assert sum(g.ptime[k] for k in path) == rep.makespan
    assert all(rep.ops[k].critical for k in path)
    assert rep.ops[path[0]].earliest_start == 0


def test_matches_delay_probe_oracle():
    t0 = time.perf_counter()
    for seed in range(15):
        inst, sched = _solved(seed, nm=2, nj=3, no=3)
        rep = slack_report(inst, sched)
        assert {k: r.slack for k, r in rep.ops.items()} == delay_probe_slack(inst, sched)
    assert time.perf_counter() - t0 < 5


def test_lengthening_ops():
    # single critical chain on m0 plus a short job on m1 with slack 3
    inst = Instance.from_lists(2, [[[(0, 3)], [(0, 2)]], [[(1, 2)]]])
    s = Schedule.build(inst, {(0, 0): (0, 0), (0, 1): (0, 3), (1, 0): (1, 0)})
    assert slack_report(inst, s).ops[(1, 0)].slack == 3
    longer = Instance.from_lists(2, [[[(0, 4)], [(0, 2)]], [[(1, 2)]]])
    assert slack_report(longer, Schedule.build(longer, {(0, 0): (0, 0), (0, 1): (0, 4), (1, 0): (1, 0)})).makespan == 6
    side = Instance.from_lists(2, [[[(0, 3)], [(0, 2)]], [[(1, 3)]]])
    assert slack_report(side, Schedule.build(side, s.assignments)).makespan == 5
