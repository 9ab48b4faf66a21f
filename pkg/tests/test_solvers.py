from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graph_rho.fjsp import Instance, generate_instance
from graph_rho.solvers import (FEASIBLE, INFEASIBLE, OPTIMAL, TIMEOUT, MAX_EXACT_OPS, Subproblem,
                               SubproblemError, check_fragment, solve_exact, solve_heuristic)
from oracles import brute_force_optimum


def _window(inst, job_ready=None, machine_ready=None, fixed=None):
    return Subproblem(inst, tuple(inst.keys()), job_ready or {}, machine_ready or {}, fixed or {})


def test_subproblem_invariants(t1):
    with pytest.raises(SubproblemError):
        Subproblem(t1, ((0, 0), (0, 0)))
    with pytest.raises(SubproblemError):
        Subproblem(t1, ((0, 0),), fixed={(1, 0): 1})
    with pytest.raises(SubproblemError):
        Subproblem(t1, ((0, 0),), job_ready={0: -1})
    inst = Instance.from_lists(1, [[[(0, 1)], [(0, 1)], [(0, 1)]]])
    with pytest.raises(SubproblemError):
        Subproblem(inst, ((0, 0), (0, 2)))


def test_exact_chain_single_machine(chain):
    res = solve_exact(_window(chain))
    assert res.status == OPTIMAL and res.makespan_local == 9


def test_exact_t1_fixed_restriction(t1):
    free = solve_exact(_window(t1))
    fixed = solve_exact(_window(t1, fixed={(0, 0): 1}))
    assert fixed.makespan_local == brute_force_optimum(t1, fixed={(0, 0): 1})
    assert fixed.makespan_local >= free.makespan_local
    assert fixed.schedule.machine((0, 0)) == 1


def test_exact_fixed_outside_options_is_infeasible(t1):
    assert solve_exact(_window(t1, fixed={(1, 0): 0})).status == INFEASIBLE
    assert solve_heuristic(_window(t1, fixed={(1, 0): 0}), None, 0, max_moves=100).status == INFEASIBLE


def test_exact_respects_size_cap():
    inst = generate_instance(2, 13, 1, seed=0)
    assert inst.num_ops > MAX_EXACT_OPS
    with pytest.raises(SubproblemError):
        solve_exact(_window(inst))


def test_exact_node_limit_reports_timeout():
    inst = generate_instance(3, 4, 3, seed=3)
    res = solve_exact(_window(inst), node_limit=5)
    assert res.status == TIMEOUT
    assert check_fragment(_window(inst), res.schedule) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 6), st.integers(0, 6))
def test_exact_with_ready_times_matches_enumeration(seed, jr, mr):
    inst = generate_instance(2, 3, 2, flex_range=(1, 2), p_range=(1, 7), seed=seed)
    sub = _window(inst, {1: jr}, {0: mr})
    res = solve_exact(sub)
    assert res.makespan_local == brute_force_optimum(inst, job_ready={1: jr}, machine_ready={0: mr})
    assert check_fragment(sub, res.schedule) == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.data())
def test_fix_dominance(seed, data):
    inst = generate_instance(3, 3, 3, flex_range=(1, 3), seed=seed)
    keys = inst.keys()
    chosen = data.draw(st.lists(st.sampled_from(keys), unique=True, max_size=4))
    fixed = {k: data.draw(st.sampled_from(inst.op(k).machines)) for k in chosen}
    free = solve_exact(_window(inst)).makespan_local
    res = solve_exact(_window(inst, fixed=fixed))
    assert res.makespan_local >= free
    assert all(res.schedule.machine(k) == m for k, m in fixed.items())


def test_heuristic_all_fixed_is_feasible():
    inst = generate_instance(3, 4, 5, seed=11)
    fixed = {k: inst.op(k).machines[0] for k in inst.keys()}
    sub = _window(inst, fixed=fixed)
    res = solve_heuristic(sub, 50, seed=0)
    assert res.status == FEASIBLE
    assert check_fragment(sub, res.schedule) == []


def test_heuristic_deterministic_in_move_mode():
    inst = generate_instance(4, 5, 5, seed=2)
    a = solve_heuristic(_window(inst), None, seed=9, max_moves=1500)
    b = solve_heuristic(_window(inst), None, seed=9, max_moves=1500)
    assert a.schedule == b.schedule and a.stats.moves == b.stats.moves
    assert a.stats.moves <= 1500


def test_heuristic_never_worse_than_warm_start():
    inst = generate_instance(3, 3, 3, seed=4)
    sub = _window(inst)
    opt = solve_exact(sub)
    res = solve_heuristic(sub.with_warm_start(opt.schedule), None, seed=1, max_moves=50)
    assert res.makespan_local <= opt.makespan_local


def test_heuristic_anytime_history_non_increasing():
    inst = generate_instance(4, 6, 5, seed=8)
    hist = solve_heuristic(_window(inst), None, seed=3, max_moves=4000).stats.history
    spans = [span for _, span in hist]
    assert spans == sorted(spans, reverse=True)


def test_heuristic_rejects_zero_budget(t1):
    with pytest.raises(ValueError):
        solve_heuristic(_window(t1), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 9))
def test_heuristic_fragments_are_feasible(seed, jr):
    inst = generate_instance(3, 4, 3, seed=seed)
    sub = Subproblem(inst, tuple(inst.keys()), {0: jr}, {1: jr + 2}, {(2, 0): inst.op((2, 0)).machines[-1]})
    res = solve_heuristic(sub, None, seed=seed, max_moves=400)
    assert check_fragment(sub, res.schedule) == []
