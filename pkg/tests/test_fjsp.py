from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graph_rho.fjsp import (Instance, InstanceError, ParseError, Schedule, format_schedule,
                            generate_instance, makespan, normalize_instance_text, parse_instance,
                            parse_schedule, serialize_instance, validate_schedule)
from graph_rho.solvers import Subproblem, solve_exact
from oracles import brute_force_optimum


def test_degenerate_generator_ranges():
    inst = generate_instance(1, 1, 3, flex_range=(1, 1), p_range=(3, 3), seed=7)
    assert inst.num_jobs == 1 and inst.num_ops == 3
    assert all(op.options == ((0, 3),) for op in inst.ops())
    assert inst.seed == 7


def test_generator_large_size_bounds():
    inst = generate_instance(10, 20, 30, flex_range=(1, 10), p_range=(1, 20), seed=0)
    assert (inst.num_machines, inst.num_jobs, inst.num_ops) == (10, 20, 600)
    for op in inst.ops():
        assert 1 <= len(op.options) <= 10
        assert all(1 <= p <= 20 for _, p in op.options)


def test_generator_is_deterministic():
    a = serialize_instance(generate_instance(4, 5, 6, seed=42))
    b = serialize_instance(generate_instance(4, 5, 6, seed=42))
    assert a == b
    assert a != serialize_instance(generate_instance(4, 5, 6, seed=43))


@pytest.mark.parametrize("args", [
    dict(num_machines=0, num_jobs=1, ops_per_job=1),
    dict(num_machines=2, num_jobs=1, ops_per_job=1, flex_range=(1, 3)),
    dict(num_machines=2, num_jobs=1, ops_per_job=1, flex_range=(0, 1)),
    dict(num_machines=2, num_jobs=1, ops_per_job=1, p_range=(0, 4)),
])
def test_generator_rejects_bad_ranges(args):
    with pytest.raises(InstanceError):
        generate_instance(**args)


def test_parse_worked_example():
    inst = parse_instance("1 2\n2 2 1 3 2 5 1 1 2")
    assert inst.num_jobs == 1 and inst.num_machines == 2
    assert inst.op((0, 0)).options == ((0, 3), (1, 5))
    assert inst.op((0, 1)).options == ((0, 2),)


def test_parse_machine_out_of_range_names_line():
    with pytest.raises(ParseError) as err:
        parse_instance("1 2\n1 1 3 4\n")
    assert err.value.line == 2


@pytest.mark.parametrize("text", [
    "", "x 2\n1 1 1 1", "2 2\n1 1 1 1", "1 2\n1 1 1 1\n1 1 1 1", "1 2\n1 1 1 1 9", "1 2\n2 1 1 1",
    "1 2\n1 2 1 3 1 4", "1 2\n1 1 1 0",
])
def test_parse_rejects_malformed(text):
    with pytest.raises(ParseError):
        parse_instance(text)


def test_parse_accepts_average_flexibility_token():
    assert parse_instance("1 2 1.5\n1 1 2 7").op((0, 0)).options == ((1, 7),)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_serialize_round_trip(nm, nj, no, seed):
    inst = generate_instance(nm, nj, no, seed=seed)
    text = serialize_instance(inst)
    again = parse_instance(text)
    assert again.jobs == inst.jobs
    assert serialize_instance(again) == normalize_instance_text(text)
    messy = "  " + text.replace(" ", "   ").replace("\n", " \n\n")
    assert serialize_instance(parse_instance(messy)) == normalize_instance_text(messy)


def test_validate_chain(chain):
    s = Schedule.build(chain, {(0, 0): (0, 0), (0, 1): (0, 3), (0, 2): (0, 5)})
    assert validate_schedule(chain, s) == []
    assert makespan(chain, s) == 9


def test_validate_precedence_violation(chain):
    s = Schedule.build(chain, {(0, 0): (0, 0), (0, 1): (0, 2), (0, 2): (0, 5)})
    v = validate_schedule(chain, s)
    kinds = [x.kind for x in v]
    assert kinds.count("precedence") == 1
    assert any(x.kind == "precedence" and x.ops == ((0, 0), (0, 1)) for x in v)


def test_validate_capacity_violation():
    inst = Instance.from_lists(1, [[[(0, 3)]], [[(0, 3)]]])
    s = Schedule.build(inst, {(0, 0): (0, 0), (1, 0): (0, 2)})
    assert [x.kind for x in validate_schedule(inst, s)] == ["capacity"]


def test_validate_reports_missing_invalid_and_makespan(t1):
    s = Schedule({(0, 0): (0, 0), (0, 1): (0, 3), (1, 0): (0, 0)}, 99)
    kinds = {x.kind for x in validate_schedule(t1, s)}
    assert {"missing", "invalid_option"} <= kinds


def test_validate_reports_wrong_makespan(chain):
    s = Schedule({(0, 0): (0, 0), (0, 1): (0, 3), (0, 2): (0, 5)}, 10)
    assert [x.kind for x in validate_schedule(chain, s)] == ["makespan"]


def test_schedule_text_round_trip(t1):
    s = Schedule.build(t1, {(0, 0): (0, 0), (0, 1): (1, 4), (1, 0): (1, 0), (1, 1): (0, 4)})
    text = format_schedule(t1, s)
    assert text.splitlines()[0] == f"# makespan {s.makespan}"
    assert "1 1 1 0 3" in text.splitlines()
    assert parse_schedule(t1, text) == s


def test_t1_optimum_matches_enumeration(t1):
    best = brute_force_optimum(t1)
    res = solve_exact(Subproblem(t1, tuple(t1.keys())))
    assert res.makespan_local == best
    assert validate_schedule(t1, res.schedule) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_optimum_monotone_in_processing_time(seed, data):
    inst = generate_instance(2, 2, 3, flex_range=(1, 2), p_range=(1, 6), seed=seed)
    base = solve_exact(Subproblem(inst, tuple(inst.keys()))).makespan_local
    key = data.draw(st.sampled_from(inst.keys()))
    idx = data.draw(st.integers(0, len(inst.op(key).options) - 1))
    jobs = [[list(op.options) for op in job.ops] for job in inst.jobs]
    m, p = jobs[key[0]][key[1]][idx]
    jobs[key[0]][key[1]][idx] = (m, p + data.draw(st.integers(1, 5)))
    slower = Instance.from_lists(inst.num_machines, jobs)
    assert solve_exact(Subproblem(slower, tuple(slower.keys()))).makespan_local >= base
