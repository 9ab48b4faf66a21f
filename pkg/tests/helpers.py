"""Relabeling utilities for equivariance checks."""

from __future__ import annotations

from graph_rho.fjsp import Instance, Schedule
from graph_rho.solvers import Subproblem


def relabel(inst: Instance, job_perm: list[int], mach_perm: list[int]) -> Instance:
    """Job ``j`` becomes ``job_perm[j]``, machine ``m`` becomes ``mach_perm[m]``."""
    jobs = [None] * inst.num_jobs
    for j, job in enumerate(inst.jobs):
        jobs[job_perm[j]] = [sorted((mach_perm[m], p) for m, p in op.options) for op in job.ops]
    return Instance.from_lists(inst.num_machines, jobs, inst.seed)


def relabel_key(key, job_perm):
    return (job_perm[key[0]], key[1])


def relabel_schedule(inst2: Instance, sched: Schedule, job_perm, mach_perm) -> Schedule:
    return Schedule.build(inst2, {relabel_key(k, job_perm): (mach_perm[m], s)
                                  for k, (m, s) in sched.assignments.items()})


def relabel_sub(inst2: Instance, sub: Subproblem, job_perm, mach_perm) -> Subproblem:
    return Subproblem(
        inst2,
        tuple(relabel_key(k, job_perm) for k in sub.ops),
        {job_perm[j]: t for j, t in sub.job_ready.items()},
        {mach_perm[m]: t for m, t in sub.machine_ready.items()},
        {relabel_key(k, job_perm): mach_perm[m] for k, m in sub.fixed.items()},
    )
