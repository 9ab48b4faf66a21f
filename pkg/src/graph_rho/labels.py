"""Supervision targets for overlap operations."""

from __future__ import annotations

from typing import Iterable

from .cpm import criticality_labels
from .fjsp import OpKey, Schedule
from .solvers.subproblem import Subproblem


def fix_labels(overlap: Iterable[OpKey], prev_local: Schedule, target: Schedule) -> dict[OpKey, bool]:
    """1 where the previous window's machine survives in the lookahead schedule."""
    return {k: prev_local.machine(k) == target.machine(k) for k in overlap}


def crit_labels(sub: Subproblem, local: Schedule, overlap: Iterable[OpKey]) -> dict[OpKey, bool]:
    """Zero-slack flags from the window schedule, restricted to ``overlap``."""
    crit = criticality_labels(sub.inst, local, sub.release(local))
    return {k: crit[k] for k in overlap}
