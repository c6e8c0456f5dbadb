"""Deadline-aware machine and priority-class selection.

The escalation ladder starts at the lowest priority class across the
whole fleet and only climbs when nothing at the current class can
finish inside the deadline, up to the request's allowed maximum. When
the deadline is unreachable everywhere the fastest option at the
maximum allowed class is still submitted, flagged ``deadline_at_risk``,
because abandoning an urgent job outright defeats the mission.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import InfeasibleOnMachine, InfeasibleRequest, NoHealthyMachines
from ..fleetsim.machine import MachineStatus
from .prediction import WaitPrediction, predict_start


@dataclass
class PlacementChoice:
    priority_class: str
    machines: list[str]
    at_risk: bool
    predictions: list[WaitPrediction]           # the chosen ones, same order
    evaluated: list[WaitPrediction] = field(default_factory=list)


def select_placement(nodes: int, walltime: float, deadline: float,
                     max_priority: str, k: int,
                     statuses: list[MachineStatus],
                     classes: tuple[str, ...] = ("normal", "high", "preempt")) -> PlacementChoice:
    """Pick ``k`` (machine, class) placements for a job.

    ``statuses`` must be snapshots of healthy machines only. Ties on
    predicted completion break to the lexicographically smaller
    machine_id.
    """
    healthy = [s for s in statuses if s.healthy]
    if not healthy:
        raise NoHealthyMachines("no healthy machines registered")
    if max_priority not in classes:
        raise ValueError(f"unknown priority class {max_priority!r}")
    max_idx = classes.index(max_priority)

    evaluated: list[WaitPrediction] = []
    feasible_anywhere = False
    last_preds: list[WaitPrediction] = []
    for cls in classes[:max_idx + 1]:
        preds = []
        for status in sorted(healthy, key=lambda s: s.machine_id):
            try:
                pred = predict_start(status, nodes, walltime, cls, classes)
            except InfeasibleOnMachine:
                continue
            preds.append(pred)
        evaluated.extend(preds)
        if not preds:
            continue
        feasible_anywhere = True
        last_preds = preds
        best = min(p.predicted_completion for p in preds)
        if best <= deadline:
            chosen = sorted(preds, key=lambda p: (p.predicted_completion, p.machine_id))[:k]
            return PlacementChoice(priority_class=cls,
                                   machines=[p.machine_id for p in chosen],
                                   at_risk=False, predictions=chosen,
                                   evaluated=evaluated)
    if not feasible_anywhere:
        raise InfeasibleRequest(f"{nodes} nodes fit no healthy machine")
    # nothing meets the deadline: fastest option at the maximum class
    chosen = sorted(last_preds, key=lambda p: (p.predicted_completion, p.machine_id))[:k]
    return PlacementChoice(priority_class=chosen[0].priority_class,
                           machines=[p.machine_id for p in chosen],
                           at_risk=True, predictions=chosen,
                           evaluated=evaluated)


DEFAULT_MULTIPLIERS = {"normal": 1.0, "high": 2.0, "preempt": 4.0}


def placement_cost(nodes: int, walltime: float, priority_class: str,
                   multipliers: dict[str, float] | None = None) -> float:
    mult = (multipliers or DEFAULT_MULTIPLIERS)[priority_class]
    return nodes * walltime * mult
