"""Independent replay of fleet event logs, used as a test oracle.

Reconstructs machine occupancy and queue contents purely from the
``(time, machine, job, transition)`` log plus the submitted job facts
(nodes, class), following the documented queue discipline. Kept free of
any simulator internals on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class JobFacts:
    nodes: int
    priority_class: str
    walltime: float


@dataclass
class ReplayMachine:
    total_nodes: int
    classes: tuple[str, ...]
    facts: dict[str, JobFacts]
    free: int = 0
    running: list[str] = field(default_factory=list)  # in start order
    queues: dict[str, list[str]] = field(default_factory=dict)
    healthy: bool = True
    terminal: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.free = self.total_nodes
        self.queues = {c: [] for c in self.classes}

    def apply(self, job_id: str, transition: str, pending_preempted: list[str]):
        facts = self.facts[job_id]
        if transition == "queued":
            if job_id in pending_preempted:
                return  # handled as a batch when the preempting job starts
            self.queues[facts.priority_class].append(job_id)
        elif transition == "started":
            if job_id in self.queues[facts.priority_class]:
                self.queues[facts.priority_class].remove(job_id)
            self.running.append(job_id)
            self.free -= facts.nodes
        elif transition == "preempted":
            self.running.remove(job_id)
            self.free += facts.nodes
            pending_preempted.append(job_id)
        elif transition in ("completed", "cancelled", "killed_by_failure"):
            if job_id in self.running:
                self.running.remove(job_id)
                self.free += facts.nodes
            for q in self.queues.values():
                if job_id in q:
                    q.remove(job_id)
            if job_id in pending_preempted:
                pending_preempted.remove(job_id)
            self.terminal[job_id] = transition

    def flush_preempted(self, pending_preempted: list[str], start_order: dict[str, int]):
        # victims rejoin the head of their class queue in original start order
        for job_id in sorted(pending_preempted, key=lambda j: start_order[j], reverse=True):
            self.queues[self.facts[job_id].priority_class].insert(0, job_id)
        pending_preempted.clear()


def replay(entries, specs: dict[str, tuple[int, tuple[str, ...]]],
           facts: dict[str, JobFacts], until: float | None = None):
    """Fold the event log into per-machine occupancy state.

    ``specs`` maps machine_id to (total_nodes, classes). Returns a dict
    of machine_id -> ReplayMachine.
    """
    machines = {m: ReplayMachine(total_nodes=n, classes=c, facts=facts)
                for m, (n, c) in specs.items()}
    start_order: dict[str, int] = {}
    counter = 0
    pending: dict[str, list[str]] = {m: [] for m in machines}
    for e in entries:
        if until is not None and e.time > until:
            break
        rm = machines[e.machine_id]
        if e.transition == "started":
            # a start ends any in-flight preemption batch on this machine
            rm.flush_preempted(pending[e.machine_id], start_order)
            counter += 1
            start_order[e.job_id] = counter
        rm.apply(e.job_id, e.transition, pending[e.machine_id])
        if e.transition == "killed_by_failure":
            rm.healthy = False
    for m, rm in machines.items():
        rm.flush_preempted(pending[m], start_order)
    return machines


def smallest_sufficient_suffix(running_normals: list[tuple[str, int]], needed: int):
    """Oracle for preemption minimality: enumerate all suffixes of the
    running normal-class jobs (in start order) and return the smallest
    one freeing at least ``needed`` nodes, or None."""
    n = len(running_normals)
    best = None
    for k in range(n + 1):
        suffix = running_normals[n - k:]
        if sum(nodes for _, nodes in suffix) >= needed:
            best = [job_id for job_id, _ in suffix]
            break
    return best
