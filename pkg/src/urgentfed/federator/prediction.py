"""Queue-wait prediction from a machine status snapshot.

Walks the machine's queue discipline forward in time assuming every
running and queued job consumes its full walltime estimate and that no
further jobs arrive. For the in-scope strict-FIFO-per-class discipline
this is exact, which is what makes deadline promises possible at all;
the walker is written against the documented discipline, independently
of the simulator's event-driven implementation, so the two can check
each other.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

from ..errors import InfeasibleOnMachine
from ..fleetsim.machine import MachineStatus


@dataclass
class WaitPrediction:
    machine_id: str
    priority_class: str
    predicted_start: float
    predicted_completion: float


@dataclass
class _Job:
    nodes: int
    walltime: float
    cls: str
    candidate: bool = False


_CANDIDATE_ID = "\x00candidate"


def predict_start(status: MachineStatus, nodes: int, walltime: float,
                  priority_class: str,
                  classes: tuple[str, ...] = ("normal", "high", "preempt")) -> WaitPrediction:
    """Predict when a job appended to ``priority_class`` would start.

    ``classes`` is the machine's class list, lowest priority first; the
    last class preempts running jobs of the first class when it cannot
    fit otherwise.
    """
    if nodes > status.total_nodes:
        raise InfeasibleOnMachine(
            f"{nodes} nodes > {status.total_nodes} on {status.machine_id}")
    if priority_class not in classes:
        raise InfeasibleOnMachine(f"unknown class {priority_class!r}")

    free = status.free_nodes
    now = status.sample_time
    # (end_time, start_order, job); order mirrors the order completion
    # events were scheduled on the machine, i.e. start order
    running: list[tuple[float, int, _Job]] = []
    order = 0
    for _jid, jnodes, remaining, estimate, jcls in status.running:
        order += 1
        heapq.heappush(running, (now + remaining, order, _Job(jnodes, estimate, jcls)))
    queues: dict[str, deque[_Job]] = {c: deque() for c in classes}
    for cls, entries in status.queued_per_class.items():
        for _jid, jnodes, estimate in entries:
            queues[cls].append(_Job(jnodes, estimate, cls))
    candidate = _Job(nodes, walltime, priority_class, candidate=True)
    queues[priority_class].append(candidate)

    normal_cls = classes[0]
    preempt_cls = classes[-1]
    t = now

    def try_preempt(head: _Job) -> bool:
        nonlocal free
        victims_pool = sorted(
            ((end, o, j) for end, o, j in running if j.cls == normal_cls),
            key=lambda item: item[1])
        needed = head.nodes - free
        suffix = []
        gain = 0
        for item in reversed(victims_pool):
            if gain >= needed:
                break
            suffix.append(item)
            gain += item[2].nodes
        if gain < needed:
            return False
        for item in suffix:
            running.remove(item)
            free += item[2].nodes
        heapq.heapify(running)
        # victims restart from scratch at the head of their class queue,
        # original start order preserved
        for _end, o, j in sorted(suffix, key=lambda item: item[1], reverse=True):
            queues[normal_cls].appendleft(_Job(j.nodes, j.walltime, j.cls))
        return True

    def scan() -> float | None:
        nonlocal free, order
        for cls in reversed(classes):
            queue = queues[cls]
            while queue:
                head = queue[0]
                if head.nodes <= free or (cls == preempt_cls and head.nodes > free
                                          and try_preempt(head)):
                    queue.popleft()
                    if head.candidate:
                        return t
                    free -= head.nodes
                    order += 1
                    heapq.heappush(running, (t + head.walltime, order, head))
                    continue
                break
        return None

    started = scan()
    while started is None:
        if not running:
            raise InfeasibleOnMachine(
                f"queue cannot drain for {nodes} nodes on {status.machine_id}")
        end, _o, ended = heapq.heappop(running)
        t = end
        free += ended.nodes
        started = scan()
    return WaitPrediction(machine_id=status.machine_id,
                          priority_class=priority_class,
                          predicted_start=started,
                          predicted_completion=started + walltime)
