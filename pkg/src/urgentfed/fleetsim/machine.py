"""Discrete-event model of one HPC machine with a priority batch queue.

Queue discipline (the one policy in scope, ``fifo_priority``):

* strict priority across classes; the class list is ordered lowest to
  highest (default ``[normal, high, preempt]``),
* FIFO within a class and no backfill: a job never overtakes an earlier
  job of the same class, but a queued job that does not fit does not
  block lower classes (no node reservation),
* a queued preempt-class job that cannot fit preempts the smallest
  suffix, by start order, of running normal-class jobs that frees
  enough nodes; victims re-enter the head of their class queue and
  restart from scratch when rescheduled,
* jobs whose actual runtime exceeds their walltime estimate are
  truncated to the estimate.

Every state transition is appended to the fleet event log as a
``(time, machine, job, transition)`` tuple, which is the replay surface
the tests reconstruct machine state from.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..clock import SimClock
from ..errors import InfeasibleRequest, MachineDown, TimeReversal, UnknownJob

# job lifecycle states
QUEUED = "queued"
RUNNING = "running"
COMPLETED = "completed"
CANCELLED = "cancelled"
KILLED = "killed_by_failure"
PREEMPTED = "preempted"

TERMINAL_STATES = frozenset({COMPLETED, CANCELLED, KILLED})

DEFAULT_CLASSES = ("normal", "high", "preempt")
FULL_OUTAGE = "full_outage"


@dataclass
class MachineSpec:
    machine_id: str
    total_nodes: int
    cores_per_node: int = 1
    queue_policy: str = "fifo_priority"
    priority_classes: tuple[str, ...] = DEFAULT_CLASSES
    failure_schedule: tuple[tuple[float, str], ...] = ()

    def __post_init__(self):
        if self.total_nodes < 1:
            raise ValueError(f"{self.machine_id}: total_nodes must be >= 1")
        if self.cores_per_node < 1:
            raise ValueError(f"{self.machine_id}: cores_per_node must be >= 1")
        if self.queue_policy != "fifo_priority":
            raise ValueError(f"unsupported queue policy {self.queue_policy!r}")
        classes = tuple(self.priority_classes)
        if not classes or len(set(classes)) != len(classes):
            raise ValueError("priority_classes must be non-empty and unique")
        self.priority_classes = classes
        for t, kind in self.failure_schedule:
            if kind != FULL_OUTAGE:
                raise ValueError(f"unsupported failure kind {kind!r}")


@dataclass
class SimJob:
    job_id: str
    nodes_requested: int
    walltime_estimate: float
    actual_runtime: float
    priority_class: str = "normal"
    submit_time: float = 0.0
    payload: dict | None = None
    # runtime bookkeeping, owned by Machine
    state: str = QUEUED
    start_time: float | None = None
    start_seq: int = -1
    run_token: int = 0

    def __post_init__(self):
        if self.nodes_requested < 1:
            raise ValueError(f"{self.job_id}: nodes_requested must be >= 1")
        if self.walltime_estimate <= 0:
            raise ValueError(f"{self.job_id}: walltime_estimate must be > 0")
        if self.actual_runtime < 0:
            raise ValueError(f"{self.job_id}: actual_runtime must be >= 0")

    @property
    def effective_runtime(self) -> float:
        return min(self.actual_runtime, self.walltime_estimate)


@dataclass
class MachineStatus:
    """Snapshot of one machine at ``sample_time``.

    ``running`` entries are ``(job_id, nodes, remaining_walltime,
    walltime_estimate, priority_class)`` ordered by start time (earliest
    first); estimate and class are included so queue-wait forecasts can
    anticipate preemption and restart-from-scratch from the snapshot
    alone, the way a real scheduler query exposes them.
    ``queued_per_class`` maps class name to ``(job_id, nodes,
    walltime_estimate)`` tuples in submission order.
    """

    machine_id: str
    sample_time: float
    free_nodes: int
    running: list[tuple[str, int, float, float, str]]
    queued_per_class: dict[str, list[tuple[str, int, float]]]
    healthy: bool

    @property
    def total_nodes(self) -> int:
        return self.free_nodes + sum(entry[1] for entry in self.running)


@dataclass
class LogEntry:
    time: float
    machine_id: str
    job_id: str
    transition: str

    def line(self) -> str:
        from ..clock import fmt_time
        return f"{fmt_time(self.time)}\t{self.machine_id}\t{self.job_id}\t{self.transition}"


@dataclass
class EventLog:
    entries: list[LogEntry] = field(default_factory=list)
    listeners: list = field(default_factory=list)

    def append(self, entry: LogEntry) -> None:
        self.entries.append(entry)
        for listener in self.listeners:
            listener(entry)

    def since(self, index: int) -> list[LogEntry]:
        return self.entries[index:]


class Machine:
    """One simulated HPC machine driven by a shared :class:`SimClock`."""

    def __init__(self, spec: MachineSpec, clock: SimClock, log: EventLog):
        self.spec = spec
        self.clock = clock
        self.log = log
        self.healthy = True
        self.free_nodes = spec.total_nodes
        self.queues: dict[str, deque[SimJob]] = {c: deque() for c in spec.priority_classes}
        self.running: dict[str, SimJob] = {}
        self.jobs: dict[str, SimJob] = {}
        self._start_counter = 0
        self._frozen_status: MachineStatus | None = None
        for t, _kind in spec.failure_schedule:
            clock.schedule(t, self._outage)

    # -- public operations -------------------------------------------

    def submit(self, job: SimJob) -> str:
        if not self.healthy:
            raise MachineDown(self.spec.machine_id)
        if job.nodes_requested > self.spec.total_nodes:
            raise InfeasibleRequest(
                f"{job.job_id} wants {job.nodes_requested} nodes, "
                f"{self.spec.machine_id} has {self.spec.total_nodes}")
        if job.priority_class not in self.queues:
            raise ValueError(f"unknown priority class {job.priority_class!r}")
        if job.job_id in self.jobs:
            raise ValueError(f"duplicate job id {job.job_id!r}")
        job.submit_time = self.clock.now
        job.state = QUEUED
        self.jobs[job.job_id] = job
        self.queues[job.priority_class].append(job)
        self._log(job.job_id, QUEUED)
        self.schedule_pass()
        return job.job_id

    def cancel(self, job_id: str) -> str:
        """Cancel a job; repeated cancels acknowledge without effect."""
        job = self.jobs.get(job_id)
        if job is None:
            raise UnknownJob(f"{job_id} on {self.spec.machine_id}")
        if job.state in TERMINAL_STATES:
            return "already_terminal"
        if job.state == QUEUED or job.state == PREEMPTED:
            self.queues[job.priority_class].remove(job)
        elif job.state == RUNNING:
            self._release(job)
        job.state = CANCELLED
        job.run_token += 1
        self._log(job_id, CANCELLED)
        self.schedule_pass()
        return "cancelled"

    def query_status(self) -> MachineStatus:
        if not self.healthy:
            assert self._frozen_status is not None
            frozen = self._frozen_status
            return MachineStatus(
                machine_id=frozen.machine_id,
                sample_time=frozen.sample_time,
                free_nodes=frozen.free_nodes,
                running=list(frozen.running),
                queued_per_class={c: list(v) for c, v in frozen.queued_per_class.items()},
                healthy=False,
            )
        return self._status_now()

    def job_state(self, job_id: str) -> str:
        job = self.jobs.get(job_id)
        if job is None:
            raise UnknownJob(f"{job_id} on {self.spec.machine_id}")
        return job.state

    def live_jobs(self) -> list[SimJob]:
        return [j for j in self.jobs.values() if j.state not in TERMINAL_STATES]

    # -- scheduler ----------------------------------------------------

    def schedule_pass(self) -> list[str]:
        """Run the queue discipline at the current instant.

        Returns the ids of jobs started by this pass (preemptions are
        visible in the event log).
        """
        if not self.healthy:
            return []
        started: list[str] = []
        # scan highest class first; a non-fitting head blocks its own
        # class only (no reservation across classes)
        for cls in reversed(self.spec.priority_classes):
            queue = self.queues[cls]
            while queue:
                head = queue[0]
                if head.nodes_requested <= self.free_nodes:
                    queue.popleft()
                    self._start(head)
                    started.append(head.job_id)
                    continue
                if cls == self.spec.priority_classes[-1] and self._try_preempt_for(head):
                    queue.popleft()
                    self._start(head)
                    started.append(head.job_id)
                    continue
                break
        return started

    def _try_preempt_for(self, job: SimJob) -> bool:
        """Free nodes for a preempt-class job by evicting the smallest
        suffix (in start order) of running normal-class jobs."""
        normal_cls = self.spec.priority_classes[0]
        victims_pool = sorted(
            (j for j in self.running.values() if j.priority_class == normal_cls),
            key=lambda j: j.start_seq)
        needed = job.nodes_requested - self.free_nodes
        suffix: list[SimJob] = []
        gain = 0
        for candidate in reversed(victims_pool):
            if gain >= needed:
                break
            suffix.append(candidate)
            gain += candidate.nodes_requested
        if gain < needed:
            return False
        # evict most-recent first; requeue preserving original start order
        # at the head of the class queue
        for victim in suffix:
            self._release(victim)
            victim.state = PREEMPTED
            victim.run_token += 1
            self._log(victim.job_id, PREEMPTED)
        for victim in sorted(suffix, key=lambda j: j.start_seq, reverse=True):
            victim.state = QUEUED
            self.queues[normal_cls].appendleft(victim)
        return True

    def _start(self, job: SimJob) -> None:
        job.state = RUNNING
        job.start_time = self.clock.now
        self._start_counter += 1
        job.start_seq = self._start_counter
        job.run_token += 1
        self.free_nodes -= job.nodes_requested
        self.running[job.job_id] = job
        self._log(job.job_id, "started")
        token = job.run_token
        self.clock.schedule(self.clock.now + job.effective_runtime,
                            lambda: self._complete(job, token))

    def _complete(self, job: SimJob, token: int) -> None:
        if job.state != RUNNING or job.run_token != token:
            return  # stale completion (job was cancelled/preempted/killed)
        self._release(job)
        job.state = COMPLETED
        self._log(job.job_id, COMPLETED)
        self.schedule_pass()

    def _release(self, job: SimJob) -> None:
        del self.running[job.job_id]
        self.free_nodes += job.nodes_requested

    def _outage(self) -> None:
        if not self.healthy:
            return
        self._frozen_status = self._status_now()
        self.healthy = False
        doomed = sorted(self.running.values(), key=lambda j: j.start_seq)
        for cls in self.spec.priority_classes:
            doomed.extend(self.queues[cls])
            self.queues[cls].clear()
        for job in doomed:
            if job.job_id in self.running:
                self._release(job)
            job.state = KILLED
            job.run_token += 1
            self._log(job.job_id, KILLED)

    def inject_failure(self, time: float) -> None:
        if time < self.clock.now:
            raise TimeReversal(f"failure at {time} before now={self.clock.now}")
        self.clock.schedule(time, self._outage)

    # -- helpers ------------------------------------------------------

    def _status_now(self) -> MachineStatus:
        running = sorted(self.running.values(), key=lambda j: j.start_seq)
        return MachineStatus(
            machine_id=self.spec.machine_id,
            sample_time=self.clock.now,
            free_nodes=self.free_nodes,
            running=[
                (j.job_id, j.nodes_requested,
                 j.start_time + j.walltime_estimate - self.clock.now,
                 j.walltime_estimate, j.priority_class)
                for j in running
            ],
            queued_per_class={
                cls: [(j.job_id, j.nodes_requested, j.walltime_estimate)
                      for j in self.queues[cls]]
                for cls in self.spec.priority_classes
            },
            healthy=True,
        )

    def _log(self, job_id: str, transition: str) -> None:
        self.log.append(LogEntry(self.clock.now, self.spec.machine_id, job_id, transition))
