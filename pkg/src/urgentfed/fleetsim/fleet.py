"""A fleet of simulated machines sharing one clock and one event log."""

from __future__ import annotations

from ..clock import SimClock
from ..errors import UnknownMachine
from .machine import EventLog, LogEntry, Machine, MachineSpec, MachineStatus, SimJob


class Fleet:
    def __init__(self, specs: list[MachineSpec], clock: SimClock | None = None):
        self.clock = clock or SimClock()
        self.log = EventLog()
        self.machines: dict[str, Machine] = {}
        for spec in specs:
            self.add_machine(spec)

    def add_machine(self, spec: MachineSpec) -> Machine:
        if spec.machine_id in self.machines:
            raise ValueError(f"duplicate machine id {spec.machine_id!r}")
        machine = Machine(spec, self.clock, self.log)
        self.machines[spec.machine_id] = machine
        return machine

    def machine(self, machine_id: str) -> Machine:
        try:
            return self.machines[machine_id]
        except KeyError:
            raise UnknownMachine(machine_id) from None

    # thin pass-throughs keyed by machine id

    def submit(self, machine_id: str, job: SimJob) -> str:
        return self.machine(machine_id).submit(job)

    def cancel(self, machine_id: str, job_id: str) -> str:
        return self.machine(machine_id).cancel(job_id)

    def query_status(self, machine_id: str) -> MachineStatus:
        return self.machine(machine_id).query_status()

    def inject_failure(self, machine_id: str, time: float) -> None:
        self.machine(machine_id).inject_failure(time)

    def advance_to(self, time: float) -> list[LogEntry]:
        """Advance simulated time, returning the transitions that fired."""
        mark = len(self.log.entries)
        self.clock.advance_to(time)
        return self.log.since(mark)

    def live_job_count(self) -> int:
        return sum(len(m.live_jobs()) for m in self.machines.values())
