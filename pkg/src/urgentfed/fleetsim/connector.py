"""Machine connector: the surface the federator drives machines through.

The federator never touches :class:`Machine` internals; it speaks to
each machine via this small interface so a real scheduler adapter could
be dropped in later.  The simulated connector models network loss: a
machine suffering a full outage stops answering entirely, it does not
report itself unhealthy.
"""

from __future__ import annotations

from typing import Protocol

from ..errors import ConnectionLost
from .fleet import Fleet
from .machine import MachineStatus, SimJob


class MachineConnector(Protocol):
    machine_id: str

    def submit(self, job: SimJob) -> str: ...

    def cancel(self, job_id: str) -> str: ...

    def status(self) -> MachineStatus: ...

    def job_state(self, job_id: str) -> str: ...


class SimConnector:
    """Connector onto one simulated machine, unreachable while down."""

    def __init__(self, fleet: Fleet, machine_id: str):
        self.fleet = fleet
        self.machine_id = machine_id

    def _machine(self):
        machine = self.fleet.machine(self.machine_id)
        if not machine.healthy:
            raise ConnectionLost(self.machine_id)
        return machine

    def submit(self, job: SimJob) -> str:
        return self._machine().submit(job)

    def cancel(self, job_id: str) -> str:
        return self._machine().cancel(job_id)

    def status(self) -> MachineStatus:
        return self._machine().query_status()

    def job_state(self, job_id: str) -> str:
        return self._machine().job_state(job_id)


def build_connector(endpoint: str, fleet: Fleet | None) -> MachineConnector:
    """Resolve a registry endpoint string to a live connector.

    Only the ``sim:`` scheme is implemented; the registry format leaves
    room for real scheduler adapters.
    """
    scheme, _, rest = endpoint.partition(":")
    if scheme == "sim":
        if fleet is None:
            raise ValueError("sim endpoint requires a fleet")
        return SimConnector(fleet, rest)
    raise ValueError(f"unsupported connector endpoint {endpoint!r}")
