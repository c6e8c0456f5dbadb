import pytest

from urgentfed.fleetsim.fleet import Fleet
from urgentfed.fleetsim.machine import MachineSpec
from urgentfed.workflow.defs import DefinitionSet
from urgentfed.world import World

DEFS = DefinitionSet.from_dir()


@pytest.fixture
def make_world():
    """Factory for ready-started worlds over a configurable fleet."""

    def build(machines=(("alpha", 4), ("beta", 2)), tokens=1_000_000.0,
              ruleset=None, incident_id="inc-1", defs=DEFS, config=None,
              store=None):
        fleet = Fleet([MachineSpec(machine_id=m, total_nodes=n)
                       for m, n in machines])
        world = World(fleet=fleet, defs=defs, config=config, store=store)
        world.start()
        world.command(world.gateway.create_incident, label="test",
                      tokens=tokens, ruleset=ruleset, incident_id=incident_id)
        return world

    return build


def submit(world, *, nodes=1, walltime=50.0, deadline_offset=10_000.0,
           max_priority="high", speculation=1, incident_id="inc-1", **kw):
    return world.command(
        world.federator.submit_federated, incident_id=incident_id,
        nodes=nodes, walltime=walltime,
        deadline=world.clock.now + deadline_offset,
        max_priority=max_priority, speculation=speculation, **kw)
