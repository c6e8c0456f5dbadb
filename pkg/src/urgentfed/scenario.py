"""Scenario files: fleet + failure schedule + timed input script.

One document drives a whole run: machine blocks (one per machine),
failure entries, incidents with budgets and rule-sets, sources, and a
script of timed sensor pushes, federated requests and operator
commands. ``run_scenario`` plays it against a fresh world and returns
the world plus the emitted text logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import DocumentSyntaxError
from .federator.core import FederatorConfig
from .fleetsim.fleet import Fleet
from .fleetsim.machine import MachineSpec
from .store.log import EventStore
from .workflow.defs import DefinitionSet
from .world import World


@dataclass
class Scenario:
    machines: list[MachineSpec]
    config: FederatorConfig
    incidents: list[dict]
    sources: list[dict]
    script: list[dict]
    run_until: float | None = None
    settle: bool = True
    defs_dir: str | None = None
    registry: list[dict] | None = None


def parse_scenario(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise DocumentSyntaxError(f"bad scenario document: {err}") from None
    if not isinstance(data, dict) or "fleet" not in data:
        raise DocumentSyntaxError("scenario needs a 'fleet' section")

    failures_by_machine: dict[str, list[tuple[float, str]]] = {}
    for failure in data.get("failures", []) or []:
        failures_by_machine.setdefault(failure["machine_id"], []).append(
            (float(failure["time"]), failure.get("kind", "full_outage")))

    machines = []
    for block in data["fleet"]:
        schedule = [(float(t), k) for t, k in
                    [(f["time"], f.get("kind", "full_outage"))
                     for f in block.get("failures", []) or []]]
        schedule += failures_by_machine.get(block["machine_id"], [])
        machines.append(MachineSpec(
            machine_id=block["machine_id"],
            total_nodes=int(block["total_nodes"]),
            cores_per_node=int(block.get("cores_per_node", 1)),
            priority_classes=tuple(block.get("priority_classes",
                                             ("normal", "high", "preempt"))),
            failure_schedule=tuple(sorted(schedule)),
        ))

    fed = data.get("federator", {}) or {}
    config = FederatorConfig(
        poll_interval=float(fed.get("poll_interval", 10.0)),
        reservation_fee=float(fed.get("reservation_fee", 0.10)),
    )
    if "multipliers" in fed:
        config.multipliers = {k: float(v) for k, v in fed["multipliers"].items()}

    script = sorted(data.get("script", []) or [], key=lambda s: float(s.get("at", 0)))
    for step in script:
        kinds = [k for k in step if k != "at"]
        if len(kinds) != 1 or kinds[0] not in ("ingest", "request", "command", "cancel"):
            raise DocumentSyntaxError(f"bad script step {sorted(step)!r}")
    return Scenario(
        machines=machines, config=config,
        incidents=data.get("incidents", []) or [],
        sources=data.get("sources", []) or [],
        script=script,
        run_until=None if data.get("run_until") is None else float(data["run_until"]),
        settle=bool(data.get("settle", True)),
        defs_dir=data.get("defs_dir"),
        registry=data.get("registry"),
    )


@dataclass
class ScenarioResult:
    world: World
    fleet_log_lines: list[str] = field(default_factory=list)
    decision_lines: list[str] = field(default_factory=list)
    action_lines: list[str] = field(default_factory=list)
    telemetry_lines: list[str] = field(default_factory=list)

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fleet_events.log").write_text(
            "".join(line + "\n" for line in self.fleet_log_lines))
        (out / "decisions.log").write_text(
            "".join(line + "\n" for line in self.decision_lines))
        (out / "actions.log").write_text(
            "".join(line + "\n" for line in self.action_lines))
        (out / "telemetry.log").write_text(
            "".join(line + "\n" for line in self.telemetry_lines))


def build_world(scenario: Scenario, store: EventStore | None = None,
                data_dir: str | Path | None = None) -> World:
    fleet = Fleet(scenario.machines)
    defs = DefinitionSet.from_dir(scenario.defs_dir)
    world = World(fleet=fleet, defs=defs, config=scenario.config,
                  store=store, data_dir=data_dir, registry=scenario.registry)
    world.start()
    for incident in scenario.incidents:
        world.command(world.gateway.create_incident,
                      label=incident.get("label", incident["incident_id"]),
                      tokens=float(incident["tokens"]),
                      ruleset=incident.get("ruleset"),
                      incident_id=incident["incident_id"])
    for source in scenario.sources:
        world.command(world.gateway.register_source, source["source_id"],
                      source["incident_id"], source["content_kind"])
    return world


def play_script(world: World, scenario: Scenario) -> None:
    for step in scenario.script:
        at = float(step.get("at", world.clock.now))
        if at > world.clock.now:
            world.advance_to(at)
        if "ingest" in step:
            world.command(world.gateway.ingest, step["ingest"])
        elif "request" in step:
            req = dict(step["request"])
            deadline = req.pop("deadline", None)
            if deadline is None:
                deadline = world.clock.now + float(req.pop("deadline_offset", 3600))
            world.command(world.federator.submit_federated,
                          incident_id=req["incident_id"],
                          nodes=int(req["nodes"]), walltime=float(req["walltime"]),
                          deadline=float(deadline),
                          max_priority=req.get("max_priority", "high"),
                          speculation=int(req.get("speculation", 1)),
                          request_id=req.get("request_id"))
        elif "command" in step:
            world.command(world.gateway.operator_command, step["command"])
        elif "cancel" in step:
            world.command(world.federator.cancel_request,
                          step["cancel"]["request_id"])
        else:
            raise DocumentSyntaxError(f"unknown script step {sorted(step)!r}")


def run_scenario(scenario: Scenario, store: EventStore | None = None,
                 data_dir: str | Path | None = None) -> ScenarioResult:
    world = build_world(scenario, store=store, data_dir=data_dir)
    play_script(world, scenario)
    if scenario.run_until is not None:
        world.advance_to(scenario.run_until)
    if scenario.settle:
        world.run_until_settled()
    return ScenarioResult(
        world=world,
        fleet_log_lines=[e.line() for e in world.fleet.log.entries],
        decision_lines=list(world.federator.decision_lines),
        action_lines=list(world.engine.action_lines),
        telemetry_lines=list(world.manager.telemetry_lines),
    )
