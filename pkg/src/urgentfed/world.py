"""Wiring: one orchestrator over one simulated fleet.

The world owns the shared clock, the journal (store + state), and every
module instance; all external surfaces (HTTP API, CLI, scenario runner)
drive it through :meth:`command`, which serializes callers and flushes
zero-delay follow-up work, matching the one-command-stream concurrency
model the modules assume.
"""

from __future__ import annotations

import json
import re
import threading
from pathlib import Path

from .clock import SimClock
from .ensemble.manager import EnsembleManager
from .errors import BindingError, UnknownActivity
from .federator.core import Federator, FederatorConfig
from .fleetsim.connector import SimConnector, build_connector
from .fleetsim.fleet import Fleet
from .gateway.ingest import BlobStore, Gateway
from .state import FED_COMPLETED, FED_TERMINAL, SystemState, apply
from .store.log import EventStore
from .workflow.defs import DefinitionSet
from .workflow.engine import WorkflowEngine
from .workloads.fire import parse_grid
from .workloads.host import WorkloadHost

_SLOT = re.compile(r"^\$\(inputs\.([A-Za-z_][A-Za-z0-9_]*)\)$")


class Journal:
    """Append-then-apply funnel: the only way state changes."""

    def __init__(self, clock: SimClock, store: EventStore, state: SystemState):
        self.clock = clock
        self.store = store
        self.state = state
        self.on_event = None  # workflow engine dispatch, set by the world

    def emit(self, kind: str, body: dict):
        record = self.store.append(self.clock.now, kind, body)
        apply(self.state, record)
        return record

    def emit_event(self, kind: str, payload: dict, provenance: list) -> dict:
        event_id = self.state.peek_id("event", "evt-%06d")
        event = {"event_id": event_id, "kind": kind,
                 "timestamp": self.clock.now,
                 "payload": {k: v for k, v in payload.items() if v is not None},
                 "provenance": list(provenance)}
        self.emit("wf_event", {"event": event})
        if self.on_event is not None:
            self.on_event(event)
        return event


# -- built-in local step handlers -------------------------------------------

def _handler_parse_perimeter(world: "World", instance_id: str, inputs: dict,
                             params: dict) -> dict:
    raw_path = inputs["raw"]
    text = world.blobs.read(raw_path)
    grid = parse_grid(text)
    cells = [[x, y] for y in range(grid.height) for x in range(grid.width)
             if grid.at(x, y) == 1]
    path = world.blobs.put(f"{instance_id}.perimeter.json",
                           json.dumps(cells, sort_keys=True))
    return {"perimeter": path, "region": inputs.get("region", "unknown"),
            "cell_count": len(cells)}


LOCAL_HANDLERS = {
    "parse_perimeter": _handler_parse_perimeter,
}


class World:
    def __init__(self, fleet: Fleet | None = None, defs: DefinitionSet | None = None,
                 config: FederatorConfig | None = None,
                 store: EventStore | None = None,
                 data_dir: str | Path | None = None,
                 state: SystemState | None = None,
                 host: WorkloadHost | None = None,
                 registry: list[dict] | None = None):
        self.registry = registry
        self.fleet = fleet or Fleet([])
        self.clock = self.fleet.clock
        self.store = store or EventStore(None)
        self.state = state or SystemState()
        self.journal = Journal(self.clock, self.store, self.state)
        self.defs = defs or DefinitionSet.from_dir()
        self.blobs = BlobStore(None if data_dir is None else Path(data_dir) / "blobs")
        self.host = host or WorkloadHost(self.fleet, self.clock)
        self.federator = Federator(self.journal, config)
        self.manager = EnsembleManager(self.journal, self.federator, self.defs.templates)
        self.engine = WorkflowEngine(self.journal, self.defs, self)
        self.gateway = Gateway(self.journal, self)
        self.journal.on_event = self.engine.dispatch
        self.federator.on_request_finished = self._request_finished
        self.host.attach(self.manager, self.state, self.blobs, self.defs.grids)
        self.store.checkpoint_provider = self.state.snapshot
        self._lock = threading.RLock()
        self._started = False

    # -- lifecycle ---------------------------------------------------------

    def shutdown(self) -> None:
        """Simulated server crash/stop: polling ceases, the machine-side
        host loses its channel, the log closes. The fleet keeps running."""
        self.federator.stop()
        self.host.detach()
        self.store.close()

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        if self.state.defs_texts is None:
            self.journal.emit("defs_loaded", self.defs.texts)
        if self.registry:
            for entry in self.registry:
                self.federator.register_machine(
                    entry["machine_id"],
                    build_connector(entry["endpoint"], self.fleet),
                    endpoint=entry["endpoint"],
                    credential_label=entry.get("credential_label", ""))
        else:
            for machine_id in sorted(self.fleet.machines):
                if machine_id not in self.state.machines:
                    self.federator.register_machine(
                        machine_id, SimConnector(self.fleet, machine_id),
                        endpoint=f"sim:{machine_id}")
                else:
                    self.federator.connectors[machine_id] = SimConnector(
                        self.fleet, machine_id)
        self.federator.start()
        self.pump()

    @classmethod
    def recover(cls, store: EventStore, fleet: Fleet,
                config: FederatorConfig | None = None,
                data_dir: str | Path | None = None,
                host: WorkloadHost | None = None,
                resume: bool = True) -> "World":
        """Rebuild orchestrator state purely from the log, reattach to the
        (still running) fleet and its workload host, and resume polling.
        ``resume=False`` stops short of the first poll so the
        reconstructed state can be inspected as-of the crash."""
        state = SystemState()
        checkpoint = store.latest_checkpoint()
        from_seq = 0
        if checkpoint is not None:
            from_seq, snapshot = checkpoint
            state.restore(snapshot)
        for record in store.read(from_seq=from_seq):
            apply(state, record)
        defs = (DefinitionSet.from_texts(state.defs_texts)
                if state.defs_texts is not None else DefinitionSet.from_dir())
        world = cls(fleet=fleet, defs=defs, store=store, data_dir=data_dir,
                    state=state, config=config, host=host)
        world._started = True
        for machine_id in sorted(world.fleet.machines):
            if machine_id in state.machines:
                world.federator.connectors[machine_id] = SimConnector(fleet, machine_id)
        world.federator.rebuild_soft_state()
        if resume:
            world.federator.start()
        return world

    # -- serialized command surface ------------------------------------------

    def command(self, fn, *args, **kwargs):
        with self._lock:
            result = fn(*args, **kwargs)
            self.pump()
            return result

    def pump(self) -> None:
        self.clock.advance_to(self.clock.now)

    def advance_to(self, t: float) -> None:
        with self._lock:
            self.clock.advance_to(t)

    def advance_by(self, dt: float) -> None:
        self.advance_to(self.clock.now + dt)

    def run_until_settled(self, max_time: float = 500_000.0) -> bool:
        step = self.federator.config.poll_interval
        while True:
            with self._lock:
                if self._settled():
                    return True
                if self.clock.now >= max_time:
                    return False
                self.clock.advance_to(min(self.clock.now + step, max_time))

    def _settled(self) -> bool:
        if self.engine.queue:
            return False
        for instance in self.state.activities.values():
            if instance["state"] == "running":
                return False
        for record in self.state.requests.values():
            if record["federated_state"] not in FED_TERMINAL:
                return False
        for ens in self.state.ensembles.values():
            if ens["state"] != "stopped":
                return False
        return True

    def snapshot(self) -> dict:
        return self.state.snapshot()

    def reload_definitions(self, texts: dict) -> dict:
        """Merge new activity/rule/template/grid texts over the running
        definition set; validation happens before anything is swapped,
        and the merged set is journaled so recovery sees it too."""
        merged = {key: dict(self.defs.texts.get(key, {}))
                  for key in ("activities", "rules", "templates", "grids")}
        for key in merged:
            merged[key].update(texts.get(key, {}))
        defs = DefinitionSet.from_texts(merged)  # raises on any defect
        self.defs = defs
        self.engine.defs = defs
        self.manager.templates = defs.templates
        self.host.grids = defs.grids
        self.journal.emit("defs_loaded", merged)
        return {"activities": sorted(defs.activities),
                "rulesets": sorted(defs.rulesets),
                "templates": sorted(defs.templates)}

    def subscribe_from(self, after: int, push) -> list[dict]:
        """Atomic backlog-plus-subscription cut for stream consumers:
        no record is missed or duplicated across the boundary."""
        with self._lock:
            backlog = [dict(r) for r in self.store.read(from_seq=after)]
            self.store.subscribe(push)
        return backlog

    # -- activity execution ------------------------------------------------------

    def start_activity(self, activity_id: str, inputs: dict,
                       incident_id: str | None, region: str | None,
                       provenance: list) -> str:
        doc = self.defs.activities.get(activity_id)
        if doc is None:
            raise UnknownActivity(activity_id)
        missing = doc.required_inputs() - set(inputs)
        if missing:
            raise BindingError(
                f"mandatory input '{sorted(missing)[0]}' of {activity_id} unbound")
        instance_id = self.state.peek_id("activity", "act-%04d")
        region = inputs.get("region") if isinstance(inputs.get("region"), str) else region
        if doc.kind == "local_step":
            self.journal.emit("activity_started", {
                "instance_id": instance_id, "activity": activity_id,
                "inputs": inputs, "region": region, "incident_id": incident_id,
                "provenance": provenance})
            duration = doc.executor["duration"]
            self.clock.schedule(self.clock.now + duration,
                                lambda: self._finish_local(instance_id))
            return instance_id
        # federated job
        seed = int(instance_id.rsplit("-", 1)[1])
        workload_params = _substitute_slots(doc.executor["workload_params"], inputs)
        workload_params["workload"] = doc.executor["workload"]
        workload_params["seed"] = seed
        self.journal.emit("activity_started", {
            "instance_id": instance_id, "activity": activity_id,
            "inputs": inputs, "workload_params": workload_params,
            "region": region, "incident_id": incident_id,
            "provenance": provenance})
        try:
            request_id = self.federator.submit_federated(
                incident_id=incident_id,
                nodes=doc.executor["nodes"], walltime=doc.executor["walltime"],
                deadline=self.clock.now + doc.executor["deadline_offset"],
                max_priority=doc.executor["max_priority"],
                speculation=doc.executor["speculation"],
                origin={"kind": "activity", "instance_id": instance_id},
                payload={"kind": "activity", "instance_id": instance_id})
        except Exception:
            self.journal.emit("activity_finished", {
                "instance_id": instance_id, "state": "failed"})
            raise
        self.journal.emit("activity_request", {
            "instance_id": instance_id, "request_id": request_id})
        return instance_id

    def _finish_local(self, instance_id: str) -> None:
        instance = self.state.activities[instance_id]
        if instance["state"] != "running":
            return
        doc = self.defs.activities[instance["activity"]]
        handler = LOCAL_HANDLERS.get(doc.executor["handler"])
        if handler is None:
            self._fail_activity(instance_id, f"no handler {doc.executor['handler']!r}")
            return
        params = _substitute_slots(doc.executor["params"], instance["inputs"])
        try:
            outputs = handler(self, instance_id, instance["inputs"], params)
        except (OSError, ValueError, KeyError) as err:
            self._fail_activity(instance_id, str(err))
            return
        self._complete_activity(instance_id, outputs)

    def _complete_activity(self, instance_id: str, outputs: dict) -> None:
        instance = self.state.activities[instance_id]
        self.journal.emit("activity_finished", {
            "instance_id": instance_id, "state": "completed", "outputs": outputs})
        self.journal.emit_event("activity_completed", {
            "incident_id": instance["incident_id"],
            "activity": instance["activity"], "instance": instance_id,
            "region": instance["region"], "outputs": outputs,
        }, provenance=instance["provenance"])

    def _fail_activity(self, instance_id: str, reason: str) -> None:
        instance = self.state.activities[instance_id]
        self.journal.emit("activity_finished", {
            "instance_id": instance_id, "state": "failed"})
        self.journal.emit_event("activity_failed", {
            "incident_id": instance["incident_id"],
            "activity": instance["activity"], "instance": instance_id,
            "region": instance["region"], "reason": reason,
        }, provenance=instance["provenance"])

    # -- federated completion routing ----------------------------------------------

    def _request_finished(self, request_id: str, final_state: str) -> None:
        record = self.state.requests[request_id]
        origin = record["origin"]
        if origin.get("kind") == "activity":
            instance_id = origin["instance_id"]
            instance = self.state.activities.get(instance_id)
            if instance is None or instance["state"] != "running":
                return
            if final_state == FED_COMPLETED:
                outputs = self.host.activity_outputs(instance_id)
                self._complete_activity(instance_id, outputs)
            else:
                self._fail_activity(instance_id, f"federated job {final_state}")
        elif origin.get("kind") == "member":
            self.manager.on_member_finished(origin["member_id"], final_state)


def _substitute_slots(mapping: dict, inputs: dict) -> dict:
    out = {}
    for key, value in mapping.items():
        if isinstance(value, str):
            match = _SLOT.match(value)
            if match:
                name = match.group(1)
                if name in inputs:
                    out[key] = inputs[name]
                continue  # unbound optional input: drop the parameter
        out[key] = value
    return out
