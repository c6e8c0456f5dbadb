"""Event-driven rule engine: the connective tissue between activities.

Events are processed strictly one at a time from an ordered queue.  For
each event every rule of the owning incident's rule-set is matched and
its condition evaluated against one shared state snapshot (no rule sees
another's effects from the same event); the matching rules then fire
their actions in registration order, action order.  Actions are
dispatched as commands to the federator / ensemble manager, never
executed against the snapshot.

Binding templates reference the snapshot with ``$(root.path)`` where
root is one of ``event``, ``ensemble``, ``incident``, ``fleet`` or
``data``; ``$(load:root.path)`` additionally reads the referenced blob
and parses it as JSON (how file outputs flow into parameter values).
"""

from __future__ import annotations

import json
from collections import deque

from ..clock import fmt_time
from ..errors import (
    BindingError, InsufficientTokens, InvalidSweep, MissingField,
    NoHealthyMachines, NotSteerable, UnknownTarget, UrgentFedError,
)
from .conditions import evaluate
from .defs import DefinitionSet

_MISSING = object()


class WorkflowEngine:
    def __init__(self, journal, defs: DefinitionSet, world):
        self.journal = journal
        self.defs = defs
        self.world = world
        self.queue: deque = deque()
        self._draining = False
        self.action_lines: list[str] = []

    # -- event intake ------------------------------------------------------

    def dispatch(self, event: dict) -> None:
        self.queue.append(event)
        if self._draining:
            return
        self._draining = True
        try:
            while self.queue:
                self._process(self.queue.popleft())
        finally:
            self._draining = False

    # -- per-event processing ------------------------------------------------

    def _process(self, event: dict) -> None:
        rules = self._rules_for(event)
        if not rules:
            return
        view = self._build_view(event)
        fired = []
        for rule in rules:
            if rule.trigger_kind != event["kind"]:
                continue
            payload = event["payload"]
            if any(payload.get(k) != v for k, v in rule.trigger_match.items()):
                continue
            passed = True
            if rule.condition_ast is not None:
                try:
                    passed = evaluate(rule.condition_ast, view)
                except MissingField as err:
                    passed = False
                    self.journal.emit_event("rule_warning", {
                        "incident_id": payload.get("incident_id"),
                        "rule_id": rule.rule_id, "missing": str(err),
                        "condition": rule.condition_text,
                    }, provenance=_chain(event))
            if passed:
                fired.append(rule)
        for rule in fired:
            self.journal.emit("rule_fired", {
                "event_id": event["event_id"], "rule_id": rule.rule_id,
                "actions": [a.kind for a in rule.actions]})
            for action in rule.actions:
                self._execute(rule, action, event, view)

    def _rules_for(self, event: dict):
        incident_id = event["payload"].get("incident_id")
        state = self.journal.state
        if incident_id is None or incident_id not in state.incidents:
            return []
        ruleset = state.incidents[incident_id]["ruleset"]
        return self.defs.rulesets.get(ruleset, [])

    def _build_view(self, event: dict) -> dict:
        state = self.journal.state
        payload = event["payload"]
        incident_id = payload.get("incident_id")
        region = payload.get("region")
        active = state.active_ensembles(incident_id, region) if incident_id else []
        members = sum(len(state.live_members(e)) for e in active)
        incident = state.incidents.get(incident_id)
        return {
            "event": {**payload, "kind": event["kind"]},
            "ensemble": {"active": bool(active), "count": len(active),
                         "members": members},
            "incident": {"active": bool(incident and incident["active"])},
            "fleet": {"healthy_machines": sum(
                1 for m in state.machines.values() if m["health"] == "healthy")},
            "data": dict(state.data.get(state.data_key(incident_id, region), {}))
            if incident_id else {},
        }

    # -- action execution -------------------------------------------------------

    def _execute(self, rule, action, event: dict, view: dict) -> None:
        try:
            resolved = self._run_action(action, event, view)
        except (BindingError, UnknownTarget, NotSteerable, InsufficientTokens,
                NoHealthyMachines, InvalidSweep) as err:
            self.journal.emit_event("action_failed", {
                "incident_id": event["payload"].get("incident_id"),
                "rule_id": rule.rule_id, "action": action.kind,
                "reason": type(err).__name__, "detail": str(err),
            }, provenance=_chain(event))
            return
        self.action_lines.append("\t".join([
            fmt_time(self.journal.clock.now), event["event_id"], rule.rule_id,
            action.kind, json.dumps(resolved, sort_keys=True)]))

    def _run_action(self, action, event: dict, view: dict) -> dict:
        payload = event["payload"]
        incident_id = payload.get("incident_id")
        region = payload.get("region")
        provenance = _chain(event)
        spec = action.spec
        if action.kind == "start_activity":
            inputs = self._bind_inputs(spec["activity"], spec.get("bind", {}), view)
            instance_id = self.world.start_activity(
                spec["activity"], inputs, incident_id, region, provenance)
            return {"activity": spec["activity"], "instance": instance_id,
                    "inputs": inputs}
        if action.kind == "update_ensemble":
            steering = self._resolve_map(spec["payload"], view, strict=True)
            result = self.world.manager.steer(
                spec["selector"], steering, incident_id=incident_id,
                region=region, provenance=provenance)
            return {"selector": spec["selector"], "payload": steering,
                    "targets": result["targets"]}
        if action.kind == "spawn_ensemble":
            params = self._resolve_map(spec.get("params", {}), view, strict=True)
            params.update(self._resolve_map(spec.get("bind", {}), view, strict=False))
            sweep = spec.get("sweep", {})
            ensemble_id = self.world.manager.spawn_ensemble(
                spec["template"], incident_id, region=region,
                overrides=params, sweep=sweep, provenance=provenance)
            return {"template": spec["template"], "ensemble": ensemble_id,
                    "params": params, "sweep": sweep}
        if action.kind == "stop_ensemble":
            ensembles = self.world.manager.ensembles_for(
                spec["selector"], incident_id=incident_id, region=region)
            stopped = []
            for ensemble_id in ensembles:
                stopped.extend(self.world.manager.stop_ensemble(ensemble_id))
            return {"selector": spec["selector"], "stopped": stopped}
        if action.kind == "emit_event":
            fields = self._resolve_map(spec.get("fields", {}), view, strict=False)
            fields.setdefault("incident_id", incident_id)
            if region is not None:
                fields.setdefault("region", region)
            self.journal.emit_event(spec["kind"], fields, provenance=provenance)
            return {"kind": spec["kind"], "fields": fields}
        raise UrgentFedError(f"unhandled action kind {action.kind}")

    # -- binding -------------------------------------------------------------------

    def _bind_inputs(self, activity_id: str, bind: dict, view: dict) -> dict:
        doc = self.defs.activities[activity_id]
        declared = {f.name: f for f in doc.inputs}
        inputs = {}
        for name, template in bind.items():
            if name not in declared:
                raise BindingError(f"'{name}' is not an input of {activity_id}")
            value = self._resolve(template, view)
            if value is not _MISSING:
                inputs[name] = value
        for name in doc.required_inputs():
            if name not in inputs:
                raise BindingError(f"mandatory input '{name}' of {activity_id} unbound")
        return inputs

    def _resolve_map(self, mapping: dict, view: dict, strict: bool) -> dict:
        out = {}
        for key, template in mapping.items():
            value = self._resolve(template, view)
            if value is _MISSING:
                if strict:
                    raise BindingError(f"'{template}' resolves to nothing")
                continue
            out[key] = value
        return out

    def _resolve(self, template, view: dict):
        if isinstance(template, str) and template.startswith("$(") and template.endswith(")"):
            inner = template[2:-1]
            load = inner.startswith("load:")
            if load:
                inner = inner[5:]
            value: object = view
            for part in inner.split("."):
                if not isinstance(value, dict) or part not in value:
                    return _MISSING
                value = value[part]
            if load:
                if not isinstance(value, str):
                    raise BindingError(f"load target {inner!r} is not a path")
                try:
                    value = json.loads(self.world.blobs.read(value))
                except (OSError, json.JSONDecodeError) as err:
                    raise BindingError(f"cannot load {value!r}: {err}") from None
            return value
        if isinstance(template, dict):
            return {k: self._resolve(v, view) for k, v in template.items()}
        if isinstance(template, list):
            return [self._resolve(v, view) for v in template]
        return template


def _chain(event: dict) -> list:
    return list(event.get("provenance", [])) + [event["event_id"]]
