"""Parsing and validation of activity, rule and ensemble documents.

Activities are described one per document in a deliberately small,
closed schema (unknown fields are rejected, conditionals cannot be
smuggled into an activity); the connecting logic between activities
lives in rule documents instead. Diagnostics carry the offending field
and its line so a responder editing documents under pressure gets told
exactly where to look.

``parse -> serialize -> parse`` is the identity on valid activity
documents; golden tests rely on the canonical field order emitted by
:func:`serialize_activity`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import yaml

from ..errors import ConditionError, DocumentSchemaError, DocumentSyntaxError
from .conditions import parse_condition

IO_TYPES = ("file", "string", "number", "boolean")
EXECUTOR_KINDS = ("federated_job", "local_step")
ACTION_KINDS = ("start_activity", "update_ensemble", "spawn_ensemble",
                "stop_ensemble", "emit_event")

_SLOT = re.compile(r"\$\(inputs\.([A-Za-z_][A-Za-z0-9_]*)\)")


# ---------------------------------------------------------------------------
# location-aware YAML loading

def _load_with_locations(text: str) -> tuple[object, dict[str, int]]:
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise DocumentSyntaxError(str(getattr(err, "problem", err)),
                                  line=None if mark is None else mark.line + 1) from None
    locations: dict[str, int] = {}
    if node is not None:
        _index(node, "", locations)
    return data, locations


def _index(node, prefix: str, out: dict[str, int]) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _index(value_node, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = item.start_mark.line + 1
            _index(item, path, out)


class _Checker:
    def __init__(self, locations: dict[str, int]):
        self.locations = locations

    def fail(self, message: str, path: str):
        raise DocumentSchemaError(message, field=path, line=self.locations.get(path))

    def mapping(self, value, path: str, allowed: set[str], required: set[str]) -> dict:
        if not isinstance(value, dict):
            self.fail("expected a mapping", path)
        for key in value:
            if key not in allowed:
                self.fail("unknown field", f"{path}.{key}" if path else str(key))
        for key in required:
            if key not in value:
                self.fail(f"missing required field '{key}'", path or key)
        return value

    def string(self, value, path: str) -> str:
        if not isinstance(value, str) or not value:
            self.fail("expected a non-empty string", path)
        return value

    def number(self, value, path: str, minimum=None) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("expected a number", path)
        if minimum is not None and value < minimum:
            self.fail(f"must be >= {minimum}", path)
        return value

    def integer(self, value, path: str, minimum=None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail("expected an integer", path)
        if minimum is not None and value < minimum:
            self.fail(f"must be >= {minimum}", path)
        return value

    def listing(self, value, path: str) -> list:
        if not isinstance(value, list):
            self.fail("expected a list", path)
        return value


# ---------------------------------------------------------------------------
# activity documents

@dataclass(frozen=True)
class IoField:
    name: str
    type: str
    required: bool = True


@dataclass(frozen=True)
class ActivityDocument:
    activity_id: str
    version: str
    inputs: tuple[IoField, ...]
    outputs: tuple[IoField, ...]
    executor: dict

    @property
    def kind(self) -> str:
        return self.executor["kind"]

    def input_names(self) -> set[str]:
        return {f.name for f in self.inputs}

    def required_inputs(self) -> set[str]:
        return {f.name for f in self.inputs if f.required}


_FEDERATED_FIELDS = {"kind", "nodes", "walltime", "deadline_offset",
                     "max_priority", "speculation", "workload", "workload_params"}
_LOCAL_FIELDS = {"kind", "handler", "duration", "params"}


def parse_activity(text: str) -> ActivityDocument:
    data, locations = _load_with_locations(text)
    check = _Checker(locations)
    check.mapping(data, "", allowed={"activity", "version", "inputs", "outputs", "executor"},
                  required={"activity", "version", "executor"})
    activity_id = check.string(data["activity"], "activity")
    version = check.string(str(data["version"]), "version")
    inputs = _parse_io(check, data.get("inputs", []), "inputs", allow_required=True)
    outputs = _parse_io(check, data.get("outputs", []), "outputs", allow_required=False)
    executor = _parse_executor(check, data["executor"], {f.name for f in inputs})
    return ActivityDocument(activity_id=activity_id, version=version,
                            inputs=inputs, outputs=outputs, executor=executor)


def _parse_io(check: _Checker, raw, path: str, allow_required: bool) -> tuple[IoField, ...]:
    entries = check.listing(raw, path)
    fields: list[IoField] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        here = f"{path}[{i}]"
        allowed = {"name", "type", "required"} if allow_required else {"name", "type"}
        check.mapping(entry, here, allowed=allowed, required={"name", "type"})
        name = check.string(entry["name"], f"{here}.name")
        if name in seen:
            check.fail(f"duplicate name '{name}'", f"{here}.name")
        seen.add(name)
        io_type = check.string(entry["type"], f"{here}.type")
        if io_type not in IO_TYPES:
            check.fail(f"type must be one of {', '.join(IO_TYPES)}", f"{here}.type")
        required = entry.get("required", True)
        if not isinstance(required, bool):
            check.fail("expected true or false", f"{here}.required")
        fields.append(IoField(name=name, type=io_type, required=required))
    return tuple(fields)


def _parse_executor(check: _Checker, raw, input_names: set[str]) -> dict:
    if not isinstance(raw, dict) or "kind" not in raw:
        check.fail("executor needs a 'kind'", "executor")
    kind = raw["kind"]
    if kind == "federated_job":
        check.mapping(raw, "executor", allowed=_FEDERATED_FIELDS,
                      required={"kind", "nodes", "walltime", "deadline_offset", "workload"})
        executor = {
            "kind": kind,
            "nodes": check.integer(raw["nodes"], "executor.nodes", minimum=1),
            "walltime": check.number(raw["walltime"], "executor.walltime", minimum=1),
            "deadline_offset": check.number(raw["deadline_offset"],
                                            "executor.deadline_offset", minimum=1),
            "max_priority": check.string(raw.get("max_priority", "normal"),
                                         "executor.max_priority"),
            "speculation": check.integer(raw.get("speculation", 1),
                                         "executor.speculation", minimum=1),
            "workload": check.string(raw["workload"], "executor.workload"),
            "workload_params": raw.get("workload_params", {}) or {},
        }
    elif kind == "local_step":
        check.mapping(raw, "executor", allowed=_LOCAL_FIELDS, required={"kind", "handler"})
        executor = {
            "kind": kind,
            "handler": check.string(raw["handler"], "executor.handler"),
            "duration": check.number(raw.get("duration", 0), "executor.duration", minimum=0),
            "params": raw.get("params", {}) or {},
        }
    else:
        check.fail(f"kind must be one of {', '.join(EXECUTOR_KINDS)}", "executor.kind")
    params_key = "workload_params" if kind == "federated_job" else "params"
    if not isinstance(executor[params_key], dict):
        check.fail("expected a mapping", f"executor.{params_key}")
    for slot in _iter_slots(executor[params_key]):
        if slot not in input_names:
            check.fail(f"substitution slot names undeclared input '{slot}'",
                       f"executor.{params_key}")
    return executor


def _iter_slots(value):
    if isinstance(value, str):
        yield from _SLOT.findall(value)
    elif isinstance(value, dict):
        for v in value.values():
            yield from _iter_slots(v)
    elif isinstance(value, list):
        for v in value:
            yield from _iter_slots(v)


def serialize_activity(doc: ActivityDocument) -> str:
    """Canonical textual form (fixed field order, defaults dropped)."""
    body: dict = {"activity": doc.activity_id, "version": doc.version}
    if doc.inputs:
        body["inputs"] = [
            {"name": f.name, "type": f.type, **({} if f.required else {"required": False})}
            for f in doc.inputs]
    if doc.outputs:
        body["outputs"] = [{"name": f.name, "type": f.type} for f in doc.outputs]
    executor = {"kind": doc.executor["kind"]}
    if doc.kind == "federated_job":
        for key in ("nodes", "walltime", "deadline_offset", "max_priority",
                    "speculation", "workload"):
            executor[key] = doc.executor[key]
        if doc.executor["workload_params"]:
            executor["workload_params"] = doc.executor["workload_params"]
    else:
        executor["handler"] = doc.executor["handler"]
        if doc.executor["duration"]:
            executor["duration"] = doc.executor["duration"]
        if doc.executor["params"]:
            executor["params"] = doc.executor["params"]
    body["executor"] = executor
    return yaml.safe_dump(body, sort_keys=False, default_flow_style=False)


# ---------------------------------------------------------------------------
# rule documents

@dataclass(frozen=True)
class Action:
    kind: str
    spec: dict


@dataclass
class Rule:
    rule_id: str
    trigger_kind: str
    trigger_match: dict
    condition_text: str | None
    condition_ast: object | None
    actions: tuple[Action, ...]


_SELECTOR_KEYS = {"scope", "ensemble", "member", "param_match"}

_ACTION_SCHEMAS = {
    "start_activity": ({"activity", "bind"}, {"activity"}),
    "update_ensemble": ({"selector", "payload"}, {"selector", "payload"}),
    "spawn_ensemble": ({"template", "params", "sweep", "bind"}, {"template"}),
    "stop_ensemble": ({"selector"}, {"selector"}),
    "emit_event": ({"kind", "fields"}, {"kind"}),
}


def parse_rules(text: str) -> list[Rule]:
    data, locations = _load_with_locations(text)
    check = _Checker(locations)
    check.mapping(data, "", allowed={"rules"}, required={"rules"})
    rules: list[Rule] = []
    seen: set[str] = set()
    for i, raw in enumerate(check.listing(data["rules"], "rules")):
        here = f"rules[{i}]"
        check.mapping(raw, here, allowed={"rule", "trigger", "condition", "actions"},
                      required={"rule", "trigger", "actions"})
        rule_id = check.string(raw["rule"], f"{here}.rule")
        if rule_id in seen:
            check.fail(f"duplicate rule id '{rule_id}'", f"{here}.rule")
        seen.add(rule_id)
        trigger = check.mapping(raw["trigger"], f"{here}.trigger",
                                allowed={"kind", "match"}, required={"kind"})
        trigger_kind = check.string(trigger["kind"], f"{here}.trigger.kind")
        match = trigger.get("match", {}) or {}
        if not isinstance(match, dict):
            check.fail("expected a mapping", f"{here}.trigger.match")
        condition_text = raw.get("condition")
        condition_ast = None
        if condition_text is not None:
            condition_text = check.string(condition_text, f"{here}.condition")
            try:
                condition_ast = parse_condition(condition_text)
            except ConditionError as err:
                check.fail(f"bad condition: {err}", f"{here}.condition")
        actions = []
        for j, action_raw in enumerate(check.listing(raw["actions"], f"{here}.actions")):
            actions.append(_parse_action(check, action_raw, f"{here}.actions[{j}]"))
        rules.append(Rule(rule_id=rule_id, trigger_kind=trigger_kind,
                          trigger_match=match, condition_text=condition_text,
                          condition_ast=condition_ast, actions=tuple(actions)))
    return rules


def _parse_action(check: _Checker, raw, path: str) -> Action:
    if not isinstance(raw, dict) or len(raw) != 1:
        check.fail("an action is a single-key mapping", path)
    kind, spec = next(iter(raw.items()))
    if kind not in _ACTION_SCHEMAS:
        check.fail(f"unknown action '{kind}'", f"{path}.{kind}")
    allowed, required = _ACTION_SCHEMAS[kind]
    spec = spec or {}
    check.mapping(spec, f"{path}.{kind}", allowed=allowed, required=required)
    for sel_key in ("selector",):
        if sel_key in spec:
            selector = spec[sel_key]
            if not isinstance(selector, dict) or not selector:
                check.fail("expected a non-empty mapping", f"{path}.{kind}.selector")
            for key in selector:
                if key not in _SELECTOR_KEYS:
                    check.fail("unknown selector key", f"{path}.{kind}.selector.{key}")
    return Action(kind=kind, spec=spec)


# ---------------------------------------------------------------------------
# ensemble templates

@dataclass(frozen=True)
class EnsembleTemplate:
    name: str
    workload: str
    job: dict
    params: dict
    steerable: tuple[str, ...]
    pipeline: list = field(default_factory=list)


def parse_ensemble_template(text: str) -> EnsembleTemplate:
    data, locations = _load_with_locations(text)
    check = _Checker(locations)
    check.mapping(data, "", allowed={"ensemble", "workload", "job", "params",
                                     "steerable", "pipeline"},
                  required={"ensemble", "workload", "job"})
    job = check.mapping(data["job"], "job",
                        allowed={"nodes", "walltime", "deadline_offset",
                                 "max_priority", "speculation"},
                        required={"nodes", "walltime", "deadline_offset"})
    check.integer(job["nodes"], "job.nodes", minimum=1)
    check.number(job["walltime"], "job.walltime", minimum=1)
    steerable = data.get("steerable", []) or []
    if not isinstance(steerable, list):
        check.fail("expected a list", "steerable")
    pipeline = data.get("pipeline", []) or []
    if not isinstance(pipeline, list):
        check.fail("expected a list", "pipeline")
    return EnsembleTemplate(
        name=check.string(data["ensemble"], "ensemble"),
        workload=check.string(data["workload"], "workload"),
        job={"nodes": job["nodes"], "walltime": job["walltime"],
             "deadline_offset": job["deadline_offset"],
             "max_priority": job.get("max_priority", "normal"),
             "speculation": job.get("speculation", 1)},
        params=data.get("params", {}) or {},
        steerable=tuple(steerable),
        pipeline=pipeline,
    )
