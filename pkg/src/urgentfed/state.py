"""Orchestrator state as a pure fold over the event log.

Every mutation of federation, workflow or ensemble state happens by
applying a log record; live handlers append a record and then apply it,
recovery applies the same records again. Nothing in :func:`apply` may
touch a connector, the clock or a random generator, which is what makes
kill-and-replay reconstruct the pre-crash state bit for bit.

All values kept here are JSON-native so a snapshot is just a deep copy
and a checkpoint is just ``json.dumps``.
"""

from __future__ import annotations

import copy
import json

# federated request lifecycle
PENDING = "pending"
PLACED = "placed"
FED_RUNNING = "running"
FED_COMPLETED = "completed"
FAILED_RESCHEDULING = "failed_rescheduling"
ABANDONED = "abandoned"
FED_TERMINAL = frozenset({FED_COMPLETED, FAILED_RESCHEDULING, ABANDONED})

# placement lifecycle
P_QUEUED = "queued"
P_RUNNING = "running"
P_COMPLETED = "completed"
P_CANCELLED = "cancelled"
P_DEAD = "dead"
P_LIVE = frozenset({P_QUEUED, P_RUNNING})


class SystemState:
    def __init__(self):
        self.incidents: dict[str, dict] = {}
        self.sources: dict[str, dict] = {}
        self.machines: dict[str, dict] = {}
        self.requests: dict[str, dict] = {}
        self.activities: dict[str, dict] = {}
        self.ensembles: dict[str, dict] = {}
        self.members: dict[str, dict] = {}
        self.data: dict[str, dict] = {}          # "incident|region" -> latest data facts
        self.alerts: list[dict] = []
        self.counters: dict[str, int] = {}
        self.defs_texts: dict | None = None

    # -- id allocation (handlers read, apply() advances) ---------------

    def peek_id(self, kind: str, fmt: str) -> str:
        return fmt % (self.counters.get(kind, 0) + 1)

    def _bump(self, kind: str, minimum: int) -> None:
        if self.counters.get(kind, 0) < minimum:
            self.counters[kind] = minimum

    # -- views ----------------------------------------------------------

    def budget(self, incident_id: str) -> dict:
        return self.incidents[incident_id]["tokens"]

    def available_tokens(self, incident_id: str) -> float:
        tokens = self.budget(incident_id)
        return tokens["initial"] - tokens["spent"]

    def live_placements(self, request_id: str) -> list[tuple[int, dict]]:
        record = self.requests[request_id]
        return [(i, p) for i, p in enumerate(record["placements"])
                if p["state"] in P_LIVE]

    def placements_on(self, machine_id: str) -> list[tuple[str, int, dict]]:
        out = []
        for request_id, record in self.requests.items():
            if record["federated_state"] in FED_TERMINAL:
                continue
            for i, placement in enumerate(record["placements"]):
                if placement["machine_id"] == machine_id and placement["state"] in P_LIVE:
                    out.append((request_id, i, placement))
        return out

    def active_ensembles(self, incident_id: str, region: str | None = None) -> list[str]:
        found = []
        for ensemble_id, ens in self.ensembles.items():
            if ens["incident_id"] != incident_id or ens["state"] != "active":
                continue
            if region is not None and ens.get("region") not in (None, region):
                continue
            found.append(ensemble_id)
        return found

    def live_members(self, ensemble_id: str) -> list[str]:
        ens = self.ensembles[ensemble_id]
        return [m for m in ens["members"] if self.members[m]["state"] == "live"]

    def data_key(self, incident_id: str, region: str | None) -> str:
        return f"{incident_id}|{region or ''}"

    # -- snapshotting ----------------------------------------------------

    def snapshot(self) -> dict:
        return copy.deepcopy({
            "incidents": self.incidents,
            "sources": self.sources,
            "machines": self.machines,
            "requests": self.requests,
            "activities": self.activities,
            "ensembles": self.ensembles,
            "members": self.members,
            "data": self.data,
            "alerts": self.alerts,
            "counters": self.counters,
            "defs_texts": self.defs_texts,
        })

    def restore(self, snapshot: dict) -> None:
        snapshot = copy.deepcopy(snapshot)
        self.incidents = snapshot["incidents"]
        self.sources = snapshot["sources"]
        self.machines = snapshot["machines"]
        self.requests = snapshot["requests"]
        self.activities = snapshot["activities"]
        self.ensembles = snapshot["ensembles"]
        self.members = snapshot["members"]
        self.data = snapshot["data"]
        self.alerts = snapshot["alerts"]
        self.counters = snapshot["counters"]
        self.defs_texts = snapshot["defs_texts"]

    def canonical(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)


# ---------------------------------------------------------------------------
# record application

def apply(state: SystemState, record: dict) -> None:
    handler = _HANDLERS.get(record["kind"])
    if handler is not None:
        handler(state, record["t"], record["body"])


def _defs_loaded(state, t, body):
    state.defs_texts = body


def _machine_registered(state, t, body):
    state.machines[body["machine_id"]] = {
        "endpoint": body["endpoint"],
        "credential_label": body.get("credential_label", ""),
        "health": "healthy",
        "suspect_count": 0,
        "last_status": None,
    }


def _machine_marked(state, t, body):
    machine = state.machines[body["machine_id"]]
    machine["health"] = body["health"]
    machine["suspect_count"] = body.get("suspect_count", 0)


def _poll_observed(state, t, body):
    machine = state.machines[body["machine_id"]]
    machine["last_status"] = body["summary"]
    machine["health"] = "healthy"
    machine["suspect_count"] = 0


def _incident_created(state, t, body):
    incident_id = body["incident_id"]
    tail = incident_id.rsplit("-", 1)
    if len(tail) == 2 and tail[1].isdigit():
        state._bump("incident", int(tail[1]))
    state.incidents[incident_id] = {
        "label": body["label"],
        "ruleset": body.get("ruleset"),
        "active": True,
        "tokens": {"initial": body["tokens"], "spent": 0},
        "created_at": t,
    }


def _source_registered(state, t, body):
    state.sources[body["source_id"]] = {
        "incident_id": body["incident_id"],
        "content_kind": body["content_kind"],
        "seen": [],
    }


def _envelope_accepted(state, t, body):
    seen = state.sources[body["source_id"]]["seen"]
    if body["sequence_number"] not in seen:
        seen.append(body["sequence_number"])


def _wf_event(state, t, body):
    event = body["event"]
    num = int(event["event_id"].rsplit("-", 1)[1])
    state._bump("event", num)
    payload = event.get("payload", {})
    if event["kind"] == "sensor_data_arrived":
        key = state.data_key(payload["incident_id"], payload.get("region"))
        facts = state.data.setdefault(key, {})
        facts["last_arrival"] = event["timestamp"]
        if payload.get("content_kind") == "weather_obs" and "data_file" in payload:
            facts["last_obs_file"] = payload["data_file"]
        if payload.get("content_kind") == "fire_perimeter" and "data_file" in payload:
            facts["last_perimeter_file"] = payload["data_file"]


def _request_submitted(state, t, body):
    request_id = body["request_id"]
    if request_id not in state.requests:
        num_match = request_id.rsplit("-", 1)
        if len(num_match) == 2 and num_match[1].isdigit():
            state._bump("request", int(num_match[1]))
        state.requests[request_id] = {
            "incident_id": body["incident_id"],
            "origin": body.get("origin", {"kind": "external"}),
            "nodes": body["nodes"],
            "walltime": body["walltime"],
            "deadline": body["deadline"],
            "max_priority": body["max_priority"],
            "speculation": body["speculation"],
            "submitted_at": t,
            "placements": [],
            "chosen_placement": None,
            "federated_state": PENDING,
            "at_risk": bool(body.get("at_risk")),
            "alerted_deadline": False,
        }
    record = state.requests[request_id]
    record["at_risk"] = bool(body.get("at_risk", record["at_risk"]))
    for placement in body["placements"]:
        record["placements"].append({
            "machine_id": placement["machine_id"],
            "machine_job_id": placement["machine_job_id"],
            "priority_class": placement["priority_class"],
            "debit": placement["debit"],
            "state": P_QUEUED,
        })
    if record["placements"] and record["federated_state"] == PENDING:
        record["federated_state"] = PLACED


def _placement_changed(state, t, body):
    record = state.requests[body["request_id"]]
    placement = record["placements"][body["index"]]
    placement["state"] = body["state"]
    if body.get("note"):
        placement["note"] = body["note"]


def _request_state(state, t, body):
    record = state.requests[body["request_id"]]
    record["federated_state"] = body["federated_state"]
    if "chosen_placement" in body:
        record["chosen_placement"] = body["chosen_placement"]
    if body.get("alerted_deadline"):
        record["alerted_deadline"] = True


def _tokens_changed(state, t, body):
    tokens = state.budget(body["incident_id"])
    tokens["spent"] += body["delta"]


def _activity_started(state, t, body):
    instance_id = body["instance_id"]
    state._bump("activity", int(instance_id.rsplit("-", 1)[1]))
    state.activities[instance_id] = {
        "activity": body["activity"],
        "state": "running",
        "inputs": body["inputs"],
        "workload_params": body.get("workload_params"),
        "region": body.get("region"),
        "incident_id": body["incident_id"],
        "request_id": body.get("request_id"),
        "provenance": body["provenance"],
        "started_at": t,
        "outputs": None,
    }


def _activity_request(state, t, body):
    state.activities[body["instance_id"]]["request_id"] = body["request_id"]


def _activity_finished(state, t, body):
    instance = state.activities[body["instance_id"]]
    instance["state"] = body["state"]
    instance["outputs"] = body.get("outputs")


def _ensemble_spawned(state, t, body):
    ensemble_id = body["ensemble_id"]
    state._bump("ensemble", int(ensemble_id.rsplit("-", 1)[1]))
    state.ensembles[ensemble_id] = {
        "incident_id": body["incident_id"],
        "region": body.get("region"),
        "template": body["template"],
        "params": body["params"],
        "steerable": body["steerable"],
        "pipeline": body["pipeline"],
        "workload": body["workload"],
        "job": body["job"],
        "state": "active",
        "members": [],
        "provenance": body.get("provenance", []),
        "spawned_at": t,
    }


def _member_added(state, t, body):
    member_id = body["member_id"]
    ensemble = state.ensembles[body["ensemble_id"]]
    ensemble["members"].append(member_id)
    state.members[member_id] = {
        "ensemble_id": body["ensemble_id"],
        "request_id": body["request_id"],
        "params": body["params"],
        "seed": body["seed"],
        "state": "live",
        "last_frame_seq": 0,
        "last_frame": None,
        "outbox": [],
        "applied_messages": [],
        "dropped_frames": 0,
    }


def _ensemble_state(state, t, body):
    state.ensembles[body["ensemble_id"]]["state"] = body["state"]


def _member_state(state, t, body):
    state.members[body["member_id"]]["state"] = body["state"]


def _steering_issued(state, t, body):
    state._bump("message", int(body["message_id"].rsplit("-", 1)[1]))
    for member_id in body["targets"]:
        state.members[member_id]["outbox"].append({
            "message_id": body["message_id"],
            "payload": body["payload"],
            "issued_at": t,
            "provenance": body.get("provenance", []),
            "state": "pending",
        })


def _steering_applied(state, t, body):
    member = state.members[body["member_id"]]
    if body["message_id"] in member["applied_messages"]:
        return
    member["applied_messages"].append(body["message_id"])
    for entry in member["outbox"]:
        if entry["message_id"] == body["message_id"]:
            entry["state"] = "applied"
            entry["applied_at_step"] = body["step"]
    member["params"] = {**member["params"], **body["effective_params"]}


def _frame_reduced(state, t, body):
    member = state.members[body["member_id"]]
    if body["seq"] > member["last_frame_seq"]:
        member["last_frame_seq"] = body["seq"]
        member["last_frame"] = {"seq": body["seq"], "sim_time": body["sim_time"],
                                "outputs": body["outputs"]}


def _frame_dropped(state, t, body):
    if body["member_id"] in state.members:
        state.members[body["member_id"]]["dropped_frames"] += 1


def _alert(state, t, body):
    state.alerts.append({"at": t, "kind": body["alert_kind"],
                         "details": body.get("details", {}), "acked": False})


def _alert_acked(state, t, body):
    index = body["index"]
    if 0 <= index < len(state.alerts):
        state.alerts[index]["acked"] = True


_HANDLERS = {
    "defs_loaded": _defs_loaded,
    "machine_registered": _machine_registered,
    "machine_marked": _machine_marked,
    "poll_observed": _poll_observed,
    "incident_created": _incident_created,
    "source_registered": _source_registered,
    "envelope_accepted": _envelope_accepted,
    "wf_event": _wf_event,
    "request_submitted": _request_submitted,
    "placement_changed": _placement_changed,
    "request_state": _request_state,
    "tokens_changed": _tokens_changed,
    "activity_started": _activity_started,
    "activity_request": _activity_request,
    "activity_finished": _activity_finished,
    "ensemble_spawned": _ensemble_spawned,
    "member_added": _member_added,
    "ensemble_state": _ensemble_state,
    "member_state": _member_state,
    "steering_issued": _steering_issued,
    "steering_applied": _steering_applied,
    "frame_reduced": _frame_reduced,
    "frame_dropped": _frame_dropped,
    "alert": _alert,
    "alert_acked": _alert_acked,
    # rule_fired and telemetry-only kinds carry no state
}
