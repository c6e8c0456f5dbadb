"""The federation brain: one logical state machine over many machines.

Polls every registered machine on a fixed simulated interval, keeps a
status cache, places jobs via the escalation ladder, debits tokens,
tracks every placement, cancels losing speculative siblings, and
resubmits work away from machines declared failed (two missed polls).
All effects are emitted as journal records, so the whole thing recovers
from its own log.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Callable

from ..clock import fmt_time
from ..errors import (
    ConnectionLost, InfeasibleRequest, InsufficientTokens, MachineDown,
    NoHealthyMachines, UnknownJob, UnknownRequest,
)
from ..fleetsim.machine import MachineStatus, SimJob
from ..state import (
    ABANDONED, FAILED_RESCHEDULING, FED_COMPLETED, FED_RUNNING, FED_TERMINAL,
    P_CANCELLED, P_COMPLETED, P_DEAD, P_LIVE, P_QUEUED, P_RUNNING, PLACED,
)
from .selection import DEFAULT_MULTIPLIERS, placement_cost, select_placement


@dataclass
class FederatorConfig:
    poll_interval: float = 10.0
    reservation_fee: float = 0.10
    multipliers: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MULTIPLIERS))
    priority_classes: tuple[str, ...] = ("normal", "high", "preempt")


class Federator:
    def __init__(self, journal, config: FederatorConfig | None = None):
        self.journal = journal
        self.config = config or FederatorConfig()
        self.connectors: dict[str, object] = {}
        self.status_cache: dict[str, MachineStatus] = {}
        self.decision_lines: list[str] = []
        self._deadline_alerted: set[str] = set()
        self._started = False
        self._stopped = False
        # wired by the world
        self.on_request_finished: Callable[[str, str], None] | None = None

    # -- registry -------------------------------------------------------

    def register_machine(self, machine_id: str, connector, endpoint: str = "",
                         credential_label: str = "") -> None:
        self.connectors[machine_id] = connector
        self.journal.emit("machine_registered", {
            "machine_id": machine_id,
            "endpoint": endpoint or getattr(connector, "endpoint", f"sim:{machine_id}"),
            "credential_label": credential_label,
        })
        try:
            self.status_cache[machine_id] = connector.status()
        except ConnectionLost:
            pass

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self._poll_tick()

    # -- polling ---------------------------------------------------------

    def stop(self) -> None:
        """Server crash/shutdown: cease polling (pending ticks no-op)."""
        self._stopped = True

    def _poll_tick(self) -> None:
        if self._stopped:
            return
        self.poll_fleet()
        self.journal.clock.schedule_in(self.config.poll_interval, self._poll_tick)

    def poll_fleet(self) -> None:
        state = self.journal.state
        for machine_id in sorted(self.connectors):
            machine = state.machines[machine_id]
            if machine["health"] == "failed":
                continue
            try:
                status = self.connectors[machine_id].status()
            except ConnectionLost:
                count = machine["suspect_count"] + 1
                if count >= 2:
                    self.journal.emit("machine_marked", {
                        "machine_id": machine_id, "health": "failed",
                        "suspect_count": count})
                    self._decision(None, "machine_failed", {"machine_id": machine_id})
                    self.handle_machine_failure(machine_id)
                else:
                    self.journal.emit("machine_marked", {
                        "machine_id": machine_id, "health": "suspect",
                        "suspect_count": count})
                continue
            self.status_cache[machine_id] = status
            self.journal.emit("poll_observed", {
                "machine_id": machine_id,
                "summary": _summarize(status),
            })
            self._reconcile(machine_id, status)
        self._check_deadlines()

    def _reconcile(self, machine_id: str, status: MachineStatus) -> None:
        state = self.journal.state
        running = {entry[0] for entry in status.running}
        queued = {entry[0] for entries in status.queued_per_class.values()
                  for entry in entries}
        for request_id, index, placement in state.placements_on(machine_id):
            job_id = placement["machine_job_id"]
            if job_id in running:
                if placement["state"] != P_RUNNING:
                    self._placement(request_id, index, P_RUNNING)
                    self._on_placement_started(request_id, index)
            elif job_id in queued:
                if placement["state"] != P_QUEUED:
                    self._placement(request_id, index, P_QUEUED)
                    self._refresh_request_state(request_id)
            else:
                try:
                    job_state = self.connectors[machine_id].job_state(job_id)
                except (ConnectionLost, UnknownJob):
                    continue
                if job_state == "completed":
                    self._on_placement_completed(request_id, index)
                elif job_state == "cancelled":
                    self._close_placement(request_id, index, P_CANCELLED)
                    self._refresh_request_state(request_id)
                elif job_state == "killed_by_failure":
                    self._close_placement(request_id, index, P_DEAD)
                    self._refresh_request_state(request_id)

    def _on_placement_started(self, request_id: str, index: int) -> None:
        state = self.journal.state
        record = state.requests[request_id]
        if record["chosen_placement"] is None:
            self.journal.emit("request_state", {
                "request_id": request_id, "federated_state": FED_RUNNING,
                "chosen_placement": index})
            self._decision(request_id, "winner", {
                "placement": index,
                "machine_id": record["placements"][index]["machine_id"]})
            self._cancel_siblings(request_id, keep=index)
        elif record["chosen_placement"] != index:
            # lost the race after the winner was already chosen
            self._cancel_placement(request_id, index)
        else:
            self.journal.emit("request_state", {
                "request_id": request_id, "federated_state": FED_RUNNING,
                "chosen_placement": index})

    def _on_placement_completed(self, request_id: str, index: int) -> None:
        state = self.journal.state
        record = state.requests[request_id]
        if record["federated_state"] == FED_COMPLETED:
            # a sibling already completed; record the duplicate as dead
            self._placement(request_id, index, P_DEAD, note="duplicate_completion")
            self._alert("duplicate_completion", {"request_id": request_id, "placement": index})
            return
        self._placement(request_id, index, P_COMPLETED)
        self.journal.emit("request_state", {
            "request_id": request_id, "federated_state": FED_COMPLETED,
            "chosen_placement": index})
        self._decision(request_id, "completed", {
            "machine_id": record["placements"][index]["machine_id"]})
        self._cancel_siblings(request_id, keep=index)
        if self.on_request_finished is not None:
            self.on_request_finished(request_id, FED_COMPLETED)

    def _cancel_siblings(self, request_id: str, keep: int) -> None:
        state = self.journal.state
        for index, placement in state.live_placements(request_id):
            if index == keep:
                continue
            self._cancel_placement(request_id, index)

    def _cancel_placement(self, request_id: str, index: int) -> None:
        state = self.journal.state
        placement = state.requests[request_id]["placements"][index]
        try:
            self.connectors[placement["machine_id"]].cancel(placement["machine_job_id"])
        except (ConnectionLost, MachineDown, UnknownJob):
            pass
        self._close_placement(request_id, index, P_CANCELLED)

    def _close_placement(self, request_id: str, index: int, new_state: str,
                         note: str | None = None) -> None:
        """Terminal, non-completed placements refund their debit minus
        the reservation fee."""
        state = self.journal.state
        record = state.requests[request_id]
        placement = record["placements"][index]
        if placement["state"] not in P_LIVE:
            return
        self._placement(request_id, index, new_state, note=note)
        refund = placement["debit"] * (1.0 - self.config.reservation_fee)
        self.journal.emit("tokens_changed", {
            "incident_id": record["incident_id"], "delta": -refund,
            "reason": f"refund_{new_state}", "request_id": request_id,
            "placement": index})

    def _placement(self, request_id: str, index: int, new_state: str,
                   note: str | None = None) -> None:
        body = {"request_id": request_id, "index": index, "state": new_state}
        if note:
            body["note"] = note
        self.journal.emit("placement_changed", body)

    def _refresh_request_state(self, request_id: str) -> None:
        state = self.journal.state
        record = state.requests[request_id]
        if record["federated_state"] in FED_TERMINAL:
            return
        states = {p["state"] for p in record["placements"]}
        if P_RUNNING in states:
            wanted = FED_RUNNING
        elif P_QUEUED in states:
            wanted = PLACED
        else:
            return  # resolved elsewhere (failure handling / completion)
        if record["federated_state"] != wanted:
            self.journal.emit("request_state", {
                "request_id": request_id, "federated_state": wanted})

    def _check_deadlines(self) -> None:
        state = self.journal.state
        now = self.journal.clock.now
        for request_id, record in state.requests.items():
            if record["federated_state"] in FED_TERMINAL:
                continue
            if record["deadline"] < now and request_id not in self._deadline_alerted:
                self._deadline_alerted.add(request_id)
                self._alert("deadline_missed", {"request_id": request_id,
                                                "deadline": record["deadline"]})

    # -- submission --------------------------------------------------------

    def submit_federated(self, *, incident_id: str, nodes: int, walltime: float,
                         deadline: float, max_priority: str = "high",
                         speculation: int = 1, request_id: str | None = None,
                         origin: dict | None = None,
                         payload: dict | None = None) -> str:
        state = self.journal.state
        now = self.journal.clock.now
        if deadline <= now:
            raise ValueError(f"deadline {deadline} not after submission time {now}")
        if not 1 <= speculation <= max(1, len(self.connectors)):
            raise ValueError(f"speculation factor {speculation} outside 1..{len(self.connectors)}")
        if request_id is None:
            request_id = state.peek_id("request", "req-%04d")
        if request_id in state.requests:
            raise ValueError(f"duplicate request id {request_id!r}")

        choice = self._select(nodes, walltime, deadline, max_priority, speculation)
        costs = [placement_cost(nodes, walltime, choice.priority_class,
                                self.config.multipliers)] * len(choice.machines)
        if sum(costs) > state.available_tokens(incident_id):
            raise InsufficientTokens(
                f"{request_id} needs {sum(costs)}, incident {incident_id} has "
                f"{state.available_tokens(incident_id)}")

        placements = self._submit_placements(
            request_id, incident_id, nodes, walltime, choice, payload, start_ordinal=0)
        if not placements:
            raise NoHealthyMachines(f"no machine accepted {request_id}")
        self.journal.emit("request_submitted", {
            "request_id": request_id, "incident_id": incident_id,
            "origin": origin or {"kind": "external"},
            "nodes": nodes, "walltime": walltime, "deadline": deadline,
            "max_priority": max_priority, "speculation": speculation,
            "at_risk": choice.at_risk, "placements": placements,
            "predictions": [_pred_dict(p) for p in choice.predictions],
        })
        for index, placement in enumerate(placements):
            self.journal.emit("tokens_changed", {
                "incident_id": incident_id, "delta": placement["debit"],
                "reason": "debit_placement", "request_id": request_id,
                "placement": index})
        self._decision(request_id, "submitted", {
            "placements": [(p["machine_id"], p["priority_class"]) for p in placements],
            "predictions": [_pred_dict(p) for p in choice.predictions],
            "at_risk": choice.at_risk})
        if choice.at_risk:
            self._alert("deadline_at_risk", {
                "request_id": request_id, "deadline": deadline,
                "fastest_completion": choice.predictions[0].predicted_completion})
        return request_id

    def _select(self, nodes, walltime, deadline, max_priority, k):
        state = self.journal.state
        statuses = [self.status_cache[m] for m in sorted(self.connectors)
                    if state.machines[m]["health"] == "healthy"
                    and m in self.status_cache]
        return select_placement(nodes, walltime, deadline, max_priority, k,
                                statuses, self.config.priority_classes)

    def _submit_placements(self, request_id, incident_id, nodes, walltime,
                           choice, payload, start_ordinal: int) -> list[dict]:
        placements = []
        ordinal = start_ordinal
        for machine_id in choice.machines:
            machine_job_id = f"{request_id}.p{ordinal}"
            job = SimJob(job_id=machine_job_id, nodes_requested=nodes,
                         walltime_estimate=walltime, actual_runtime=walltime,
                         priority_class=choice.priority_class,
                         payload=dict(payload) if payload else None)
            try:
                self.connectors[machine_id].submit(job)
            except (ConnectionLost, MachineDown, InfeasibleRequest):
                continue
            placements.append({
                "machine_id": machine_id, "machine_job_id": machine_job_id,
                "priority_class": choice.priority_class,
                "debit": placement_cost(nodes, walltime, choice.priority_class,
                                        self.config.multipliers),
            })
            ordinal += 1
        return placements

    # -- cancellation and failure -------------------------------------------

    def cancel_request(self, request_id: str) -> str:
        state = self.journal.state
        if request_id not in state.requests:
            raise UnknownRequest(request_id)
        record = state.requests[request_id]
        if record["federated_state"] in FED_TERMINAL:
            return "already_terminal"
        for index, _ in state.live_placements(request_id):
            self._cancel_placement(request_id, index)
        self.journal.emit("request_state", {
            "request_id": request_id, "federated_state": ABANDONED})
        self._decision(request_id, "abandoned", {})
        if self.on_request_finished is not None:
            self.on_request_finished(request_id, ABANDONED)
        return "cancelled"

    def handle_machine_failure(self, machine_id: str) -> list[str]:
        """Mark every placement on the machine dead and resubmit affected
        work elsewhere. Returns the request ids resubmitted."""
        state = self.journal.state
        affected: list[str] = []
        for request_id, index, _ in state.placements_on(machine_id):
            was_running = state.requests[request_id]["placements"][index]["state"] == P_RUNNING
            self._close_placement(request_id, index, P_DEAD,
                                  note="machine_failure" + ("_running" if was_running else ""))
            if request_id not in affected:
                affected.append(request_id)
        for request_id in affected:
            record = state.requests[request_id]
            chosen = record["chosen_placement"]
            if (record["federated_state"] not in FED_TERMINAL and chosen is not None
                    and record["placements"][chosen]["state"] not in P_LIVE):
                # the winner died with the machine; reopen the race
                self.journal.emit("request_state", {
                    "request_id": request_id, "federated_state": PLACED,
                    "chosen_placement": None})
        resubmitted = []
        for request_id in affected:
            record = state.requests[request_id]
            if record["federated_state"] in FED_TERMINAL:
                continue
            if state.live_placements(request_id):
                continue  # a speculative sibling survives elsewhere
            if self._resubmit(request_id):
                resubmitted.append(request_id)
        return resubmitted

    def _resubmit(self, request_id: str) -> bool:
        state = self.journal.state
        record = state.requests[request_id]
        try:
            choice = self._select(record["nodes"], record["walltime"],
                                  record["deadline"], record["max_priority"],
                                  record["speculation"])
        except (NoHealthyMachines, InfeasibleRequest) as err:
            self._strand(request_id, str(err))
            return False
        cost = placement_cost(record["nodes"], record["walltime"],
                              choice.priority_class, self.config.multipliers)
        if cost * len(choice.machines) > state.available_tokens(record["incident_id"]):
            self._strand(request_id, "insufficient tokens for resubmission")
            return False
        placements = self._submit_placements(
            request_id, record["incident_id"], record["nodes"], record["walltime"],
            choice, self._origin_payload(record), start_ordinal=len(record["placements"]))
        if not placements:
            self._strand(request_id, "no machine accepted resubmission")
            return False
        base = len(record["placements"])
        self.journal.emit("request_submitted", {
            "request_id": request_id, "incident_id": record["incident_id"],
            "origin": record["origin"], "nodes": record["nodes"],
            "walltime": record["walltime"], "deadline": record["deadline"],
            "max_priority": record["max_priority"], "speculation": record["speculation"],
            "at_risk": choice.at_risk, "placements": placements,
            "predictions": [_pred_dict(p) for p in choice.predictions],
        })
        for offset in range(len(placements)):
            self.journal.emit("tokens_changed", {
                "incident_id": record["incident_id"], "delta": placements[offset]["debit"],
                "reason": "debit_resubmission", "request_id": request_id,
                "placement": base + offset})
        self.journal.emit("request_state", {
            "request_id": request_id, "federated_state": PLACED})
        self._decision(request_id, "resubmitted", {
            "placements": [(p["machine_id"], p["priority_class"]) for p in placements]})
        return True

    def _origin_payload(self, record: dict) -> dict | None:
        origin = record["origin"]
        if origin.get("kind") == "member":
            return {"kind": "member", "member_id": origin["member_id"]}
        if origin.get("kind") == "activity":
            return {"kind": "activity", "instance_id": origin["instance_id"]}
        return None

    def _strand(self, request_id: str, reason: str) -> None:
        self.journal.emit("request_state", {
            "request_id": request_id, "federated_state": FAILED_RESCHEDULING})
        self._alert("failed_rescheduling", {"request_id": request_id, "reason": reason})
        self._decision(request_id, "failed_rescheduling", {"reason": reason})
        if self.on_request_finished is not None:
            self.on_request_finished(request_id, FAILED_RESCHEDULING)

    # -- queries --------------------------------------------------------------

    def job_status(self, request_id: str) -> dict:
        state = self.journal.state
        if request_id not in state.requests:
            raise UnknownRequest(request_id)
        return copy_of(state.requests[request_id])

    def list_incident_jobs(self, incident_id: str) -> list[dict]:
        state = self.journal.state
        return [dict(record, request_id=request_id)
                for request_id, record in state.requests.items()
                if record["incident_id"] == incident_id]

    # -- plumbing ---------------------------------------------------------------

    def _alert(self, kind: str, details: dict) -> None:
        self.journal.emit("alert", {"alert_kind": kind, "details": details})

    def _decision(self, request_id: str | None, kind: str, payload: dict) -> None:
        line = "\t".join([
            fmt_time(self.journal.clock.now), request_id or "-", kind,
            json.dumps(payload, sort_keys=True),
        ])
        self.decision_lines.append(line)
        self.journal.emit("decision", {
            "request_id": request_id, "decision": kind, "payload": payload})

    def rebuild_soft_state(self) -> None:
        """After recovery: re-derive caches that are not part of the
        replayed state."""
        self._deadline_alerted = {
            a["details"]["request_id"] for a in self.journal.state.alerts
            if a["kind"] == "deadline_missed"}


def _summarize(status: MachineStatus) -> dict:
    return {
        "free_nodes": status.free_nodes,
        "total_nodes": status.total_nodes,
        "running": len(status.running),
        "queued": {cls: len(entries) for cls, entries in status.queued_per_class.items()},
        "sample_time": status.sample_time,
    }


def _pred_dict(pred) -> dict:
    return {"machine_id": pred.machine_id, "priority_class": pred.priority_class,
            "predicted_start": pred.predicted_start,
            "predicted_completion": pred.predicted_completion}


def copy_of(record: dict) -> dict:
    return copy.deepcopy(record)
