"""Ensemble lifecycle, steering outboxes and telemetry intake.

Members are federated jobs; the manager only ever talks to them through
the federator (submission, cancellation) and the frame/inbox protocol
(telemetry in, steering out). Steering messages sit in a per-member
outbox until the member polls its inbox at a frame boundary; delivery
is at-least-once (pending messages are re-sent, in issue order, until
acknowledged) with message-id dedup on the member side. The ack is the
commit point: a member applies a message locally only after its ack has
been recorded here, which keeps the authoritative applied set ahead of
any local effect, so retries, duplicated deliveries and member restarts
can never reorder or re-apply steering.
"""

from __future__ import annotations

import itertools
import json

from ..errors import (
    InsufficientTokens, InvalidSweep, NoHealthyMachines, NotSteerable,
    UnknownEnsemble, UnknownMember, UnknownTarget,
)
from ..federator.selection import placement_cost
from ..state import FED_TERMINAL
from .frames import decode_frame
from .reduction import build_pipeline


class EnsembleManager:
    def __init__(self, journal, federator, templates: dict):
        self.journal = journal
        self.federator = federator
        self.templates = templates
        self._pipelines: dict[str, object] = {}
        self.telemetry_lines: list[str] = []

    # -- spawning -----------------------------------------------------------

    def spawn_ensemble(self, template_name: str, incident_id: str,
                       region: str | None = None, overrides: dict | None = None,
                       sweep: dict | None = None,
                       provenance: list | None = None) -> str:
        state = self.journal.state
        template = self.templates.get(template_name)
        if template is None:
            raise UnknownEnsemble(f"no ensemble template {template_name!r}")
        incident = state.incidents.get(incident_id)
        if incident is None or not incident["active"]:
            raise UnknownEnsemble(f"incident {incident_id!r} not active")
        vectors = self._sweep_vectors(sweep or {})
        params_base = {**template.params, **(overrides or {})}
        job = template.job

        # all-or-nothing budget check at the worst-case class multiplier
        worst = placement_cost(job["nodes"], job["walltime"], job["max_priority"],
                               self.federator.config.multipliers)
        need = worst * job["speculation"] * len(vectors)
        if need > state.available_tokens(incident_id):
            raise InsufficientTokens(
                f"sweep of {len(vectors)} members needs up to {need} tokens, "
                f"{state.available_tokens(incident_id)} available")

        ensemble_id = state.peek_id("ensemble", "ens-%03d")
        self.journal.emit("ensemble_spawned", {
            "ensemble_id": ensemble_id, "incident_id": incident_id,
            "region": region or params_base.get("region"),
            "template": template_name, "params": params_base,
            "steerable": list(template.steerable), "pipeline": template.pipeline,
            "workload": template.workload, "job": dict(job),
            "provenance": provenance or [],
        })
        ens_ordinal = state.counters["ensemble"]
        now = self.journal.clock.now
        for index, vector in enumerate(vectors):
            member_id = f"{ensemble_id}/m{index:02d}"
            params = {**params_base, **vector}
            seed = ens_ordinal * 10007 + index
            request_id = f"req-{ensemble_id}-m{index:02d}"
            # the member must exist before its machine job can start
            self.journal.emit("member_added", {
                "member_id": member_id, "ensemble_id": ensemble_id,
                "request_id": request_id, "params": params, "seed": seed})
            try:
                self.federator.submit_federated(
                    incident_id=incident_id, nodes=job["nodes"], walltime=job["walltime"],
                    deadline=now + job["deadline_offset"], max_priority=job["max_priority"],
                    speculation=job["speculation"], request_id=request_id,
                    origin={"kind": "member", "member_id": member_id},
                    payload={"kind": "member", "member_id": member_id})
            except NoHealthyMachines as err:
                self.journal.emit("member_state", {"member_id": member_id,
                                                   "state": "stopped"})
                self.journal.emit("alert", {"alert_kind": "member_unplaceable",
                                            "details": {"member_id": member_id,
                                                        "reason": str(err)}})
        self.journal.emit_event("ensemble_spawned", {
            "incident_id": incident_id, "ensemble_id": ensemble_id,
            "region": region or params_base.get("region"),
            "members": len(vectors), "template": template_name,
        }, provenance=provenance or [])
        return ensemble_id

    def _sweep_vectors(self, sweep: dict) -> list[dict]:
        if not isinstance(sweep, dict):
            raise InvalidSweep("sweep must map parameter names to value lists")
        if not sweep:
            return [{}]
        names = list(sweep)
        for name in names:
            values = sweep[name]
            if not isinstance(values, list) or not values:
                raise InvalidSweep(f"sweep parameter {name!r} needs a non-empty list")
        return [dict(zip(names, combo))
                for combo in itertools.product(*(sweep[n] for n in names))]

    # -- stopping -----------------------------------------------------------

    def stop_ensemble(self, ensemble_id: str) -> list[str]:
        state = self.journal.state
        if ensemble_id not in state.ensembles:
            raise UnknownEnsemble(ensemble_id)
        ens = state.ensembles[ensemble_id]
        if ens["state"] == "stopped":
            return []
        self.journal.emit("ensemble_state", {"ensemble_id": ensemble_id,
                                             "state": "stopping"})
        stopped = self.stop_members(list(state.live_members(ensemble_id)))
        self._maybe_finish(ensemble_id)
        return stopped

    def stop_members(self, member_ids: list[str]) -> list[str]:
        state = self.journal.state
        stopped = []
        for member_id in member_ids:
            member = state.members.get(member_id)
            if member is None:
                raise UnknownMember(member_id)
            if member["state"] != "live":
                continue
            record = state.requests[member["request_id"]]
            if record["federated_state"] not in FED_TERMINAL:
                self.federator.cancel_request(member["request_id"])
            else:
                self.journal.emit("member_state", {"member_id": member_id,
                                                   "state": "stopped"})
            stopped.append(member_id)
        return stopped

    def select_members(self, selector: dict, incident_id: str | None = None,
                       region: str | None = None) -> list[str]:
        """Resolve a steering/stop selector to live member ids."""
        state = self.journal.state
        if "member" in selector:
            if selector["member"] not in state.members:
                raise UnknownTarget(selector["member"])
            return [selector["member"]]
        if "ensemble" in selector:
            ensemble_id = selector["ensemble"]
            if ensemble_id not in state.ensembles:
                raise UnknownTarget(ensemble_id)
            ensembles = [ensemble_id]
        elif "scope" in selector and selector["scope"] == "event":
            if incident_id is None:
                raise UnknownTarget("selector scope=event without an incident")
            ensembles = state.active_ensembles(incident_id, region)
        else:
            raise UnknownTarget(f"unsupported selector {selector!r}")
        members = [m for e in ensembles for m in state.live_members(e)]
        if "param_match" in selector:
            wanted = selector["param_match"]
            members = [m for m in members
                       if all(state.members[m]["params"].get(k) == v
                              for k, v in wanted.items())]
        return members

    def ensembles_for(self, selector: dict, incident_id: str | None = None,
                      region: str | None = None) -> list[str]:
        state = self.journal.state
        if "ensemble" in selector:
            if selector["ensemble"] not in state.ensembles:
                raise UnknownTarget(selector["ensemble"])
            return [selector["ensemble"]]
        if selector.get("scope") == "event" and incident_id is not None:
            return state.active_ensembles(incident_id, region)
        raise UnknownTarget(f"unsupported selector {selector!r}")

    def _maybe_finish(self, ensemble_id: str) -> None:
        state = self.journal.state
        ens = state.ensembles[ensemble_id]
        if ens["state"] == "stopped":
            return
        if not state.live_members(ensemble_id):
            self.journal.emit("ensemble_state", {"ensemble_id": ensemble_id,
                                                 "state": "stopped"})

    def on_member_finished(self, member_id: str, final_state: str) -> None:
        """Called by the world when a member's federated request ends."""
        state = self.journal.state
        member = state.members[member_id]
        if member["state"] == "live":
            new_state = "finished" if final_state == "completed" else "stopped"
            self.journal.emit("member_state", {"member_id": member_id,
                                               "state": new_state})
            self.journal.emit_event("ensemble_member_finished", {
                "incident_id": state.ensembles[member["ensemble_id"]]["incident_id"],
                "ensemble_id": member["ensemble_id"], "member_id": member_id,
                "state": new_state,
            }, provenance=state.ensembles[member["ensemble_id"]]["provenance"])
        self._maybe_finish(member["ensemble_id"])

    # -- steering -------------------------------------------------------------

    def steer(self, selector: dict, payload: dict, incident_id: str | None = None,
              region: str | None = None, provenance: list | None = None) -> dict:
        state = self.journal.state
        targets = self.select_members(selector, incident_id, region)
        if not targets:
            raise UnknownTarget(f"selector {selector!r} matches no live member")
        for member_id in targets:
            ensemble = state.ensembles[state.members[member_id]["ensemble_id"]]
            if ensemble["state"] != "active":
                raise UnknownTarget(f"ensemble {ensemble} not active")
            for name in payload:
                if name not in ensemble["steerable"]:
                    raise NotSteerable(f"parameter {name!r} is not steerable")
        message_id = state.peek_id("message", "msg-%05d")
        self.journal.emit("steering_issued", {
            "message_id": message_id, "targets": targets, "payload": payload,
            "provenance": provenance or [],
        })
        return {"message_id": message_id, "targets": targets}

    def pending_messages(self, member_id: str) -> str:
        """Inbox poll: pending messages as newline-delimited JSON records,
        oldest first. Retried until acknowledged."""
        state = self.journal.state
        if member_id not in state.members:
            raise UnknownMember(member_id)
        lines = [json.dumps({"message_id": entry["message_id"],
                             "payload": entry["payload"]}, sort_keys=True)
                 for entry in state.members[member_id]["outbox"]
                 if entry["state"] == "pending"]
        return "\n".join(lines)

    def ack_steering(self, member_id: str, message_id: str, step: int) -> None:
        """Member confirmed application at a frame boundary; idempotent."""
        state = self.journal.state
        member = state.members.get(member_id)
        if member is None:
            raise UnknownMember(member_id)
        if message_id in member["applied_messages"]:
            return
        entry = next((e for e in member["outbox"] if e["message_id"] == message_id), None)
        if entry is None:
            raise UnknownTarget(f"{message_id} not addressed to {member_id}")
        self.journal.emit("steering_applied", {
            "member_id": member_id, "message_id": message_id, "step": step,
            "effective_params": entry["payload"],
        })
        self.journal.emit_event("steering_applied", {
            "incident_id": state.ensembles[member["ensemble_id"]]["incident_id"],
            "ensemble_id": member["ensemble_id"], "member_id": member_id,
            "message_id": message_id, "step": step,
            "params": entry["payload"],
        }, provenance=entry.get("provenance") or [])

    # -- telemetry --------------------------------------------------------------

    def accept_frame(self, raw: bytes) -> dict | None:
        state = self.journal.state
        frame, _ = decode_frame(raw)
        member = state.members.get(frame.member_id)
        if member is None:
            self.journal.emit("frame_dropped", {
                "member_id": frame.member_id, "seq": frame.seq,
                "reason": "unknown_member"})
            return None
        if frame.seq <= member["last_frame_seq"]:
            self.journal.emit("frame_dropped", {
                "member_id": frame.member_id, "seq": frame.seq, "reason": "stale_seq"})
            return None
        ensemble = state.ensembles[member["ensemble_id"]]
        pipeline = self._pipeline_for(member["ensemble_id"], ensemble["pipeline"])
        outputs = pipeline.apply(frame)
        body = {"member_id": frame.member_id, "ensemble_id": member["ensemble_id"],
                "seq": frame.seq, "sim_time": frame.sim_time, "outputs": outputs}
        self.journal.emit("frame_reduced", body)
        self.telemetry_lines.append(json.dumps(body, sort_keys=True))
        return outputs

    def _pipeline_for(self, ensemble_id: str, spec: list):
        pipeline = self._pipelines.get(ensemble_id)
        if pipeline is None:
            pipeline = build_pipeline(spec, pipeline_id=ensemble_id)
            self._pipelines[ensemble_id] = pipeline
        return pipeline
