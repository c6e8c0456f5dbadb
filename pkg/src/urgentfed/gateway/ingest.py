"""Sensor ingestion: normalization, deduplication, event emission.

Sources push envelopes carrying an opaque payload blob plus a declared
format tag; the gateway validates the payload against its content-kind
schema, stores the blob, and emits exactly one ``sensor_data_arrived``
workflow event per (source, sequence_number) no matter how many times
the envelope is delivered.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import PayloadInvalid, UnknownIncident, UnknownSource
from ..workloads.weather import weather_stub

# which format tags are understood per content kind, and whether payload
# in that format still needs a preprocessing activity
FORMATS = {
    "fire_perimeter": {"cells/json": False, "grid/text": True},
    "weather_obs": {"obs/json": False},
}


class BlobStore:
    """Payload/artifact storage; filesystem-backed when a directory is
    given, in-memory otherwise (throwaway scenario runs)."""

    def __init__(self, base: str | Path | None = None):
        self.base = Path(base) if base is not None else None
        self._mem: dict[str, str] = {}
        if self.base is not None:
            self.base.mkdir(parents=True, exist_ok=True)

    def put(self, name: str, text: str) -> str:
        if self.base is None:
            path = f"blob://{name}"
            self._mem[path] = text
            return path
        path = self.base / name
        path.write_text(text)
        return str(path)

    def read(self, path: str) -> str:
        if path.startswith("blob://"):
            if path not in self._mem:
                raise OSError(f"no such blob {path}")
            return self._mem[path]
        return Path(path).read_text()


class Gateway:
    def __init__(self, journal, world):
        self.journal = journal
        self.world = world

    # -- incident / source management ------------------------------------

    def create_incident(self, label: str, tokens: float, ruleset: str | None = None,
                        incident_id: str | None = None) -> dict:
        state = self.journal.state
        if incident_id is None:
            incident_id = state.peek_id("incident", "inc-%03d")
        if incident_id in state.incidents:
            raise ValueError(f"incident {incident_id!r} already exists")
        if tokens < 0:
            raise ValueError("token budget must be non-negative")
        if ruleset is not None and ruleset not in self.world.defs.rulesets:
            raise ValueError(f"unknown rule-set {ruleset!r}")
        self.journal.emit("incident_created", {
            "incident_id": incident_id, "label": label, "tokens": tokens,
            "ruleset": ruleset})
        return {"incident_id": incident_id, "label": label, "tokens": tokens,
                "ruleset": ruleset}

    def register_source(self, source_id: str, incident_id: str,
                        content_kind: str) -> dict:
        state = self.journal.state
        if incident_id not in state.incidents:
            raise UnknownIncident(incident_id)
        if source_id in state.sources:
            raise ValueError(f"source {source_id!r} already registered")
        if content_kind not in FORMATS:
            raise PayloadInvalid(f"unknown content kind {content_kind!r}")
        self.journal.emit("source_registered", {
            "source_id": source_id, "incident_id": incident_id,
            "content_kind": content_kind})
        return {"source_id": source_id, "incident_id": incident_id,
                "content_kind": content_kind}

    # -- ingestion -----------------------------------------------------------

    def ingest(self, envelope: dict) -> dict:
        state = self.journal.state
        source = state.sources.get(envelope.get("source_id"))
        if source is None:
            raise UnknownSource(str(envelope.get("source_id")))
        source_id = envelope["source_id"]
        seq = envelope.get("sequence_number")
        if not isinstance(seq, int) or seq < 0:
            raise PayloadInvalid("sequence_number must be a non-negative integer")
        if seq in source["seen"]:
            return {"status": "duplicate", "source_id": source_id,
                    "sequence_number": seq}
        kind = envelope.get("content_kind", source["content_kind"])
        if kind != source["content_kind"]:
            raise PayloadInvalid(
                f"source {source_id} is registered for {source['content_kind']}, "
                f"got {kind}")
        fields, blob_text, blob_ext = self._normalize(kind, envelope)
        data_file = self.world.blobs.put(f"{source_id}-{seq}.{blob_ext}", blob_text)
        self.journal.emit("envelope_accepted", {
            "source_id": source_id, "sequence_number": seq})
        event = self.journal.emit_event("sensor_data_arrived", {
            "incident_id": source["incident_id"],
            "source_id": source_id, "sequence_number": seq,
            "content_kind": kind, "data_file": data_file, **fields,
        }, provenance=[])
        return {"status": "accepted", "event_id": event["event_id"],
                "source_id": source_id, "sequence_number": seq}

    def _normalize(self, kind: str, envelope: dict) -> tuple[dict, str, str]:
        fmt = envelope.get("format")
        payload = envelope.get("payload")
        known = FORMATS[kind]
        if fmt not in known:
            raise PayloadInvalid(f"format {fmt!r} is not understood for {kind} "
                                 f"(expected one of {sorted(known)})")
        needs_preprocessing = known[fmt]
        if kind == "fire_perimeter" and fmt == "cells/json":
            region, cells = _check_perimeter_json(payload)
            return ({"region": region, "needs_preprocessing": False,
                     "cells": cells},
                    json.dumps(cells, sort_keys=True), "json")
        if kind == "fire_perimeter" and fmt == "grid/text":
            if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
                raise PayloadInvalid("grid/text payload needs {'region', 'text'}")
            region = _check_region(payload)
            return ({"region": region, "needs_preprocessing": True},
                    payload["text"], "txt")
        if kind == "weather_obs":
            region, votes, strength = _check_obs(payload)
            nowcast = weather_stub(region, votes, seed=0)
            return ({"region": region, "needs_preprocessing": needs_preprocessing,
                     "wind_votes": votes,
                     "wind_direction": nowcast.direction,
                     "wind_strength": strength if strength is not None else nowcast.strength},
                    json.dumps({"region": region, "wind_votes": votes},
                               sort_keys=True), "json")
        raise PayloadInvalid(f"no schema for {kind}/{fmt}")

    # -- operator commands ------------------------------------------------------

    def operator_command(self, command: dict) -> dict:
        """Validate, record an operator-provenance event, dispatch."""
        kind = command.get("command")
        handler = {
            "steer": self._cmd_steer,
            "stop_ensemble": self._cmd_stop_ensemble,
            "stop_members": self._cmd_stop_members,
            "spawn_ensemble": self._cmd_spawn,
            "cancel_job": self._cmd_cancel_job,
            "ack_alert": self._cmd_ack_alert,
        }.get(kind)
        if handler is None:
            raise ValueError(f"unknown operator command {kind!r}")
        event = self.journal.emit_event("operator_command", {
            "incident_id": command.get("incident_id"),
            "region": command.get("region"),
            "command": kind,
            "arguments": {k: v for k, v in command.items()
                          if k not in ("command", "incident_id", "region")},
        }, provenance=[])
        result = handler(command, provenance=[event["event_id"]])
        return {"status": "accepted", "event_id": event["event_id"], **result}

    def _cmd_steer(self, command, provenance):
        result = self.world.manager.steer(
            command["selector"], command["payload"],
            incident_id=command.get("incident_id"), region=command.get("region"),
            provenance=provenance)
        return result

    def _cmd_stop_ensemble(self, command, provenance):
        stopped = self.world.manager.stop_ensemble(command["ensemble_id"])
        return {"stopped_members": stopped}

    def _cmd_stop_members(self, command, provenance):
        members = self.world.manager.select_members(
            command["selector"], incident_id=command.get("incident_id"),
            region=command.get("region"))
        return {"stopped_members": self.world.manager.stop_members(members)}

    def _cmd_spawn(self, command, provenance):
        ensemble_id = self.world.manager.spawn_ensemble(
            command["template"], command["incident_id"],
            region=command.get("region"), overrides=command.get("params"),
            sweep=command.get("sweep"), provenance=provenance)
        return {"ensemble_id": ensemble_id}

    def _cmd_cancel_job(self, command, provenance):
        return {"result": self.world.federator.cancel_request(command["request_id"])}

    def _cmd_ack_alert(self, command, provenance):
        self.journal.emit("alert_acked", {"index": command["alert_index"]})
        return {"acked": command["alert_index"]}


def _check_region(payload) -> str:
    region = payload.get("region")
    if not isinstance(region, str) or not region:
        raise PayloadInvalid("payload needs a non-empty 'region' string")
    return region


def _check_perimeter_json(payload) -> tuple[str, list]:
    if not isinstance(payload, dict):
        raise PayloadInvalid("cells/json payload must be a mapping")
    region = _check_region(payload)
    cells = payload.get("cells")
    if not isinstance(cells, list):
        raise PayloadInvalid("'cells' must be a list of [x, y] pairs")
    for cell in cells:
        if (not isinstance(cell, list) or len(cell) != 2
                or not all(isinstance(c, int) for c in cell)):
            raise PayloadInvalid(f"bad perimeter cell {cell!r}")
    return region, cells


def _check_obs(payload) -> tuple[str, list, float | None]:
    if not isinstance(payload, dict):
        raise PayloadInvalid("obs/json payload must be a mapping")
    region = _check_region(payload)
    votes = payload.get("wind_votes", [])
    if not isinstance(votes, list) or not all(
            v in ("N", "E", "S", "W") for v in votes):
        raise PayloadInvalid("'wind_votes' must be a list of N/E/S/W")
    strength = payload.get("strength")
    if strength is not None:
        if not isinstance(strength, (int, float)) or not 0 <= strength <= 1:
            raise PayloadInvalid("'strength' must lie in [0, 1]")
    return region, votes, strength
