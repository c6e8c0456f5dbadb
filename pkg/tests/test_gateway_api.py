import random

import pytest
from fastapi.testclient import TestClient

from urgentfed.errors import PayloadInvalid, UnknownSource
from urgentfed.gateway.api import create_app


@pytest.fixture
def world(make_world):
    w = make_world(ruleset="wildfire")
    w.command(w.gateway.register_source, "s1", "inc-1", "fire_perimeter")
    w.command(w.gateway.register_source, "s2", "inc-1", "weather_obs")
    return w


def envelope(seq, cells=((1, 1),), source="s1"):
    return {"source_id": source, "sequence_number": seq, "format": "cells/json",
            "payload": {"region": "region-1", "cells": [list(c) for c in cells]}}


class TestIngestion:
    def test_first_envelope_yields_one_event(self, world):
        result = world.command(world.gateway.ingest, envelope(1))
        assert result["status"] == "accepted"
        events = [r for r in world.store.records if r.kind == "wf_event"
                  and r.body["event"]["kind"] == "sensor_data_arrived"]
        assert len(events) == 1

    def test_duplicate_acknowledged_without_effect(self, world):
        world.command(world.gateway.ingest, envelope(1))
        before = world.store.last_seq
        result = world.command(world.gateway.ingest, envelope(1))
        assert result["status"] == "duplicate"
        assert world.store.last_seq == before

    def test_burst_with_duplicates_exactly_once_through(self, world):
        rng = random.Random(5)
        burst = [envelope(seq) for seq in range(1, 91)]
        for dup_seq in rng.sample(range(1, 91), 10):
            # a duplicate is a re-delivery: it arrives after its original
            first_at = next(i for i, e in enumerate(burst)
                            if e["sequence_number"] == dup_seq)
            burst.insert(rng.randrange(first_at + 1, len(burst) + 1),
                         envelope(dup_seq))
        assert len(burst) == 100
        accepted = sum(
            1 for e in burst
            if world.command(world.gateway.ingest, e)["status"] == "accepted")
        events = [r.body["event"] for r in world.store.records
                  if r.kind == "wf_event"
                  and r.body["event"]["kind"] == "sensor_data_arrived"]
        assert accepted == 90
        assert len(events) == 90
        # order preserved per source
        seqs = [e["payload"]["sequence_number"] for e in events]
        assert seqs == sorted(seqs)

    def test_unknown_source(self, world):
        with pytest.raises(UnknownSource):
            world.gateway.ingest(envelope(1, source="ghost"))

    def test_payload_schema_violations(self, world):
        bad = envelope(1)
        bad["payload"]["cells"] = [[1, "x"]]
        with pytest.raises(PayloadInvalid):
            world.gateway.ingest(bad)
        with pytest.raises(PayloadInvalid):
            world.gateway.ingest({"source_id": "s1", "sequence_number": 2,
                                  "format": "parquet", "payload": {}})
        with pytest.raises(PayloadInvalid):
            world.gateway.ingest({"source_id": "s2", "sequence_number": 1,
                                  "format": "obs/json",
                                  "payload": {"region": "r", "wind_votes": ["Q"]}})

    def test_kind_mismatch_rejected(self, world):
        with pytest.raises(PayloadInvalid):
            world.gateway.ingest({"source_id": "s2", "sequence_number": 1,
                                  "content_kind": "fire_perimeter",
                                  "format": "cells/json",
                                  "payload": {"region": "r", "cells": []}})

    def test_sequence_gaps_permitted(self, world):
        assert world.command(world.gateway.ingest, envelope(5))["status"] == "accepted"
        assert world.command(world.gateway.ingest, envelope(2))["status"] == "accepted"
        assert world.command(world.gateway.ingest, envelope(5))["status"] == "duplicate"


class TestApi:
    @pytest.fixture
    def client(self, world):
        return TestClient(create_app(world)), world

    def test_health_and_machines(self, client):
        api, world = client
        assert api.get("/health").json()["status"] == "ok"
        machines = api.get("/machines").json()["machines"]
        assert {m["machine_id"] for m in machines} == {"alpha", "beta"}
        assert all(m["health"] == "healthy" for m in machines)

    def test_incident_create_and_query(self, client):
        api, world = client
        response = api.post("/incidents", json={"label": "flood", "tokens": 10_000})
        assert response.status_code == 200
        incident_id = response.json()["incident_id"]
        listed = api.get("/incidents").json()["incidents"]
        found = next(i for i in listed if i["incident_id"] == incident_id)
        assert found["tokens"]["initial"] == 10_000

    def test_ingest_and_event_query_roundtrip(self, client):
        api, world = client
        api.post("/sources", json={"source_id": "s9", "incident_id": "inc-1",
                                   "content_kind": "fire_perimeter"})
        response = api.post("/ingest", json=envelope(1, source="s9"))
        assert response.status_code == 200
        events = api.get("/events", params={"kind": "sensor_data_arrived"}).json()
        assert len(events["events"]) == 1
        assert events["events"][0]["payload"]["source_id"] == "s9"

    def test_operator_command_and_jobs(self, client):
        api, world = client
        response = api.post("/commands", json={
            "command": "spawn_ensemble", "template": "wildfire",
            "incident_id": "inc-1", "region": "region-1",
            "sweep": {"spread_prob": [0.3, 0.6]}})
        assert response.status_code == 200
        ensembles = api.get("/ensembles").json()["ensembles"]
        assert len(ensembles) == 1 and len(ensembles[0]["members"]) == 2
        jobs = api.get("/jobs", params={"incident": "inc-1"}).json()["jobs"]
        assert len(jobs) == 2
        single = api.get("/jobs", params={"request_id": jobs[0]["request_id"]})
        assert single.status_code == 200

    def test_validation_errors_map_to_http_codes(self, client):
        api, world = client
        assert api.post("/ingest", json=envelope(1, source="ghost")).status_code == 404
        assert api.get("/jobs", params={"request_id": "nope"}).status_code == 404
        assert api.post("/commands", json={"command": "warp"}).status_code == 400
        big = api.post("/commands", json={
            "command": "spawn_ensemble", "template": "wildfire",
            "incident_id": "inc-1",
            "sweep": {"spread_prob": [0.1] * 4000}})
        assert big.status_code == 409  # insufficient tokens

    def test_advance_endpoint(self, client):
        api, world = client
        t0 = world.clock.now
        response = api.post("/control/advance", json={"seconds": 25})
        assert response.json()["now"] == t0 + 25

    def test_bearer_token_enforced(self, world):
        api = TestClient(create_app(world, token="sesame"))
        assert api.get("/machines").status_code == 401
        ok = api.get("/machines", headers={"Authorization": "Bearer sesame"})
        assert ok.status_code == 200
        assert api.get("/health").status_code == 200  # health stays open


class TestStream:
    def test_stream_resumes_without_gaps_or_duplicates(self, world):
        api = TestClient(create_app(world))
        with api.websocket_connect("/stream?after=0") as ws:
            first = ws.receive_json()
            assert first["seq"] == 1
            # drain a few, remember where we stopped
            last = first["seq"]
            for _ in range(5):
                last = ws.receive_json()["seq"]
        world.command(world.gateway.ingest, envelope(1))
        with api.websocket_connect(f"/stream?after={last}") as ws:
            seqs = []
            target = world.store.last_seq
            while len(seqs) == 0 or seqs[-1] < target:
                seqs.append(ws.receive_json()["seq"])
            assert seqs == list(range(last + 1, target + 1))

    def test_live_push_after_backlog(self, world):
        api = TestClient(create_app(world))
        with api.websocket_connect(f"/stream?after={world.store.last_seq}") as ws:
            world.command(world.gateway.ingest, envelope(2))
            record = ws.receive_json()
            assert record["seq"] == world.store.records[-1].seq - \
                (world.store.last_seq - record["seq"])
            kinds = [record["kind"]]
            while record["kind"] != "wf_event":
                record = ws.receive_json()
                kinds.append(record["kind"])
            assert "wf_event" in kinds

    def test_ping_pong(self, world):
        api = TestClient(create_app(world))
        with api.websocket_connect(f"/stream?after={world.store.last_seq}") as ws:
            ws.send_text("ping")
            assert ws.receive_json() == {"kind": "pong"}

    def test_stream_token_rejected(self, world):
        api = TestClient(create_app(world, token="sesame"))
        from starlette.websockets import WebSocketDisconnect
        with pytest.raises(WebSocketDisconnect):
            with api.websocket_connect("/stream?after=0") as ws:
                ws.receive_json()
        with api.websocket_connect("/stream?after=0&token=sesame") as ws:
            assert ws.receive_json()["seq"] == 1
