"""Regenerate the dashboard test fixture from the golden scenario.

Runs the orchestrator in-process, captures the full record stream and
the REST views the dashboard would fetch on a refresh, and writes both
to test/fixtures/golden_run.json. The run is deterministic, so the
fixture only changes when the backend's behavior does.
"""

import json
from pathlib import Path

from urgentfed.gateway.api import create_app
from urgentfed.scenario import parse_scenario, run_scenario

from fastapi.testclient import TestClient

ROOT = Path(__file__).resolve().parent.parent
SCENARIO = ROOT.parent / "scenarios" / "wildfire_demo.yaml"
OUT = ROOT / "test" / "fixtures" / "golden_run.json"


def main() -> None:
    result = run_scenario(parse_scenario(SCENARIO.read_text()))
    world = result.world
    api = TestClient(create_app(world))
    events = []
    after = 0
    while True:
        page = api.get("/events", params={"after": after, "limit": 200}).json()
        events.extend(page["events"])
        if len(page["events"]) < 200:
            break
        after = page["next_after"]
    fixture = {
        "records": [dict(r) for r in world.store.records],
        "rest": {
            "machines": api.get("/machines").json()["machines"],
            "incidents": api.get("/incidents").json()["incidents"],
            "jobs": api.get("/jobs").json()["jobs"],
            "ensembles": api.get("/ensembles").json()["ensembles"],
            "events": events,
            "alerts": api.get("/alerts").json()["alerts"],
            "last_seq": world.store.last_seq,
        },
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture, sort_keys=True))
    print(f"wrote {OUT} ({world.store.last_seq} records, {len(events)} events)")


if __name__ == "__main__":
    main()
