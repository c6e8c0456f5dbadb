import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from urgentfed.cli import main
from urgentfed.errors import DocumentSyntaxError
from urgentfed.scenario import parse_scenario, run_scenario

DEMO = Path(__file__).resolve().parent.parent / "scenarios" / "wildfire_demo.yaml"

SMALL = """\
fleet:
  - machine_id: alpha
    total_nodes: 2
  - machine_id: beta
    total_nodes: 2
failures:
  - {machine_id: beta, time: 100, kind: full_outage}
incidents:
  - {incident_id: inc-1, label: test, tokens: 50000}
script:
  - at: 5
    request: {request_id: r1, incident_id: inc-1, nodes: 1, walltime: 60,
              deadline_offset: 2000, speculation: 2}
run_until: 400
"""


class TestScenarioFiles:
    def test_parse_small(self):
        scenario = parse_scenario(SMALL)
        assert [m.machine_id for m in scenario.machines] == ["alpha", "beta"]
        assert scenario.machines[1].failure_schedule == ((100.0, "full_outage"),)
        assert scenario.script[0]["at"] == 5

    def test_run_small_end_to_end(self):
        result = run_scenario(parse_scenario(SMALL))
        record = result.world.state.requests["r1"]
        assert record["federated_state"] == "completed"
        assert len(record["placements"]) == 2  # speculative pair
        assert result.fleet_log_lines  # tab-separated transitions emitted
        assert all(len(line.split("\t")) == 4 for line in result.fleet_log_lines)

    def test_demo_scenario_settles(self):
        result = run_scenario(parse_scenario(DEMO.read_text()))
        world = result.world
        assert all(r["federated_state"] == "completed"
                   for r in world.state.requests.values())
        assert len(world.state.ensembles) == 1
        kinds = [line.split("\t")[3] for line in result.action_lines]
        assert kinds == ["start_activity", "start_activity", "spawn_ensemble",
                         "update_ensemble", "update_ensemble"]
        # the cirrus outage at 420 must have moved work to archer
        machines = {p["machine_id"]
                    for r in world.state.requests.values()
                    for p in r["placements"] if p["state"] == "completed"}
        assert "archer" in machines

    def test_scenario_runs_are_deterministic(self):
        a = run_scenario(parse_scenario(DEMO.read_text()))
        b = run_scenario(parse_scenario(DEMO.read_text()))
        assert a.action_lines == b.action_lines
        assert a.fleet_log_lines == b.fleet_log_lines
        assert a.decision_lines == b.decision_lines
        assert a.telemetry_lines == b.telemetry_lines

    def test_bad_scenario_rejected(self):
        with pytest.raises(DocumentSyntaxError):
            parse_scenario("incidents: []\n")
        with pytest.raises(DocumentSyntaxError):
            parse_scenario(SMALL + "script:\n  - at: 1\n    fly: {}\n")


class TestCli:
    def test_scenario_run_writes_logs(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["scenario", "run", str(DEMO),
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code == 0, result.output
        assert "requests" in result.output
        out = tmp_path / "out"
        for name in ("fleet_events.log", "decisions.log", "actions.log",
                     "telemetry.log"):
            assert (out / name).exists()
        assert (out / "store" / "log-000001.seg").exists()

    def test_replay_of_scenario_store(self, tmp_path):
        runner = CliRunner()
        runner.invoke(main, ["scenario", "run", str(DEMO),
                             "--out", str(tmp_path / "out")])
        result = runner.invoke(main, ["replay", str(tmp_path / "out" / "store")])
        assert result.exit_code == 0, result.output
        assert "ensembles: 1" in result.output
        assert '"completed": 2' in result.output

    def test_compact_writes_checkpoint(self, tmp_path):
        runner = CliRunner()
        runner.invoke(main, ["scenario", "run", str(DEMO),
                             "--out", str(tmp_path / "out")])
        result = runner.invoke(main, ["compact", str(tmp_path / "out" / "store")])
        assert result.exit_code == 0, result.output
        checkpoints = list((tmp_path / "out" / "store").glob("checkpoint-*.json"))
        assert len(checkpoints) == 1
        data = json.loads(checkpoints[0].read_text())
        assert data["state"]["incidents"]
