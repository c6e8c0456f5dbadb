import pytest

from urgentfed.errors import InsufficientTokens, NoHealthyMachines, UnknownRequest

from conftest import submit


def poll_times(world):
    return world.federator.config.poll_interval


class TestPolling:
    def test_healthy_fleet_snapshots(self, make_world):
        world = make_world(machines=(("a", 2), ("b", 2), ("c", 2)))
        seen = {r.body["machine_id"] for r in world.store.records
                if r.kind == "poll_observed"}
        assert seen == {"a", "b", "c"}

    def test_one_missed_poll_marks_suspect_jobs_untouched(self, make_world):
        world = make_world()
        rid = submit(world, walltime=500)
        world.fleet.machine("alpha").inject_failure(15)
        world.advance_to(21)  # outage at 15, poll at 20 -> first miss
        assert world.state.machines["alpha"]["health"] == "suspect"
        record = world.state.requests[rid]
        assert record["placements"][0]["state"] == "running"
        assert record["federated_state"] == "running"

    def test_two_missed_polls_declare_failed_and_resubmit(self, make_world):
        world = make_world()
        rid = submit(world, walltime=500)
        assert world.state.requests[rid]["placements"][0]["machine_id"] == "alpha"
        world.fleet.machine("alpha").inject_failure(15)
        world.advance_to(31)  # misses at 20 and 30
        assert world.state.machines["alpha"]["health"] == "failed"
        record = world.state.requests[rid]
        assert record["placements"][0]["state"] == "dead"
        assert record["placements"][1]["machine_id"] == "beta"
        assert record["placements"][1]["state"] in ("queued", "running")

    def test_failed_machine_receives_no_further_submissions(self, make_world):
        world = make_world()
        world.fleet.machine("alpha").inject_failure(5)
        world.advance_to(25)
        for _ in range(5):
            submit(world, walltime=30)
        world.run_until_settled()
        machines_used = {p["machine_id"]
                         for r in world.state.requests.values()
                         for p in r["placements"]}
        assert machines_used == {"beta"}


class TestSpeculation:
    def test_k2_sibling_cancelled_within_one_poll_of_start(self, make_world):
        # beta busy so its placement stays queued; alpha starts at once
        world = make_world(machines=(("alpha", 2), ("beta", 2)))
        blocker = submit(world, nodes=2, walltime=300)  # lands on one machine
        rid = submit(world, nodes=2, walltime=100, speculation=2)
        record = world.state.requests[rid]
        assert len(record["placements"]) == 2
        start_time = world.clock.now
        world.advance_to(start_time + poll_times(world))
        record = world.state.requests[rid]
        states = {p["machine_id"]: p["state"] for p in record["placements"]}
        # one placement runs, the sibling is cancelled within one interval
        assert sorted(states.values()) == ["cancelled", "running"]

    def test_exactly_one_completion_and_refund_reconciles(self, make_world):
        world = make_world()
        rid = submit(world, nodes=1, walltime=60, speculation=2)
        world.run_until_settled()
        record = world.state.requests[rid]
        assert record["federated_state"] == "completed"
        completed = [p for p in record["placements"] if p["state"] == "completed"]
        assert len(completed) == 1
        # token ledger: every non-completed placement refunded at 90%
        debits = refunds = 0.0
        for r in world.store.records:
            if r.kind == "tokens_changed" and r.body.get("request_id") == rid:
                if r.body["delta"] > 0:
                    debits += r.body["delta"]
                else:
                    refunds -= r.body["delta"]
        expected_refund = sum(p["debit"] * 0.9 for p in record["placements"]
                              if p["state"] != "completed")
        assert refunds == expected_refund
        spent = world.state.incidents["inc-1"]["tokens"]["spent"]
        assert spent == debits - refunds

    def test_speculation_capped_by_registered_machines(self, make_world):
        world = make_world(machines=(("solo", 4),))
        with pytest.raises(ValueError):
            submit(world, speculation=2)


class TestTokens:
    def test_debit_matches_multiplier_table(self, make_world):
        world = make_world()
        rid = submit(world, nodes=2, walltime=100)  # idle fleet -> normal class
        record = world.state.requests[rid]
        assert record["placements"][0]["priority_class"] == "normal"
        assert record["placements"][0]["debit"] == 200
        assert world.state.incidents["inc-1"]["tokens"]["spent"] == 200

    def test_insufficient_tokens_is_atomic(self, make_world):
        world = make_world(tokens=100.0)
        before = world.store.last_seq
        with pytest.raises(InsufficientTokens):
            submit(world, nodes=2, walltime=100)  # costs 200
        assert world.state.requests == {}
        kinds = [r.kind for r in world.store.records if r.seq > before]
        assert "request_submitted" not in kinds
        assert world.state.incidents["inc-1"]["tokens"]["spent"] == 0

    def test_completed_job_keeps_full_debit(self, make_world):
        world = make_world()
        rid = submit(world, nodes=1, walltime=40)
        world.run_until_settled()
        assert world.state.incidents["inc-1"]["tokens"]["spent"] == 40


class TestFailureHandling:
    def test_five_jobs_resubmitted_to_survivor(self, make_world):
        world = make_world(machines=(("alpha", 2), ("beta", 4)))
        # 2 running + 3 queued on alpha: force with nodes=2 jobs
        rids = []
        for i in range(5):
            rids.append(submit(world, nodes=2, walltime=400))
        on_alpha = [r for r in rids
                    if world.state.requests[r]["placements"][0]["machine_id"] == "alpha"]
        world.fleet.machine("alpha").inject_failure(12)
        world.advance_to(35)
        for rid in on_alpha:
            record = world.state.requests[rid]
            live = [p for p in record["placements"] if p["state"] in ("queued", "running")]
            assert live and all(p["machine_id"] == "beta" for p in live), rid
        world.run_until_settled()
        assert all(world.state.requests[r]["federated_state"] == "completed"
                   for r in rids)

    def test_sibling_survivor_means_no_resubmission(self, make_world):
        world = make_world()
        rid = submit(world, nodes=1, walltime=400, speculation=2)
        machines = {p["machine_id"] for p in world.state.requests[rid]["placements"]}
        assert machines == {"alpha", "beta"}
        # kill one of them before any poll notices a winner
        world.fleet.machine("beta").inject_failure(2)
        world.advance_to(25)
        record = world.state.requests[rid]
        assert len(record["placements"]) == 2  # nothing new submitted
        live = [p for p in record["placements"] if p["state"] in ("queued", "running")]
        assert len(live) == 1 and live[0]["machine_id"] == "alpha"

    def test_all_machines_failed_strands_with_alert(self, make_world):
        world = make_world()
        rid = submit(world, walltime=400)
        world.fleet.machine("alpha").inject_failure(3)
        world.fleet.machine("beta").inject_failure(3)
        world.advance_to(45)
        assert world.state.requests[rid]["federated_state"] == "failed_rescheduling"
        kinds = [a["kind"] for a in world.state.alerts]
        assert "failed_rescheduling" in kinds

    def test_no_healthy_machines_at_submit(self, make_world):
        world = make_world(machines=(("alpha", 4),))
        world.fleet.machine("alpha").inject_failure(1)
        world.advance_to(25)
        with pytest.raises(NoHealthyMachines):
            submit(world)


class TestStatusQueries:
    def test_just_submitted_is_placed_or_running(self, make_world):
        world = make_world()
        rid = submit(world, walltime=200)
        assert world.federator.job_status(rid)["federated_state"] in ("placed", "running")

    def test_completed_has_exactly_one_completed_placement(self, make_world):
        world = make_world()
        rid = submit(world, walltime=30)
        world.run_until_settled()
        record = world.federator.job_status(rid)
        assert record["federated_state"] == "completed"
        assert sum(1 for p in record["placements"] if p["state"] == "completed") == 1

    def test_unknown_request(self, make_world):
        world = make_world()
        with pytest.raises(UnknownRequest):
            world.federator.job_status("ghost")

    def test_mid_failover_view_is_consistent(self, make_world):
        world = make_world()
        rid = submit(world, walltime=400)
        world.fleet.machine("alpha").inject_failure(12)
        world.advance_to(31)
        record = world.federator.job_status(rid)
        dead = [p for p in record["placements"] if p["state"] == "dead"]
        live = [p for p in record["placements"] if p["state"] in ("queued", "running")]
        assert len(dead) == 1 and len(live) == 1

    def test_list_incident_jobs(self, make_world):
        world = make_world()
        submit(world)
        submit(world)
        assert len(world.federator.list_incident_jobs("inc-1")) == 2

    def test_abandon_via_cancel(self, make_world):
        world = make_world()
        rid = submit(world, walltime=500)
        assert world.command(world.federator.cancel_request, rid) == "cancelled"
        assert world.state.requests[rid]["federated_state"] == "abandoned"
        assert world.command(world.federator.cancel_request, rid) == "already_terminal"

    def test_deadline_missed_alert(self, make_world):
        world = make_world(machines=(("solo", 1),))
        submit(world, nodes=1, walltime=300)
        rid = submit(world, nodes=1, walltime=300, deadline_offset=50)
        world.advance_to(100)
        kinds = {a["kind"] for a in world.state.alerts}
        assert "deadline_missed" in kinds or world.state.requests[rid]["at_risk"]