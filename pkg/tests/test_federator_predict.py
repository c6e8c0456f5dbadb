import random

import pytest

from urgentfed.errors import InfeasibleOnMachine, InfeasibleRequest, NoHealthyMachines
from urgentfed.federator.prediction import predict_start
from urgentfed.federator.selection import (
    DEFAULT_MULTIPLIERS, PlacementChoice, placement_cost, select_placement,
)
from urgentfed.fleetsim.fleet import Fleet
from urgentfed.fleetsim.machine import MachineSpec, MachineStatus, SimJob

from state_gen import actual_start_time, random_loaded_machine


def status(machine_id="m0", t=0.0, free=4, running=(), queued=None, healthy=True):
    return MachineStatus(machine_id=machine_id, sample_time=t, free_nodes=free,
                         running=list(running),
                         queued_per_class=queued or {"normal": [], "high": [], "preempt": []},
                         healthy=healthy)


class TestPredictStart:
    def test_idle_machine_starts_now(self):
        pred = predict_start(status(t=50.0, free=4), nodes=2, walltime=100,
                             priority_class="normal")
        assert pred.predicted_start == 50.0
        assert pred.predicted_completion == 150.0

    def test_busy_single_node_normal(self):
        # fleet-sim replay: 1-node machine, job with 600 s remaining
        st = status(free=0, running=[("r1", 1, 600.0, 600.0, "normal")])
        pred = predict_start(st, nodes=1, walltime=100, priority_class="normal")
        assert pred.predicted_start == 600.0

    def test_busy_single_node_preempt_class(self):
        st = status(free=0, running=[("r1", 1, 600.0, 600.0, "normal")])
        pred = predict_start(st, nodes=1, walltime=100, priority_class="preempt")
        assert pred.predicted_start == 0.0  # preemption frees the node now

    def test_preempt_cannot_evict_high(self):
        st = status(free=0, running=[("r1", 1, 600.0, 600.0, "high")])
        pred = predict_start(st, nodes=1, walltime=100, priority_class="preempt")
        assert pred.predicted_start == 600.0

    def test_infeasible(self):
        with pytest.raises(InfeasibleOnMachine):
            predict_start(status(free=4), nodes=5, walltime=10, priority_class="normal")

    @pytest.mark.parametrize("seed", range(60))
    def test_exact_against_simulator(self, seed):
        rng = random.Random(10_000 + seed)
        fleet = random_loaded_machine(rng)
        machine = fleet.machine("m0")
        snap = machine.query_status()
        total = snap.total_nodes
        nodes = rng.randint(1, total)
        wall = rng.randint(20, 300)
        cls = rng.choice(["normal", "high", "preempt"])
        pred = predict_start(snap, nodes=nodes, walltime=wall, priority_class=cls)
        actual = actual_start_time(fleet, "m0", SimJob(
            job_id="candidate", nodes_requested=nodes, walltime_estimate=wall,
            actual_runtime=wall, priority_class=cls))
        assert pred.predicted_start == actual, (seed, nodes, wall, cls)


def brute_force_choice(nodes, walltime, deadline, max_priority, k, statuses,
                       classes=("normal", "high", "preempt")):
    """Oracle: enumerate every (machine, class) pair exhaustively."""
    table = {}
    for cls in classes:
        for st in statuses:
            if not st.healthy or nodes > st.total_nodes:
                continue
            p = predict_start(st, nodes, walltime, cls, classes)
            table[(st.machine_id, cls)] = p.predicted_completion
    if not table:
        return None
    max_idx = classes.index(max_priority)
    for cls in classes[:max_idx + 1]:
        per_cls = {m: c for (m, c2), c in table.items() if c2 == cls}
        if per_cls and min(per_cls.values()) <= deadline:
            ranked = sorted(per_cls.items(), key=lambda mc: (mc[1], mc[0]))
            return cls, [m for m, _ in ranked[:k]], False
    cls = classes[max_idx]
    per_cls = {m: c for (m, c2), c in table.items() if c2 == cls}
    ranked = sorted(per_cls.items(), key=lambda mc: (mc[1], mc[0]))
    return cls, [m for m, _ in ranked[:k]], True


class TestSelectPlacement:
    def test_argmin_both_meet_deadline(self):
        sa = status(machine_id="a", free=4)
        sb = status(machine_id="b", free=0, running=[("r", 4, 100.0, 100.0, "normal")])
        choice = select_placement(nodes=1, walltime=100, deadline=1000,
                                  max_priority="preempt", k=1, statuses=[sb, sa])
        assert choice.priority_class == "normal"
        assert choice.machines == ["a"]
        assert not choice.at_risk

    def test_tie_breaks_lexicographically(self):
        sa = status(machine_id="beta", free=4)
        sb = status(machine_id="alpha", free=4)
        choice = select_placement(nodes=1, walltime=100, deadline=1000,
                                  max_priority="high", k=1, statuses=[sa, sb])
        assert choice.machines == ["alpha"]

    def test_escalates_to_meeting_class(self):
        # normal misses the deadline everywhere; high on "b" meets it
        sa = status(machine_id="a", free=0,
                    running=[("r1", 1, 500.0, 500.0, "high")],
                    queued={"normal": [], "high": [("q1", 1, 500.0)], "preempt": []})
        sb = status(machine_id="b", free=0,
                    running=[("r2", 1, 300.0, 300.0, "normal")],
                    queued={"normal": [("q2", 1, 400.0)], "high": [], "preempt": []})
        choice = select_placement(nodes=1, walltime=100, deadline=450,
                                  max_priority="preempt", k=1, statuses=[sa, sb])
        oracle = brute_force_choice(1, 100, 450, "preempt", 1, [sa, sb])
        assert (choice.priority_class, choice.machines, choice.at_risk) == oracle
        assert choice.priority_class != "normal"

    def test_deadline_unreachable_flags_at_risk(self):
        sa = status(machine_id="a", free=0, running=[("r1", 4, 900.0, 900.0, "high")])
        choice = select_placement(nodes=4, walltime=100, deadline=200,
                                  max_priority="preempt", k=1, statuses=[sa])
        assert choice.at_risk
        assert choice.priority_class == "preempt"

    def test_no_healthy_machines(self):
        with pytest.raises(NoHealthyMachines):
            select_placement(1, 10, 100, "normal", 1, statuses=[status(healthy=False)])

    def test_infeasible_everywhere(self):
        with pytest.raises(InfeasibleRequest):
            select_placement(9, 10, 100, "normal", 1, statuses=[status(free=4)])

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_brute_force(self, seed):
        rng = random.Random(33_000 + seed)
        statuses = []
        for i in range(rng.randint(1, 4)):
            fleet = random_loaded_machine(rng, machine_id=f"m{i}")
            statuses.append(fleet.machine(f"m{i}").query_status())
        biggest = max(s.total_nodes for s in statuses)
        nodes = rng.randint(1, biggest)
        wall = rng.randint(20, 300)
        deadline = rng.randint(50, 1200)
        max_priority = rng.choice(["normal", "high", "preempt"])
        k = rng.randint(1, len(statuses))
        oracle = brute_force_choice(nodes, wall, deadline, max_priority, k, statuses)
        if oracle is None:
            with pytest.raises(InfeasibleRequest):
                select_placement(nodes, wall, deadline, max_priority, k, statuses)
            return
        choice = select_placement(nodes, wall, deadline, max_priority, k, statuses)
        assert (choice.priority_class, choice.machines, choice.at_risk) == oracle


class TestTokenArithmetic:
    def test_multiplier_table(self):
        assert placement_cost(2, 100, "normal") == 200
        assert placement_cost(2, 100, "high") == 400
        assert placement_cost(2, 100, "preempt") == 800

    def test_custom_multipliers(self):
        assert placement_cost(1, 50, "high", {"high": 3.0}) == 150
