"""Machine-side workload runtime.

Represents what actually executes on the (simulated) HPC machines: it
watches the fleet's transition log, and when a job carrying a workload
payload starts it brings up the matching runner. Fire members step
their automaton on the shared clock, poll their steering inbox at every
frame boundary and push encoded telemetry frames; weather jobs produce
their forecast when the machine reports completion. The orchestrator
side never reaches in here except through the frame/inbox channel and
the job payload, mirroring how real codes would be wired up.
"""

from __future__ import annotations

import json

from ..errors import UrgentFedError
from ..ensemble.frames import DTYPE_U8, TelemetryFrame, encode_frame
from ..workloads.fire import WindField, fire_step, ignite, parse_grid
from ..workloads.weather import weather_stub


class WorkloadHost:
    def __init__(self, fleet, clock):
        self.fleet = fleet
        self.clock = clock
        self.manager = None      # ensemble manager (telemetry/steering channel)
        self.state = None        # orchestrator state, read-only
        self.blobs = None        # blob store for artifact files
        self.grids: dict[str, str] = {}
        self._runners: dict[str, "FireRunner"] = {}
        self._outputs: dict[str, dict] = {}
        fleet.log.listeners.append(self._on_transition)

    def attach(self, manager, state, blobs, grids: dict[str, str]) -> None:
        self.manager = manager
        self.state = state
        self.blobs = blobs
        self.grids = grids

    def detach(self) -> None:
        """The orchestrator went away: runners keep computing on their
        machines, but the telemetry/steering channel is down."""
        self.manager = None

    # -- fleet transition hook -------------------------------------------

    def _on_transition(self, entry) -> None:
        machine = self.fleet.machines.get(entry.machine_id)
        if machine is None:
            return
        job = machine.jobs.get(entry.job_id)
        if job is None or not job.payload:
            return
        if entry.transition == "started":
            self._job_started(entry.machine_id, job)
        elif entry.transition == "completed":
            self._job_completed(job)

    def _job_started(self, machine_id: str, job) -> None:
        payload = job.payload
        if payload.get("kind") == "member":
            member_id = payload["member_id"]
            member = self.state.members.get(member_id)
            if member is None or member["state"] != "live":
                return
            runner = FireRunner(self, machine_id, job, member_id)
            self._runners[job.job_id] = runner
            runner.start()

    def _job_completed(self, job) -> None:
        payload = job.payload
        if payload.get("kind") == "activity":
            instance_id = payload["instance_id"]
            if instance_id not in self._outputs:
                self._outputs[instance_id] = self._compute_activity(instance_id)

    # -- activity execution ------------------------------------------------

    def activity_outputs(self, instance_id: str) -> dict:
        """Outputs of a federated activity job; recomputed on demand so a
        recovered server gets identical results (the computations are
        pure functions of the recorded inputs)."""
        if instance_id not in self._outputs:
            self._outputs[instance_id] = self._compute_activity(instance_id)
        return self._outputs[instance_id]

    def _compute_activity(self, instance_id: str) -> dict:
        instance = self.state.activities[instance_id]
        params = instance.get("workload_params") or {}
        workload = params.get("workload")
        if workload == "weather":
            return self._run_weather(instance_id, params)
        raise ValueError(f"unknown federated workload {workload!r}")

    def _run_weather(self, instance_id: str, params: dict) -> dict:
        region = params.get("region", "unknown")
        votes: list[str] = []
        obs_path = params.get("observations")
        if obs_path:
            obs = json.loads(self.blobs.read(obs_path))
            votes = obs.get("wind_votes", [])
        field = weather_stub(region, votes, seed=int(params.get("seed", 0)))
        forecast = {"region": field.region_id, "direction": field.direction,
                    "strength": field.strength}
        path = self.blobs.put(f"{instance_id}.forecast.json",
                              json.dumps(forecast, sort_keys=True))
        outputs = {"forecast": path, "region": region,
                   "wind_direction": field.direction,
                   "wind_strength": field.strength}
        if params.get("perimeter"):
            outputs["perimeter"] = params["perimeter"]
        return outputs


class FireRunner:
    """One member's compute loop on the shared clock.

    Each tick: poll the steering inbox and apply anything new in issue
    order, advance the automaton one step, emit a telemetry frame.
    Stops silently when the underlying machine job is no longer running
    (cancel, preemption, outage) and resumes its frame numbering from
    the manager's last accepted sequence when restarted from scratch.
    """

    def __init__(self, host: WorkloadHost, machine_id: str, job, member_id: str):
        self.host = host
        self.machine_id = machine_id
        self.job = job
        self.member_id = member_id
        member = host.state.members[member_id]
        self.params = dict(member["params"])
        self.applied = set(member["applied_messages"])
        self.seq = member["last_frame_seq"]
        self.seed = member["seed"]
        self.step = 0
        self.total_steps = int(self.params.get("steps", 10))
        self.step_duration = float(self.params.get("step_duration", 20))
        grid_name = self.params.get("grid")
        text = host.grids.get(grid_name) if grid_name else None
        if text is None:
            text = "." * 15 + "\n" + "\n".join("." * 15 for _ in range(13)) + "\n" + "." * 15
        self.grid = parse_grid(text, seed=self.seed)
        if self.params.get("ignite_cells"):
            ignite(self.grid, [tuple(c) for c in self.params["ignite_cells"]])
        if self.grid.count(1) == 0:  # nothing burning: light the centre
            ignite(self.grid, [(self.grid.width // 2, self.grid.height // 2)])

    def start(self) -> None:
        self.host.clock.schedule_in(self.step_duration, self._tick)

    def _alive(self) -> bool:
        return self.job.state == "running"

    def _tick(self) -> None:
        if not self._alive():
            return
        channel_up = self.host.manager is not None
        if channel_up:
            self._poll_inbox()
        wind = WindField(self.params.get("region", "r"),
                         self.params.get("wind_direction", "calm"),
                         float(self.params.get("wind_strength", 0.0)))
        self.grid = fire_step(self.grid, wind, float(self.params.get("spread_prob", 0.35)))
        self.step += 1
        self.seq += 1
        if channel_up:
            # fire and forget: frames during an orchestrator blackout are
            # simply lost, the sequence resumes with a gap
            frame = TelemetryFrame(member_id=self.member_id, seq=self.seq,
                                   sim_time=self.host.clock.now,
                                   height=self.grid.height, width=self.grid.width,
                                   cells=list(self.grid.cells))
            self.host.manager.accept_frame(encode_frame(frame, DTYPE_U8))
        if self.step < self.total_steps:
            self.host.clock.schedule_in(self.step_duration, self._tick)

    def _poll_inbox(self) -> None:
        text = self.host.manager.pending_messages(self.member_id)
        if not text:
            return
        for line in text.splitlines():
            message = json.loads(line)
            if message["message_id"] in self.applied:
                continue
            # commit first: the manager's applied record is the
            # authoritative dedup across restarts, so a message may only
            # take local effect once its commit has succeeded; if a
            # commit cannot be recorded the rest of the boundary is
            # abandoned rather than applied out of order
            try:
                self.host.manager.ack_steering(self.member_id,
                                               message["message_id"],
                                               step=self.step)
            except UrgentFedError:
                break
            self.applied.add(message["message_id"])
            self._apply(message["payload"])

    def _apply(self, payload: dict) -> None:
        for name, value in payload.items():
            if name == "ignite_cells":
                ignite(self.grid, [tuple(c) for c in value])
            else:
                self.params[name] = value
