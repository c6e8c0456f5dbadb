"""Command line interface.

Local commands (``scenario run``, ``replay``, ``compact``, ``serve``)
operate on scenario files and store directories directly; client
commands (``incident``, ``source``, ``ingest``, ``job``) talk to a
running server and mirror the HTTP API one to one.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import click
import httpx
import yaml

from .errors import CorruptRecord
from .scenario import build_world, parse_scenario, play_script, run_scenario
from .state import SystemState, apply
from .store.log import EventStore, replay_records
from .world import World

DEFAULT_SERVER = "http://127.0.0.1:8000"


@click.group()
def main():
    """Federated urgent-computing orchestrator."""


# -- local commands ---------------------------------------------------------


@main.command("serve")
@click.option("--scenario", "scenario_file", type=click.Path(exists=True),
              help="Scenario file to preload (fleet, incidents, script).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--token", default=None, help="Static bearer token for the API.")
@click.option("--data-dir", type=click.Path(), default=None,
              help="Directory for the store, blobs and logs.")
@click.option("--auto-advance", type=float, default=0.0, show_default=True,
              help="Simulated seconds advanced per wall-clock second.")
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="Directory with the built dashboard (served at /ui).")
def serve(scenario_file, host, port, token, data_dir, auto_advance, ui_dir):
    """Run the HTTP service (and optionally drive simulated time)."""
    import uvicorn

    from .gateway.api import create_app

    store = None
    if data_dir:
        store = EventStore(Path(data_dir) / "store")
    if scenario_file:
        scenario = parse_scenario(Path(scenario_file).read_text())
        world = build_world(scenario, store=store, data_dir=data_dir)
        play_script(world, scenario)
    else:
        world = World(store=store, data_dir=data_dir)
        world.start()
    if ui_dir is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        if bundled.is_dir():
            ui_dir = bundled

    if auto_advance > 0:
        def ticker():
            while True:
                time.sleep(1.0)
                world.advance_by(auto_advance)
        threading.Thread(target=ticker, daemon=True).start()

    app = create_app(world, token=token, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group("scenario")
def scenario_group():
    """Scenario file operations."""


@scenario_group.command("run")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="Directory for logs, blobs and the event store.")
def scenario_run(scenario_file, out):
    """Drive a scenario end to end and write its logs."""
    scenario = parse_scenario(Path(scenario_file).read_text())
    store = EventStore(Path(out) / "store") if out else None
    result = run_scenario(scenario, store=store, data_dir=out)
    world = result.world
    if out:
        result.write(out)
    requests = world.state.requests
    by_state: dict[str, int] = {}
    for record in requests.values():
        by_state[record["federated_state"]] = by_state.get(record["federated_state"], 0) + 1
    click.echo(f"simulated time: {world.clock.now:g} s")
    click.echo(f"records: {world.store.last_seq}, fleet transitions: "
               f"{len(result.fleet_log_lines)}")
    click.echo(f"requests: {json.dumps(by_state, sort_keys=True)}")
    click.echo(f"ensembles: {len(world.state.ensembles)}, "
               f"alerts: {len(world.state.alerts)}")
    if out:
        click.echo(f"logs written to {out}")


@main.command("replay")
@click.argument("store_dir", type=click.Path(exists=True))
@click.option("--from-seq", default=0, show_default=True)
def replay_cmd(store_dir, from_seq):
    """Rebuild orchestrator state from a store directory."""
    try:
        records, truncated = replay_records(store_dir, strict=False)
    except CorruptRecord as err:
        raise click.ClickException(str(err))
    state = SystemState()
    for record in records:
        if record.seq > from_seq:
            apply(state, record)
    if truncated is not None:
        click.echo(f"warning: log truncated after seq {truncated}")
    snapshot = state.snapshot()
    click.echo(f"replayed {len(records)} records")
    click.echo(f"incidents: {len(snapshot['incidents'])}, "
               f"requests: {len(snapshot['requests'])}, "
               f"ensembles: {len(snapshot['ensembles'])}, "
               f"members: {len(snapshot['members'])}")
    states: dict[str, int] = {}
    for record in snapshot["requests"].values():
        states[record["federated_state"]] = states.get(record["federated_state"], 0) + 1
    click.echo(f"request states: {json.dumps(states, sort_keys=True)}")


@main.command("compact")
@click.argument("store_dir", type=click.Path(exists=True))
def compact_cmd(store_dir):
    """Write a checkpoint of the store's current state."""
    store = EventStore(store_dir)
    state = SystemState()
    for record in store.records:
        apply(state, record)
    store.checkpoint_provider = state.snapshot
    path = store.write_checkpoint()
    click.echo(f"checkpoint written: {path}")


# -- client commands -----------------------------------------------------------

def _client(ctx) -> httpx.Client:
    headers = {}
    if ctx.obj.get("token"):
        headers["Authorization"] = f"Bearer {ctx.obj['token']}"
    return httpx.Client(base_url=ctx.obj["server"], headers=headers, timeout=30.0)


def _server_options(fn):
    fn = click.option("--server", default=DEFAULT_SERVER, show_default=True)(fn)
    fn = click.option("--token", default=None)(fn)
    return fn


def _call(ctx, method, path, **kwargs):
    with _client(ctx) as client:
        response = client.request(method, path, **kwargs)
    if response.status_code >= 400:
        raise click.ClickException(f"{response.status_code}: {response.text}")
    click.echo(json.dumps(response.json(), indent=2, sort_keys=True))


@main.group("incident")
@_server_options
@click.pass_context
def incident_group(ctx, server, token):
    """Incident management."""
    ctx.obj = {"server": server, "token": token}


@incident_group.command("create")
@click.option("--label", required=True)
@click.option("--tokens", type=float, required=True)
@click.option("--ruleset", default=None)
@click.option("--incident-id", default=None)
@click.pass_context
def incident_create(ctx, label, tokens, ruleset, incident_id):
    _call(ctx, "POST", "/incidents", json={
        "label": label, "tokens": tokens, "ruleset": ruleset,
        "incident_id": incident_id})


@incident_group.command("list")
@click.pass_context
def incident_list(ctx):
    _call(ctx, "GET", "/incidents")


@main.group("source")
@_server_options
@click.pass_context
def source_group(ctx, server, token):
    """Sensor source management."""
    ctx.obj = {"server": server, "token": token}


@source_group.command("register")
@click.option("--source-id", required=True)
@click.option("--incident", "incident_id", required=True)
@click.option("--kind", "content_kind", required=True)
@click.pass_context
def source_register(ctx, source_id, incident_id, content_kind):
    _call(ctx, "POST", "/sources", json={
        "source_id": source_id, "incident_id": incident_id,
        "content_kind": content_kind})


@main.group("ingest")
@_server_options
@click.pass_context
def ingest_group(ctx, server, token):
    """Sensor data ingestion."""
    ctx.obj = {"server": server, "token": token}


@ingest_group.command("send")
@click.argument("envelope_file", type=click.Path(exists=True))
@click.pass_context
def ingest_send(ctx, envelope_file):
    """Send an envelope (YAML or JSON file) to the server."""
    envelope = yaml.safe_load(Path(envelope_file).read_text())
    _call(ctx, "POST", "/ingest", json=envelope)


@main.group("job")
@_server_options
@click.pass_context
def job_group(ctx, server, token):
    """Federated job queries."""
    ctx.obj = {"server": server, "token": token}


@job_group.command("status")
@click.argument("request_id")
@click.pass_context
def job_status(ctx, request_id):
    _call(ctx, "GET", "/jobs", params={"request_id": request_id})


@job_group.command("list")
@click.option("--incident", default=None)
@click.pass_context
def job_list(ctx, incident):
    params = {} if incident is None else {"incident": incident}
    _call(ctx, "GET", "/jobs", params=params)


if __name__ == "__main__":
    main()
