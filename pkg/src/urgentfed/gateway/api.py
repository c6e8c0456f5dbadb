"""HTTP/WebSocket service surface.

Thin validated pass-throughs onto the world's command stream. The
``/stream`` socket pushes every journal record in sequence order;
clients reconnecting pass ``?after=<seq>`` and resume with no gaps or
duplicates (the backlog cut is taken under the command lock).
"""

from __future__ import annotations

import asyncio
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request, WebSocket
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from starlette.websockets import WebSocketDisconnect

from ..errors import (
    InsufficientTokens, NoHealthyMachines, NotSteerable, PayloadInvalid,
    UnknownEnsemble, UnknownIncident, UnknownMember, UnknownRequest,
    UnknownSource, UnknownTarget, UrgentFedError,
)
from ..world import World

_NOT_FOUND = (UnknownSource, UnknownIncident, UnknownRequest, UnknownEnsemble,
              UnknownMember, UnknownTarget)
_CONFLICT = (InsufficientTokens, NoHealthyMachines, NotSteerable)


def create_app(world: World, token: str | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="urgentfed", version="0.1.0")

    def authorized(request: Request):
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="bad or missing bearer token")

    def run(fn, *args, **kwargs):
        try:
            return world.command(fn, *args, **kwargs)
        except _NOT_FOUND as err:
            raise HTTPException(status_code=404, detail=str(err)) from None
        except _CONFLICT as err:
            raise HTTPException(status_code=409, detail=str(err)) from None
        except (PayloadInvalid, ValueError, UrgentFedError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from None

    @app.get("/health")
    def health():
        return {"status": "ok", "now": world.clock.now,
                "records": world.store.last_seq}

    @app.post("/control/advance", dependencies=[Depends(authorized)])
    def advance(body: dict):
        seconds = float(body.get("seconds", 0))
        if seconds < 0:
            raise HTTPException(status_code=400, detail="seconds must be >= 0")
        world.advance_by(seconds)
        return {"now": world.clock.now}

    @app.post("/incidents", dependencies=[Depends(authorized)])
    def create_incident(body: dict):
        return run(world.gateway.create_incident,
                   label=body.get("label", ""), tokens=float(body.get("tokens", 0)),
                   ruleset=body.get("ruleset"), incident_id=body.get("incident_id"))

    @app.get("/incidents", dependencies=[Depends(authorized)])
    def list_incidents():
        return {"incidents": [
            {"incident_id": incident_id, **data}
            for incident_id, data in world.state.incidents.items()]}

    @app.post("/sources", dependencies=[Depends(authorized)])
    def register_source(body: dict):
        return run(world.gateway.register_source, body["source_id"],
                   body["incident_id"], body["content_kind"])

    @app.post("/ingest", dependencies=[Depends(authorized)])
    def ingest(body: dict):
        return run(world.gateway.ingest, body)

    @app.post("/commands", dependencies=[Depends(authorized)])
    def command(body: dict):
        return run(world.gateway.operator_command, body)

    @app.post("/definitions", dependencies=[Depends(authorized)])
    def reload_definitions(body: dict):
        return run(world.reload_definitions, body)

    @app.get("/machines", dependencies=[Depends(authorized)])
    def machines():
        return {"machines": [
            {"machine_id": machine_id, **data}
            for machine_id, data in sorted(world.state.machines.items())]}

    @app.get("/jobs", dependencies=[Depends(authorized)])
    def jobs(incident: str | None = None, request_id: str | None = None):
        if request_id is not None:
            return run(world.federator.job_status, request_id)
        records = world.state.requests
        return {"jobs": [
            {"request_id": rid, **record} for rid, record in records.items()
            if incident is None or record["incident_id"] == incident]}

    @app.get("/ensembles", dependencies=[Depends(authorized)])
    def ensembles():
        out = []
        for ensemble_id, ens in world.state.ensembles.items():
            members = [{"member_id": m, **world.state.members[m]}
                       for m in ens["members"]]
            out.append({"ensemble_id": ensemble_id, **ens, "members": members})
        return {"ensembles": out}

    @app.get("/events", dependencies=[Depends(authorized)])
    def events(kind: str | None = None, incident: str | None = None,
               after: int = 0, limit: int = Query(default=100, le=1000)):
        found = []
        for record in world.store.read(from_seq=after, kinds={"wf_event"}):
            event = record.body["event"]
            if kind is not None and event["kind"] != kind:
                continue
            if incident is not None and event["payload"].get("incident_id") != incident:
                continue
            found.append({"seq": record.seq, **event})
            if len(found) >= limit:
                break
        next_after = found[-1]["seq"] if found else after
        return {"events": found, "next_after": next_after}

    @app.get("/alerts", dependencies=[Depends(authorized)])
    def alerts():
        return {"alerts": [dict(a, index=i)
                           for i, a in enumerate(world.state.alerts)]}

    @app.get("/records", dependencies=[Depends(authorized)])
    def records(after: int = 0, limit: int = Query(default=500, le=5000)):
        out = [dict(r) for r in world.store.read(from_seq=after)][:limit]
        return {"records": out,
                "next_after": out[-1]["seq"] if out else after}

    @app.websocket("/stream")
    async def stream(ws: WebSocket, after: int = 0):
        if token is not None and ws.query_params.get("token") != token:
            await ws.close(code=4401)
            return
        await ws.accept()
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()

        def push(record):
            loop.call_soon_threadsafe(queue.put_nowait, dict(record))

        backlog = world.subscribe_from(after, push)

        async def reader():
            # client messages: only ping/pong; routed through the same
            # outbound queue so there is exactly one sender
            while True:
                message = await ws.receive_text()
                if message == "ping":
                    queue.put_nowait({"kind": "pong"})

        reader_task = asyncio.create_task(reader())
        try:
            for record in backlog:
                await ws.send_json(record)
            while not reader_task.done():
                try:
                    record = await asyncio.wait_for(queue.get(), timeout=0.2)
                except asyncio.TimeoutError:
                    continue
                await ws.send_json(record)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            reader_task.cancel()
            world.store.unsubscribe(push)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def index():
            return FileResponse(str(Path(ui_dir) / "index.html"))

    return app
