"""HTTP + WebSocket transport for the gateway protocol.

One JSON object per message. Request/response goes over POST /v1/message;
StateView, TelemetryView, and CardView pushes also fan out to WebSocket
subscribers on /v1/push/{session_id}.
"""

from __future__ import annotations

import asyncio
import json
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .data import ingest_csv
from .gateway import Gateway, GatewayConfig, GatewayError, PROTOCOL_VERSION


class CreateSessionRequest(BaseModel):
    session_id: str
    csv: Optional[str] = None


class ProtocolRequest(BaseModel):
    version: str
    kind: str
    session_id: str
    seq: int = 0
    payload: dict = {}


def create_app(config: GatewayConfig = GatewayConfig()) -> FastAPI:
    app = FastAPI(title="keyhole gateway", version=PROTOCOL_VERSION)
    gateway = Gateway(config)
    subscribers: Dict[str, List[asyncio.Queue]] = {}

    def push(message: dict) -> None:
        for queue in subscribers.get(message["session_id"], []):
            queue.put_nowait(message)

    gateway.push_listeners.append(push)
    app.state.gateway = gateway

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "version": PROTOCOL_VERSION}

    @app.post("/v1/sessions")
    def create_session(req: CreateSessionRequest) -> dict:
        dataset = ingest_csv(req.csv) if req.csv else None
        try:
            gs = gateway.create_session(req.session_id, dataset)
        except GatewayError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {
            "session_id": req.session_id,
            "state_hash": gs.session.state.state_hash,
            "columns": list(dataset.column_names()) if dataset else [],
        }

    @app.post("/v1/message")
    def message(req: ProtocolRequest) -> dict:
        return {"messages": gateway.handle_message(req.model_dump())}

    @app.get("/v1/sessions/{session_id}/snapshot", response_class=PlainTextResponse)
    def snapshot(session_id: str) -> str:
        try:
            return gateway.snapshot(session_id)
        except GatewayError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.websocket("/v1/push/{session_id}")
    async def push_channel(ws: WebSocket, session_id: str) -> None:
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        subscribers.setdefault(session_id, []).append(queue)
        try:
            while True:
                msg = await queue.get()
                await ws.send_text(json.dumps(msg))
        except WebSocketDisconnect:
            pass
        finally:
            subscribers[session_id].remove(queue)

    return app
