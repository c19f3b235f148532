"""WebSocket inference service.

Protocol (text frames, JSON): the client opens with
``{"type":"hello","layout":"holistic543","stride":5}``; the server answers
``{"type":"ready","classes":[...]}`` and thereafter every
``{"type":"frame","t":N,"lm":[[x,y,z],...]}`` may yield
``{"type":"prediction","window_end":N,"label":"...","probs":[...],
"latency_ms":F}``. Violations close the socket: 4001 layout mismatch,
4002 bad value, 4003 protocol order. The server pings every 10 s
(protocol-level, configured on the runner).

Each connection owns one StreamingEngine; the model is shared read-only,
so sessions never block each other.
"""

import json
import logging

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .errors import (
    DegenerateFrameError,
    ImputationRequiredError,
    LayoutError,
    ParseError,
    SignkitError,
)
from .keypoints import get_layout, parse_frame_record
from .model import Model
from .stream import StreamConfig, StreamingEngine

logger = logging.getLogger(__name__)

CLOSE_LAYOUT = 4001
CLOSE_BAD_VALUE = 4002
CLOSE_PROTOCOL = 4003

HEARTBEAT_SECONDS = 10.0


def create_app(model: Model, config: StreamConfig = StreamConfig()) -> FastAPI:
    app = FastAPI(title="signkit streaming inference")

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "classes": list(
                model.spec.class_names
                or (f"class{i}" for i in range(model.spec.classes))
            ),
            "window": config.window,
            "stride": config.stride,
        }

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        try:
            raw = await websocket.receive_text()
        except WebSocketDisconnect:
            return
        try:
            hello = json.loads(raw)
        except json.JSONDecodeError:
            await websocket.close(code=CLOSE_PROTOCOL, reason="malformed hello")
            return
        if not isinstance(hello, dict) or hello.get("type") != "hello":
            await websocket.close(code=CLOSE_PROTOCOL, reason="expected hello first")
            return
        try:
            layout = get_layout(hello.get("layout", ""))
            stride = int(hello.get("stride", config.stride))
            if stride < 1:
                raise ParseError("stride must be >= 1")
            session_config = StreamConfig(
                window=config.window,
                stride=stride,
                target_len=config.target_len,
                norm=config.norm,
                kalman=config.kalman,
                keep_blocks=config.keep_blocks,
            )
            engine = StreamingEngine(model, layout, session_config)
        except LayoutError as exc:
            await websocket.close(code=CLOSE_LAYOUT, reason=str(exc)[:120])
            return
        except (SignkitError, ParseError, TypeError, ValueError) as exc:
            await websocket.close(code=CLOSE_PROTOCOL, reason=str(exc)[:120])
            return
        await websocket.send_text(
            json.dumps(
                {"type": "ready", "classes": list(engine.class_names)},
                separators=(",", ":"),
            )
        )
        while True:
            try:
                raw = await websocket.receive_text()
            except WebSocketDisconnect:
                return
            try:
                kind = json.loads(raw).get("type")
            except (json.JSONDecodeError, AttributeError):
                await websocket.close(code=CLOSE_PROTOCOL, reason="malformed frame")
                return
            if kind != "frame":
                await websocket.close(
                    code=CLOSE_PROTOCOL, reason=f"unexpected message {kind!r}"
                )
                return
            try:
                frame = parse_frame_record(raw, layout)
                prediction = engine.push(frame)
            except LayoutError as exc:
                await websocket.close(code=CLOSE_LAYOUT, reason=str(exc)[:120])
                return
            except (
                ValueError,
                ParseError,
                DegenerateFrameError,
                ImputationRequiredError,
            ) as exc:
                await websocket.close(code=CLOSE_BAD_VALUE, reason=str(exc)[:120])
                return
            if prediction is not None:
                await websocket.send_text(
                    json.dumps(
                        {
                            "type": "prediction",
                            "window_end": prediction.window_end,
                            "label": prediction.label,
                            "probs": [float(p) for p in prediction.probs],
                            "latency_ms": prediction.latency_ms,
                        },
                        separators=(",", ":"),
                    )
                )

    return app


def run_server(model: Model, config: StreamConfig, host: str = "127.0.0.1", port: int = 8765):
    """Blocking uvicorn runner with 10 s protocol pings."""
    import uvicorn

    app = create_app(model, config)
    logger.info("serving ws://%s:%d/ws", host, port)
    uvicorn.run(
        app,
        host=host,
        port=port,
        log_level="warning",
        ws_ping_interval=HEARTBEAT_SECONDS,
        ws_ping_timeout=HEARTBEAT_SECONDS * 2,
    )
