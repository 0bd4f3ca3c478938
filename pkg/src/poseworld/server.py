"""Streaming session service.

Plain request/response endpoints:
    GET  /health                      -> {"status","engine_version"}
    POST /session {"config": {...}}   -> {"id","config"} (flat-key overrides)
    GET  /session/{id}/config         -> {"id","config","engine_version"}
    POST /session/{id}/snapshot       -> {"path","entries"} (memory pool dump)

Bidirectional stream (JSON text frames over a WebSocket):
    client -> {"type":"action","keys":[...],"dx":n,"dy":n,"dt":s} | {"type":"reset"}
    server -> {"type":"frame","index":i,"pose":[tx,ty,tz,qw,qx,qy,qz],
               "png":base64,"retrieved":[ids],"step_ms":ms}
            | {"type":"error","code":c,"detail":d}

Generation is action-paced: one stage advance per r received actions, so a
slow consumer simply slows the loop down; actions are never dropped and
frames buffer no further than the transport send queue.
"""

from __future__ import annotations

import base64
import io
import itertools
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from . import __version__
from .actions import InputState
from .config import SessionConfig, apply_overrides
from .formats import pose_to_seven
from .memory import save_pool
from .rollout import RolloutEngine


def _encode_png(pixels: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class Session:
    def __init__(self, sid: str, config: SessionConfig):
        self.id = sid
        self.config = config
        self.engine = RolloutEngine(config)
        self.streaming = False
        self.lock = threading.Lock()

    def reset(self) -> None:
        self.engine = RolloutEngine(self.config)

    def frame_message(self, ev) -> dict:
        return {
            "type": "frame",
            "index": ev.index,
            "pose": pose_to_seven(ev.pose),
            "png": _encode_png(ev.pixels),
            "retrieved": list(ev.retrieved),
            "step_ms": ev.step_ms,
        }


def _parse_action(msg: dict) -> InputState:
    keys = msg.get("keys", [])
    if not isinstance(keys, list) or not all(isinstance(k, str) for k in keys):
        raise ValueError("keys must be a list of strings")
    return InputState(
        keys=frozenset(keys),
        mouse_dx=float(msg.get("dx", 0)),
        mouse_dy=float(msg.get("dy", 0)),
        dt=float(msg.get("dt", 0.05)),
    )


def make_app(base_config: SessionConfig | None = None, ui_dir: str | None = None,
             snapshot_dir: str = ".") -> FastAPI:
    base = (base_config or SessionConfig()).validate()
    app = FastAPI(title="poseworld session service", version=__version__)
    sessions: dict = {}
    ids = itertools.count()
    snap_root = Path(snapshot_dir)

    @app.get("/health")
    def health():
        return {"status": "ok", "engine_version": __version__}

    @app.post("/session")
    def create_session(body: dict | None = None):
        overrides = (body or {}).get("config", {})
        try:
            cfg = apply_overrides(base, overrides)
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        sid = str(next(ids))
        sessions[sid] = Session(sid, cfg)
        return {"id": sid, "config": cfg.to_dict()}

    def _get(sid: str) -> Session:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"no session {sid}")
        return sess

    @app.get("/session/{sid}/config")
    def session_config(sid: str):
        sess = _get(sid)
        return {"id": sid, "config": sess.config.to_dict(),
                "engine_version": __version__}

    @app.post("/session/{sid}/snapshot")
    def snapshot(sid: str, body: dict | None = None):
        sess = _get(sid)
        name = (body or {}).get("path", f"pool_{sid}.bin")
        path = snap_root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with sess.lock:
            save_pool(path, sess.engine.pool, sess.config.r,
                      sess.engine.latent_shape)
            entries = len(sess.engine.pool)
        return {"path": str(path), "entries": entries}

    @app.websocket("/session/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        sess = sessions.get(sid)
        if sess is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        if sess.streaming:
            await ws.send_json({"type": "error", "code": "busy",
                                "detail": "session already has an active stream"})
            await ws.close()
            return
        sess.streaming = True
        try:
            while True:
                try:
                    msg = await ws.receive_json()
                except WebSocketDisconnect:
                    raise
                except Exception as exc:  # malformed frame: report and close
                    await ws.send_json({"type": "error", "code": "bad-message",
                                        "detail": str(exc)})
                    break
                try:
                    mtype = msg.get("type")
                    if mtype == "action":
                        with sess.lock:
                            events = sess.engine.push_action(_parse_action(msg))
                        for ev in events:
                            await ws.send_json(sess.frame_message(ev))
                    elif mtype == "reset":
                        with sess.lock:
                            sess.reset()
                    else:
                        raise ValueError(f"unknown message type {mtype!r}")
                except WebSocketDisconnect:
                    raise
                except Exception as exc:  # per-session error event, then close
                    await ws.send_json({"type": "error",
                                        "code": type(exc).__name__,
                                        "detail": str(exc)})
                    break
        except WebSocketDisconnect:
            pass
        finally:
            sess.streaming = False
            try:
                await ws.close()
            except RuntimeError:
                pass

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(host: str, port: int, config: SessionConfig, ui_dir: str | None = None,
          snapshot_dir: str = ".") -> None:
    import uvicorn

    app = make_app(config, ui_dir=ui_dir, snapshot_dir=snapshot_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
