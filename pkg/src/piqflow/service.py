"""HTTP JSON API over the predictor, maps, feedback, and guided sessions.

A thin adapter: every response body is the canonical JSON serialization of
the corresponding library result. The model is loaded once and shared
read-only. Guided sessions live in memory with TTL eviction; events on one
session are serialized, a second concurrent event gets 409.
"""

from __future__ import annotations

import base64
import binascii
import io as stdio
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import FastAPI, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image

from .datamodel import CATEGORIES, ValidationError
from .feedback import (
    EVENTS,
    GuidedSessionState,
    build_report,
    guided_step,
    localized_feedback,
    quality_bucket,
    region_grid_3x3,
    select_best_frame,
)
from .maps import all_maps
from .model import MODEL_VERSION, ModelParams, predict

DEFAULT_MAX_IMAGE_BYTES = 20 * 1024 * 1024
DEFAULT_SESSION_TTL_S = 30 * 60

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def _canonical(obj) -> Response:
    return Response(content=json.dumps(obj, sort_keys=True, separators=(",", ":")),
                    media_type="application/json")


def _error(status: int, message: str) -> Response:
    return Response(
        content=json.dumps({"error": message}, sort_keys=True,
                           separators=(",", ":")),
        media_type="application/json", status_code=status,
    )


def _decode_image(data: bytes, max_bytes: int) -> tuple[np.ndarray | None, Response | None]:
    if len(data) > max_bytes:
        return None, _error(413, f"image exceeds {max_bytes} bytes")
    if not data:
        return None, _error(422, "empty image body")
    if not (data.startswith(_PNG_MAGIC) or data.startswith(_JPEG_MAGIC)):
        return None, _error(422, "only PNG and JPEG images are accepted")
    try:
        with Image.open(stdio.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB")), None
    except Exception:
        return None, _error(422, "undecodable image")


@dataclass
class _SessionEntry:
    state: GuidedSessionState = field(default_factory=GuidedSessionState)
    lock: threading.Lock = field(default_factory=threading.Lock)
    touched: float = field(default_factory=time.monotonic)


class _SessionStore:
    """In-memory sessions with lazy TTL eviction."""

    def __init__(self, ttl_s: float):
        self.ttl_s = ttl_s
        self._sessions: dict[str, _SessionEntry] = {}
        self._guard = threading.Lock()

    def _sweep(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, e in self._sessions.items()
                if now - e.touched > self.ttl_s]
        for sid in dead:
            del self._sessions[sid]

    def create(self) -> str:
        with self._guard:
            self._sweep()
            sid = uuid.uuid4().hex
            self._sessions[sid] = _SessionEntry()
            return sid

    def get(self, sid: str) -> _SessionEntry | None:
        with self._guard:
            self._sweep()
            entry = self._sessions.get(sid)
            if entry is not None:
                entry.touched = time.monotonic()
            return entry


def create_app(params: ModelParams,
               max_image_bytes: int = DEFAULT_MAX_IMAGE_BYTES,
               session_ttl_s: float = DEFAULT_SESSION_TTL_S,
               cors_origins: list[str] | None = None) -> FastAPI:
    """Build the API around one immutable model."""
    app = FastAPI(title="piqflow", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions = _SessionStore(session_ttl_s)

    @app.get("/health")
    def health():
        return _canonical({"status": "ok", "model_version": MODEL_VERSION,
                           "feature_config": params.feature_config})

    @app.post("/predict")
    async def predict_endpoint(request: Request, tile: int | None = None):
        pixels, err = _decode_image(await request.body(), max_image_bytes)
        if err:
            return err
        try:
            quality, dist = predict(params, pixels)
        except ValidationError as exc:
            return _error(400, str(exc))
        obj = {"quality": quality, "bucket": quality_bucket(quality).value,
               "distortions": {c: float(d) for c, d in zip(CATEGORIES, dist)}}
        if tile is not None:
            try:
                qmap, dmaps = all_maps(params, pixels, tile)
            except (ValidationError, RuntimeError) as exc:
                return _error(400, str(exc))
            obj["grid"] = {
                "N": tile,
                "quality": qmap.grid.tolist(),
                "distortions": {c: m.grid.tolist() for c, m in dmaps.items()},
            }
        return _canonical(obj)

    @app.post("/feedback")
    async def feedback_endpoint(request: Request, localized: bool = False):
        pixels, err = _decode_image(await request.body(), max_image_bytes)
        if err:
            return err
        try:
            quality, dist = predict(params, pixels)
            report = build_report(quality, dist)
            if localized:
                grids = region_grid_3x3(params, pixels)
                ranked = {r.category: grids[r.category] for r in report.ranked
                          if r.category in grids}
                report = replace(report,
                                 localized=tuple(localized_feedback(ranked)))
        except ValidationError as exc:
            return _error(400, str(exc))
        return _canonical(report.to_json_obj())

    @app.post("/sessions")
    def create_session():
        return _canonical({"session_id": sessions.create()})

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        entry = sessions.get(sid)
        if entry is None:
            return _error(404, f"unknown session {sid}")
        st = entry.state
        return _canonical({"state": st.state, "attempts": st.attempts,
                           "last_quality": st.last_quality})

    @app.post("/sessions/{sid}/events")
    async def post_event(sid: str, request: Request):
        entry = sessions.get(sid)
        if entry is None:
            return _error(404, f"unknown session {sid}")
        try:
            body = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError:
            return _error(400, "malformed JSON body")
        if not isinstance(body, dict) or "event" not in body:
            return _error(400, "body must be a JSON object with an 'event' field")
        event = body["event"]
        if event not in EVENTS:
            return _error(400, f"unknown event {event!r}")

        pixels = None
        if "image" in body and body["image"] is not None:
            try:
                raw = base64.b64decode(body["image"], validate=True)
            except (binascii.Error, TypeError):
                return _error(422, "image must be base64-encoded PNG or JPEG")
            pixels, err = _decode_image(raw, max_image_bytes)
            if err:
                return err

        if not entry.lock.acquire(blocking=False):
            return _error(409, "another event on this session is in flight")
        try:
            new_state, output = guided_step(entry.state, event,
                                            params=params, pixels=pixels)
            if "error" in output:
                return _error(400, output["error"])
            entry.state = new_state
            return _canonical(output)
        finally:
            entry.lock.release()

    @app.post("/select-frame")
    async def select_frame_endpoint(frames: list[UploadFile]):
        if not frames:
            return _error(400, "no frames uploaded")
        images = []
        for f in frames:
            pixels, err = _decode_image(await f.read(), max_image_bytes)
            if err:
                return err
            images.append(pixels)
        index, quality, bucket = select_best_frame(images, params)
        return _canonical({"index": index, "quality": quality, "bucket": bucket})

    return app
