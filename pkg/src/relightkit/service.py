"""HTTP API for decomposition, relighting and light transfer.

Sessions are immutable: a decompose request caches the estimated components
and pre-rendered artifact PNGs under a fresh session id; relighting is a
pure function of (session, lighting), so identical requests return identical
bytes. The cache is a TTL'd LRU guarded by one lock; the model parameters
are loaded once and only ever read.
"""

from __future__ import annotations

import hashlib
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import cv2
import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import color, renderer
from .image import ImagePlane, Mask, NormalMap
from .sh import ShLighting

API_VERSION = "v1"

#: Uploads larger than this on either side are rejected with 413.
MAX_UPLOAD_SIDE = 1024
#: Model input is downscaled to the nearest multiple of 8 at or below this.
MAX_MODEL_SIDE = 256

_ARTIFACTS = ("albedo", "normals", "shading", "reconstruction")


@dataclass(frozen=True)
class Session:
    albedo: ImagePlane
    normals: NormalMap
    mask: Mask
    lighting: ShLighting
    artifacts: dict = field(default_factory=dict)  # name -> PNG bytes
    created: float = 0.0


class SessionCache:
    """LRU with TTL; eviction happens on insert and lookup."""

    def __init__(self, max_sessions: int = 64, ttl_seconds: float = 1800.0):
        self.max_sessions = max_sessions
        self.ttl = ttl_seconds
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, Session] = OrderedDict()

    def put(self, session: Session) -> str:
        sid = uuid.uuid4().hex
        with self._lock:
            self._entries[sid] = session
            self._evict()
        return sid

    def get(self, sid: str) -> Session | None:
        with self._lock:
            entry = self._entries.get(sid)
            if entry is None:
                return None
            if time.monotonic() - entry.created > self.ttl:
                del self._entries[sid]
                return None
            self._entries.move_to_end(sid)
            return entry

    def _evict(self) -> None:
        now = time.monotonic()
        stale = [k for k, e in self._entries.items() if now - e.created > self.ttl]
        for k in stale:
            del self._entries[k]
        while len(self._entries) > self.max_sessions:
            self._entries.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _decode_upload(raw: bytes, space: str) -> ImagePlane:
    buf = np.frombuffer(raw, dtype=np.uint8)
    decoded = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED)
    if decoded is None:
        raise HTTPException(400, "could not decode image; PNG expected")
    if decoded.ndim == 3 and decoded.shape[2] == 4:
        decoded = decoded[:, :, :3]
    if decoded.ndim == 3:
        decoded = decoded[:, :, ::-1]  # BGR -> RGB
    else:
        decoded = np.repeat(decoded[:, :, None], 3, axis=2)
    h, w = decoded.shape[:2]
    if h > MAX_UPLOAD_SIDE or w > MAX_UPLOAD_SIDE:
        raise HTTPException(413, f"image too large ({w}x{h}); cap is "
                                 f"{MAX_UPLOAD_SIDE}x{MAX_UPLOAD_SIDE}")
    scale = np.iinfo(decoded.dtype).max
    values = decoded.astype(np.float64) / scale
    if space == "linear":
        return ImagePlane(values, "linear-rgb")
    return color.srgb_to_linear(ImagePlane(values, "srgb"))


def _decode_mask(raw: bytes, height: int, width: int) -> Mask:
    buf = np.frombuffer(raw, dtype=np.uint8)
    decoded = cv2.imdecode(buf, cv2.IMREAD_GRAYSCALE)
    if decoded is None:
        raise HTTPException(400, "could not decode mask; PNG expected")
    if decoded.shape != (height, width):
        decoded = cv2.resize(decoded, (width, height), interpolation=cv2.INTER_NEAREST)
    return Mask(decoded > 127)


def _model_size(side: int) -> int:
    return min(MAX_MODEL_SIDE, (side // 8) * 8)


def _resize_for_model(image: ImagePlane, mask: Mask):
    h, w = image.height, image.width
    th, tw = _model_size(h), _model_size(w)
    if th < 8 or tw < 8:
        raise HTTPException(400, f"image too small ({w}x{h}); need at least 8x8")
    if (th, tw) == (h, w):
        return image, mask
    data = cv2.resize(image.data, (tw, th), interpolation=cv2.INTER_AREA)
    bits = cv2.resize(mask.bits.astype(np.uint8), (tw, th),
                      interpolation=cv2.INTER_NEAREST) > 0
    return ImagePlane(data, image.space), Mask(bits)


def _png_bytes(plane: ImagePlane) -> bytes:
    srgb = color.to_display_srgb(plane)
    raw = np.rint(srgb.data * 255.0).astype(np.uint8)[:, :, ::-1]
    ok, buf = cv2.imencode(".png", raw)
    if not ok:
        raise HTTPException(500, "PNG encoding failed")
    return buf.tobytes()


def _normals_png_bytes(normals: NormalMap) -> bytes:
    raw = np.rint(np.clip((normals.data + 1.0) / 2.0, 0.0, 1.0) * 255.0)
    ok, buf = cv2.imencode(".png", raw.astype(np.uint8)[:, :, ::-1])
    if not ok:
        raise HTTPException(500, "PNG encoding failed")
    return buf.tobytes()


def _parse_lighting(values) -> ShLighting:
    if not isinstance(values, (list, tuple)) or len(values) != 27:
        raise HTTPException(400, "lighting must be an array of 27 floats")
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise HTTPException(400, "lighting coefficients must be finite")
    return ShLighting.from_flat(arr)


def _render_session_png(session: Session, lighting: ShLighting) -> bytes:
    out = renderer.relight(session.albedo, session.normals, lighting, session.mask)
    return _png_bytes(out)


def create_app(checkpoint_path: str | None = None, params=None, decomposer=None,
               static_dir: str | None = None, max_sessions: int = 64,
               session_ttl: float = 1800.0) -> FastAPI:
    """Build the service.

    Exactly one of ``checkpoint_path`` / ``params`` / ``decomposer`` must
    provide the decomposition backend; ``decomposer(image, mask)`` returns
    ``(albedo, normals, light)``.
    """
    checkpoint_hash = "none"
    if decomposer is None:
        from .model import decompose_single
        if params is None:
            if checkpoint_path is None:
                raise ValueError("need a checkpoint, params, or decomposer")
            from .checkpoint import load_checkpoint
            params, _ = load_checkpoint(checkpoint_path)
            with open(checkpoint_path, "rb") as f:
                checkpoint_hash = hashlib.sha256(f.read()).hexdigest()[:16]
        loaded = params

        def decomposer(image, mask):
            return decompose_single(loaded, image, mask)

    app = FastAPI(title="relightkit", version=API_VERSION)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    cache = SessionCache(max_sessions=max_sessions, ttl_seconds=session_ttl)

    @app.exception_handler(Exception)
    async def _unhandled(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex[:12]
        import logging
        logging.getLogger("relightkit.service").exception(
            "unhandled error %s on %s", error_id, request.url.path)
        return JSONResponse(status_code=500, content={"error_id": error_id})

    def _session_or_404(sid: str) -> Session:
        session = cache.get(sid)
        if session is None:
            raise HTTPException(404, f"unknown session {sid!r}")
        return session

    @app.get("/api/health")
    def health():
        return {"status": "ok", "checkpoint_hash": checkpoint_hash,
                "version": API_VERSION, "sessions": len(cache)}

    @app.post("/api/decompose")
    async def decompose(image: UploadFile = File(...),
                        mask: UploadFile | None = File(None),
                        space: str = Form("srgb")):
        if space not in ("srgb", "linear"):
            raise HTTPException(400, "space must be 'srgb' or 'linear'")
        plane = _decode_upload(await image.read(), space)
        if mask is not None:
            mask_obj = _decode_mask(await mask.read(), plane.height, plane.width)
        else:
            mask_obj = Mask.full(plane.height, plane.width)
        plane, mask_obj = _resize_for_model(plane, mask_obj)
        albedo, normals, lighting = decomposer(plane, mask_obj)
        shading = renderer.shading(normals, lighting, mask_obj)
        artifacts = {
            "albedo": _png_bytes(albedo),
            "normals": _normals_png_bytes(normals),
            "shading": _png_bytes(shading),
        }
        session = Session(albedo=albedo, normals=normals, mask=mask_obj,
                          lighting=lighting, artifacts=artifacts,
                          created=time.monotonic())
        artifacts["reconstruction"] = _render_session_png(session, lighting)
        sid = cache.put(session)
        return {
            "session_id": sid,
            "lighting": lighting.to_flat(),
            "urls": {name: f"/api/session/{sid}/{name}.png" for name in _ARTIFACTS},
        }

    @app.get("/api/session/{sid}/{artifact}.png")
    def session_artifact(sid: str, artifact: str):
        session = _session_or_404(sid)
        if artifact == "relight":
            raise HTTPException(400, "use POST /api/relight")
        if artifact not in session.artifacts:
            raise HTTPException(404, f"no artifact {artifact!r}")
        return Response(content=session.artifacts[artifact], media_type="image/png")

    @app.post("/api/relight")
    async def relight(payload: dict):
        sid = payload.get("session_id")
        if not isinstance(sid, str):
            raise HTTPException(400, "session_id required")
        session = _session_or_404(sid)
        lighting = _parse_lighting(payload.get("lighting"))
        return Response(content=_render_session_png(session, lighting),
                        media_type="image/png")

    @app.post("/api/transfer")
    async def transfer(source_session_id: str = Form(...),
                       reference: UploadFile = File(...),
                       space: str = Form("srgb")):
        if space not in ("srgb", "linear"):
            raise HTTPException(400, "space must be 'srgb' or 'linear'")
        session = _session_or_404(source_session_id)
        ref_plane = _decode_upload(await reference.read(), space)
        ref_mask = Mask.full(ref_plane.height, ref_plane.width)
        ref_plane, ref_mask = _resize_for_model(ref_plane, ref_mask)
        _, _, ref_light = decomposer(ref_plane, ref_mask)
        relit_png = _render_session_png(session, ref_light)
        # cache the result as an immutable derived artifact of this transfer
        key = "transfer-" + hashlib.sha256(relit_png).hexdigest()[:12]
        session.artifacts.setdefault(key, relit_png)
        return {
            "lighting": ref_light.to_flat(),
            "relit_url": f"/api/session/{source_session_id}/{key}.png",
        }

    if static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")

    return app
