"""HTTP posing service: gaze/closing in, rendered preview (and optionally a
mesh) out. Requests never mutate the loaded checkpoint; renders are
deterministic for identical requests."""

from __future__ import annotations

import io
import math
import uuid

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .cameras import CameraModel, look_at_camera
from .config import SamplingConfig
from .training import Checkpoint

PREVIEW_SAMPLING = SamplingConfig(n_coarse=16, rounds=2, per_round=8)


def default_camera(size: int = 128) -> CameraModel:
    return look_at_camera([0.0, 0.0, 1.45], [0.0, 0.0, 0.25], [0, 1, 0], size, size, 1.25 * size)


class PoseService:
    def __init__(self, checkpoint: Checkpoint | None, cameras: dict[str, dict] | None = None,
                 near: float = 0.5, far: float = 2.4, max_size: int = 256):
        self.checkpoint = checkpoint
        self.model = checkpoint.build_model() if checkpoint else None
        self.cfg = checkpoint.train_config() if checkpoint else None
        self.near = near
        self.far = far
        self.max_size = max_size
        self.checkpoint_id = uuid.uuid4().hex[:12] if checkpoint else None
        # camera presets are stored as parameters and instantiated per request size
        self.cameras = cameras or {"default": None}
        self.meshes: dict[str, bytes] = {}

    def camera_for(self, preset: str, size: int) -> CameraModel:
        spec = self.cameras.get(preset)
        if spec is None:
            return default_camera(size)
        base: CameraModel = spec
        s = size / base.width
        return CameraModel(
            width=size,
            height=int(round(base.height * s)),
            focal_x=base.focal_x * s,
            focal_y=base.focal_y * s,
            principal_x=(size - 1) / 2.0,
            principal_y=(int(round(base.height * s)) - 1) / 2.0,
            rotation=base.rotation,
            translation=base.translation,
        )


def _bad_request(detail: str) -> JSONResponse:
    return JSONResponse({"detail": detail}, status_code=400)


def create_app(service: PoseService) -> FastAPI:
    app = FastAPI(title="eyelidlab pose service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Clamped", "X-Mesh-Url"],
    )

    @app.get("/info")
    def info():
        if service.model is None:
            return JSONResponse({"detail": "checkpoint not loaded"}, status_code=503)
        mc = service.cfg.model
        return {
            "checkpoint_id": service.checkpoint_id,
            "gaze_ranges": {"pitch": list(mc.pitch_range), "yaw": list(mc.yaw_range)},
            "camera_presets": sorted(service.cameras.keys()),
            "max_size": service.max_size,
            "default_size": 128,
        }

    @app.post("/render")
    async def render(request: Request):
        if service.model is None:
            return JSONResponse({"detail": "checkpoint not loaded"}, status_code=503)
        try:
            body = await request.json()
        except Exception:
            return _bad_request("body must be a JSON object")
        if not isinstance(body, dict):
            return _bad_request("body must be a JSON object")
        fields = {
            "pitch_left": 0.0, "yaw_left": 0.0, "pitch_right": 0.0, "yaw_right": 0.0,
            "closing": 0.0,
        }
        for key, default in fields.items():
            value = body.get(key, default)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return _bad_request(f"{key} must be a number")
            value = float(value)
            if not math.isfinite(value):
                return JSONResponse({"detail": f"{key} must be finite"}, status_code=422)
            fields[key] = value
        size = body.get("size", 128)
        if not isinstance(size, int) or size < 16 or size > service.max_size:
            return _bad_request(f"size must be an int in [16, {service.max_size}]")
        preset = body.get("camera", "default")
        if preset not in service.cameras:
            return _bad_request(f"unknown camera preset {preset!r}")
        want_mesh = bool(body.get("want_mesh", False))
        quality = body.get("quality", "preview")
        if quality not in ("preview", "full"):
            return _bad_request("quality must be 'preview' or 'full'")

        mc = service.cfg.model
        p_lo, p_hi = mc.pitch_range
        y_lo, y_hi = mc.yaw_range
        raw = np.array(
            [[fields["pitch_left"], fields["yaw_left"]], [fields["pitch_right"], fields["yaw_right"]]]
        )
        gaze = np.stack([np.clip(raw[:, 0], p_lo, p_hi), np.clip(raw[:, 1], y_lo, y_hi)], axis=-1)
        clamped = bool(np.any(gaze != raw))
        closing = float(np.clip(fields["closing"], 0.0, 1.0))

        from .evaluation import render_frame_full

        camera = service.camera_for(preset, size)
        sampling = service.cfg.sampling if quality == "full" else PREVIEW_SAMPLING
        state = service.model.pose_state(gaze, (closing, closing), service.cfg.reference_frame)
        rgb, _, _ = render_frame_full(service.model, state, camera, service.near, service.far, sampling)
        buf = io.BytesIO()
        Image.fromarray((np.clip(rgb, 0, 1) * 255).round().astype(np.uint8)).save(buf, format="PNG")
        headers = {"X-Clamped": "true" if clamped else "false"}
        if want_mesh:
            import os
            import tempfile

            from .meshes import write_ply

            try:
                verts, faces = service.model.extract_mesh(
                    state, max(32, service.cfg.mesh_resolution // 2), [-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]
                )
            except ValueError as exc:
                headers["X-Mesh-Error"] = str(exc)
            else:
                fd, name = tempfile.mkstemp(suffix=".ply")
                os.close(fd)
                write_ply(name, verts, faces)
                with open(name, "rb") as fh:
                    data = fh.read()
                os.unlink(name)
                mesh_id = uuid.uuid4().hex[:12]
                service.meshes[mesh_id] = data
                headers["X-Mesh-Url"] = f"/mesh/{mesh_id}"
        return Response(content=buf.getvalue(), media_type="image/png", headers=headers)

    @app.get("/mesh/{mesh_id}")
    def mesh(mesh_id: str):
        data = service.meshes.get(mesh_id)
        if data is None:
            return JSONResponse({"detail": "unknown mesh id"}, status_code=404)
        return Response(content=data, media_type="model/ply")

    return app
