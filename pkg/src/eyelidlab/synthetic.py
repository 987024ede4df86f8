"""Procedural desk-scale capture generator with exact ground truth.

The scene is an analytic SDF: a head blob, two eyeball spheres, a deformable
eyelid shell per eye whose opening and fold bump follow the gaze schedule
and blink phase, and a jittering distractor blob standing in for eye-
irrelevant motion (head/lip movement). The actor faces +z; cameras orbit in
front. The anatomical left eye sits at +x (image right).

Frames are rendered by sphere tracing; masks and depth use pixel-center
rays so they are exactly consistent with the geometry. Output follows the
dataset layout of `eyelidlab.dataset` plus a gt/ directory with the true
eyeball parameters, per-frame meshes, and depth maps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import measure

from .cameras import CameraModel, look_at_camera, pixel_grid
from .eyeball import rotation_matrix
from .meshes import write_ply

PART_NONE = -1
PART_HEAD = 0
PART_LID_L = 1
PART_LID_R = 2
PART_EYE_L = 3
PART_EYE_R = 4
PART_DISTRACTOR = 5

_ALBEDO = {
    PART_HEAD: (0.72, 0.55, 0.45),
    PART_LID_L: (0.76, 0.54, 0.47),
    PART_LID_R: (0.76, 0.54, 0.47),
    PART_EYE_L: (0.92, 0.90, 0.88),
    PART_EYE_R: (0.92, 0.90, 0.88),
    PART_DISTRACTOR: (0.42, 0.50, 0.68),
}
_ALBEDO_IRIS = (0.16, 0.11, 0.09)
_LIGHT = np.array([0.30, 0.45, 0.84])
_LID_LIPSCHITZ = 1.35


@dataclass
class SceneConfig:
    n_frames: int = 36
    width: int = 80
    height: int = 80
    camera_distance: float = 1.45
    focal: float = 0.0  # pixels; 0 = auto from width
    camera_target: tuple = (0.0, 0.0, 0.25)
    orbit_yaw_deg: float = 16.0
    orbit_pitch_deg: float = 7.0
    eye_centers: tuple = ((0.23, 0.10, 0.33), (-0.23, 0.10, 0.33))  # (left, right)
    eye_radius: float = 0.14
    iris_ratio: float = 0.5
    gaze_pitch_amp: float = 16.0  # degrees, within the +-20 physical range
    gaze_yaw_amp: float = 24.0  # within +-30
    gaze_schedule: list | None = None  # explicit [(pitch, yaw)] overrides the amplitudes
    blink_frames: tuple = ()  # frame indices with a full blink
    blink_ramp: int = 1  # half-closed neighbors on each side
    distractor_amp: float = 0.05
    distractor_gaze_coupling: float = 0.5
    opening_angle: float = 0.62  # radians, eyelid opening half-angle when fully open
    noise_level: float = 0.0
    seed: int = 0
    supersample: int = 2
    march_eps: float = 1e-4
    gt_mesh_resolution: int = 96

    def resolved_focal(self) -> float:
        return self.focal if self.focal > 0 else 1.25 * self.width


@dataclass
class GroundTruth:
    eye_positions: np.ndarray  # (2, 3): left, right
    eye_scale: float
    rotations: np.ndarray  # (n, 2, 2): per frame, per eye, (pitch, yaw) degrees
    blink_phase: np.ndarray  # (n,)
    distractor_offsets: np.ndarray  # (n, 3)
    closing: np.ndarray  # (n, 2) bool
    root: Path | None = None


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class SyntheticScene:
    """Frame-indexed analytic SDF of the procedural capture."""

    def __init__(self, config: SceneConfig):
        self.config = config
        n = config.n_frames
        rng = np.random.default_rng(config.seed)
        i = np.arange(n)

        if config.gaze_schedule is not None:
            sched = np.asarray(config.gaze_schedule, dtype=np.float64)
            if sched.shape != (n, 2):
                raise ValueError(f"gaze_schedule must be ({n}, 2)")
            self.pitch, self.yaw = sched[:, 0], sched[:, 1]
        else:
            # Lissajous sweep: covers the pitch/yaw box with distinct combinations
            self.pitch = config.gaze_pitch_amp * np.sin(2 * np.pi * 2 * i / n + 0.4)
            self.yaw = config.gaze_yaw_amp * np.sin(2 * np.pi * 3 * i / n + 1.1)

        self.blink = np.zeros(n)
        for b in config.blink_frames:
            for di in range(-config.blink_ramp, config.blink_ramp + 1):
                j = b + di
                if 0 <= j < n:
                    self.blink[j] = max(self.blink[j], 1.0 if di == 0 else 0.5)

        # eye-irrelevant motion: gaze-correlated part plus smooth random drift
        phases = rng.uniform(0, 2 * np.pi, size=3)
        drift = np.stack(
            [np.sin(2 * np.pi * (k + 1.0) * i / n + phases[k]) for k in range(3)], axis=-1
        )
        coupled = np.stack(
            [self.yaw / max(config.gaze_yaw_amp, 1e-9), self.pitch / max(config.gaze_pitch_amp, 1e-9), 0 * i],
            axis=-1,
        )
        c = config.distractor_gaze_coupling
        self.distractor_offsets = config.distractor_amp * (c * coupled + (1 - c) * drift)
        self.distractor_base = np.array([0.0, -0.33, 0.38])
        self.distractor_radius = 0.075

        self.head_center = np.array([0.0, -0.05, -0.12])
        self.head_radius = 0.52

        az = np.radians(config.orbit_yaw_deg) * np.sin(2 * np.pi * i / n + 0.2)
        el = np.radians(config.orbit_pitch_deg) * np.sin(2 * np.pi * 2 * i / n + 2.0)
        target = np.asarray(config.camera_target)
        d = config.camera_distance
        cam_pos = np.stack(
            [target[0] + d * np.sin(az) * np.cos(el), target[1] + d * np.sin(el), target[2] + d * np.cos(az) * np.cos(el)],
            axis=-1,
        )
        self.cameras = [
            look_at_camera(cam_pos[k], target, [0, 1, 0], config.width, config.height, config.resolved_focal())
            for k in range(n)
        ]

        # per-frame eyelid parameters
        self.theta_open0 = config.opening_angle
        self.lid_h0 = 0.034
        self._axis = np.zeros((n, 2, 3))
        self._fold_dir = np.zeros((n, 2, 3))
        self._fold_amp = np.zeros((n, 2))
        self._fold_sigma = np.zeros((n, 2))
        self._theta_open = np.zeros(n)
        for k in range(n):
            p, y = self.pitch[k], self.yaw[k]
            self._theta_open[k] = self.theta_open0 * (1.0 - self.blink[k]) - 0.05 * self.blink[k]
            for e in range(2):
                R = rotation_matrix(0.55 * p, 0.55 * y)
                a = R @ np.array([0.0, 0.0, 1.0])
                up = np.array([0.0, 1.0, 0.0]) - a[1] * a
                up = up / np.linalg.norm(up)
                theta_f = self.theta_open0 + 0.33
                chi = 0.55 * (y / max(config.gaze_yaw_amp, 1e-9))
                side = np.cross(a, up)
                up_rot = math.cos(chi) * up + math.sin(chi) * side
                f = math.cos(theta_f) * a + math.sin(theta_f) * up_rot
                self._axis[k, e] = a
                self._fold_dir[k, e] = f / np.linalg.norm(f)
                p_norm = p / max(config.gaze_pitch_amp, 1e-9)
                y_norm = y / max(config.gaze_yaw_amp, 1e-9)
                self._fold_amp[k, e] = 0.020 * (1.0 + 0.55 * p_norm) * (1.0 - 0.45 * self.blink[k])
                self._fold_sigma[k, e] = 0.24 * (1.0 - 0.25 * y_norm**2)

        self.bounds_min = np.array([-0.72, -0.72, -0.72])
        self.bounds_max = np.array([0.72, 0.72, 0.72])
        self.near = float(d - 0.95)
        self.far = float(d + 0.95)

    # ---- geometry -------------------------------------------------------

    def _eye_center(self, eye: int) -> np.ndarray:
        return np.asarray(self.config.eye_centers[eye], dtype=np.float64)

    def _lid_sdf(self, pts: np.ndarray, frame: int, eye: int) -> np.ndarray:
        cfg = self.config
        rel = pts - self._eye_center(eye)
        rho = np.linalg.norm(rel, axis=-1)
        amp = self._fold_amp[frame, eye]
        # exact evaluation only matters near the shell; elsewhere a
        # conservative bound (bump and cut ignored) keeps the SDF metric-valid
        cheap = np.maximum(cfg.eye_radius - rho, rho - (cfg.eye_radius + self.lid_h0 + max(amp, 0.0)))
        near = cheap < 0.08
        out = cheap / _LID_LIPSCHITZ
        if near.any():
            rel_n = rel[near]
            rho_n = np.maximum(rho[near], 1e-12)
            dirs = rel_n / rho_n[..., None]
            ang_open = np.arccos(np.clip(dirs @ self._axis[frame, eye], -1.0, 1.0))
            ang_f = np.arccos(np.clip(dirs @ self._fold_dir[frame, eye], -1.0, 1.0))
            bump = amp * np.exp(-0.5 * (ang_f / self._fold_sigma[frame, eye]) ** 2)
            r_out = cfg.eye_radius + self.lid_h0 + bump
            shell = np.maximum(cfg.eye_radius - rho[near], rho[near] - r_out)
            cut = rho_n * (self._theta_open[frame] - ang_open)
            out[near] = np.maximum(shell, cut) / _LID_LIPSCHITZ
        return out

    def part_sdfs(self, pts: np.ndarray, frame: int) -> dict[int, np.ndarray]:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        cfg = self.config
        out = {
            PART_HEAD: np.linalg.norm(pts - self.head_center, axis=-1) - self.head_radius,
            PART_LID_L: self._lid_sdf(pts, frame, 0),
            PART_LID_R: self._lid_sdf(pts, frame, 1),
            PART_EYE_L: np.linalg.norm(pts - self._eye_center(0), axis=-1) - cfg.eye_radius,
            PART_EYE_R: np.linalg.norm(pts - self._eye_center(1), axis=-1) - cfg.eye_radius,
            PART_DISTRACTOR: np.linalg.norm(
                pts - (self.distractor_base + self.distractor_offsets[frame]), axis=-1
            )
            - self.distractor_radius,
        }
        return out

    def sdf(self, pts: np.ndarray, frame: int) -> np.ndarray:
        parts = self.part_sdfs(pts, frame)
        return np.minimum.reduce(list(parts.values()))

    def sdf_without_eyes(self, pts: np.ndarray, frame: int) -> np.ndarray:
        parts = self.part_sdfs(pts, frame)
        return np.minimum.reduce([v for k, v in parts.items() if k not in (PART_EYE_L, PART_EYE_R)])

    def nearest_part(self, pts: np.ndarray, frame: int) -> np.ndarray:
        parts = self.part_sdfs(pts, frame)
        keys = list(parts.keys())
        stack = np.stack([parts[k] for k in keys], axis=0)
        return np.asarray(keys, dtype=np.int64)[np.argmin(stack, axis=0)]

    def normal(self, pts: np.ndarray, frame: int, h: float = 1e-5) -> np.ndarray:
        pts = np.atleast_2d(pts)
        grad = np.zeros_like(pts)
        for a in range(3):
            dp = np.zeros(3)
            dp[a] = h
            grad[:, a] = self.sdf(pts + dp, frame) - self.sdf(pts - dp, frame)
        return _unit(grad)

    def iris_hit(self, pts: np.ndarray, frame: int, eye: int) -> np.ndarray:
        """Whether surface points on the given eyeball lie on the iris patch."""
        dirs = _unit(np.atleast_2d(pts) - self._eye_center(eye))
        gaze_axis = rotation_matrix(self.pitch[frame], self.yaw[frame]) @ np.array([0.0, 0.0, 1.0])
        cos_lim = math.cos(math.asin(self.config.iris_ratio))
        return dirs @ gaze_axis >= cos_lim

    # ---- rendering ------------------------------------------------------

    def trace(self, origins: np.ndarray, dirs: np.ndarray, frame: int, max_steps: int = 96):
        """Sphere tracing with bisection refinement. Returns (t, hit)."""
        cfg = self.config
        t = np.full(len(origins), self.near)
        hit = np.zeros(len(origins), dtype=bool)
        active = np.ones(len(origins), dtype=bool)
        for _ in range(max_steps):
            if not active.any():
                break
            p = origins[active] + t[active, None] * dirs[active]
            d = self.sdf(p, frame)
            newly_hit = d < cfg.march_eps
            idx = np.nonzero(active)[0]
            hit[idx[newly_hit]] = True
            active[idx[newly_hit]] = False
            adv = idx[~newly_hit]
            t[adv] += np.maximum(d[~newly_hit], cfg.march_eps)
            over = t > self.far
            active &= ~over
        # bisection refine against the crossing for accurate depth
        if hit.any():
            hi = t[hit]
            lo = np.maximum(hi - 2 * cfg.march_eps, self.near)
            o, v = origins[hit], dirs[hit]
            for _ in range(12):
                mid = 0.5 * (lo + hi)
                inside = self.sdf(o + mid[:, None] * v, frame) < 0
                hi = np.where(inside, mid, hi)
                lo = np.where(inside, lo, mid)
            t[hit] = 0.5 * (lo + hi)
        return t, hit

    def render_frame(self, frame: int, rng: np.random.Generator | None = None):
        """Render one frame. Returns dict with image, masks, depth."""
        cfg = self.config
        cam = self.cameras[frame]
        pts2d = pixel_grid(cfg.width, cfg.height)
        origins, dirs = _raygrid(cam, pts2d)
        t, hit = self.trace(origins, dirs, frame)
        p_hit = origins + t[:, None] * dirs
        part = np.full(len(origins), PART_NONE, dtype=np.int64)
        part[hit] = self.nearest_part(p_hit[hit], frame)

        iris_l = np.zeros(len(origins), dtype=bool)
        iris_r = np.zeros(len(origins), dtype=bool)
        sel = part == PART_EYE_L
        if sel.any():
            iris_l[sel] = self.iris_hit(p_hit[sel], frame, 0)
        sel = part == PART_EYE_R
        if sel.any():
            iris_r[sel] = self.iris_hit(p_hit[sel], frame, 1)

        depth = np.where(hit, t, np.inf).astype(np.float32)

        # image: supersampled shading
        ss = max(1, cfg.supersample)
        if ss > 1:
            sub = (np.stack(np.meshgrid(np.arange(ss), np.arange(ss)), -1).reshape(-1, 2) + 0.5) / ss - 0.5
            rgb_acc = np.zeros((len(origins), 3))
            for du, dv in sub:
                o2, d2 = _raygrid(cam, pts2d + [du, dv])
                t2, hit2 = self.trace(o2, d2, frame)
                rgb_acc += self._shade(o2, d2, t2, hit2, frame)
            rgb = rgb_acc / len(sub)
        else:
            rgb = self._shade(origins, dirs, t, hit, frame)
        if cfg.noise_level > 0 and rng is not None:
            rgb = rgb + rng.normal(0, cfg.noise_level, rgb.shape)
        rgb = np.clip(rgb, 0.0, 1.0)

        shape = (cfg.height, cfg.width)
        return {
            "image": rgb.reshape(cfg.height, cfg.width, 3),
            "actor": (part >= 0).reshape(shape),
            "eyelid_l": (part == PART_EYE_L).reshape(shape),
            "eyelid_r": (part == PART_EYE_R).reshape(shape),
            "iris_l": iris_l.reshape(shape),
            "iris_r": iris_r.reshape(shape),
            "depth": depth.reshape(shape),
        }

    @staticmethod
    def _skin_texture(p: np.ndarray) -> np.ndarray:
        """Smooth multiplicative albedo variation; anchors multi-view depth
        cues the way real skin texture does."""
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        t = (
            0.13 * np.sin(37.0 * x + 1.7) * np.sin(31.0 * y + 0.4)
            + 0.09 * np.sin(23.0 * (x + y) + 2.9) * np.sin(27.0 * z + 1.1)
            + 0.06 * np.sin(53.0 * y + 5.0) * np.sin(47.0 * (z - x) + 0.8)
        )
        return 1.0 + t

    def _shade(self, origins, dirs, t, hit, frame):
        rgb = np.zeros((len(origins), 3))
        if not hit.any():
            return rgb
        p = origins[hit] + t[hit, None] * dirs[hit]
        part = self.nearest_part(p, frame)
        n = self.normal(p, frame)
        albedo = np.zeros((len(p), 3))
        for k, col in _ALBEDO.items():
            albedo[part == k] = col
        skin = (part == PART_HEAD) | (part == PART_LID_L) | (part == PART_LID_R)
        albedo[skin] *= self._skin_texture(p[skin])[:, None]
        sel = part == PART_EYE_L
        if sel.any():
            albedo[sel & np.asarray(self.iris_hit(p, frame, 0))] = _ALBEDO_IRIS
        sel = part == PART_EYE_R
        if sel.any():
            albedo[sel & np.asarray(self.iris_hit(p, frame, 1))] = _ALBEDO_IRIS
        light = _unit(_LIGHT[None])[0]
        lambert = np.clip(n @ light, 0.0, None)
        rgb[hit] = albedo * (0.28 + 0.72 * lambert[:, None])
        return rgb

    def gt_mesh(self, frame: int, resolution: int | None = None):
        """Marching-cubes mesh of all non-eyeball geometry (the eval target)."""
        res = resolution or self.config.gt_mesh_resolution
        lo = np.array([-0.62, -0.62, -0.68])
        hi = np.array([0.62, 0.58, 0.55])
        xs = np.linspace(lo[0], hi[0], res)
        ys = np.linspace(lo[1], hi[1], res)
        zs = np.linspace(lo[2], hi[2], res)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], -1)
        vol = np.empty(len(pts), dtype=np.float32)
        for start in range(0, len(pts), 262144):
            chunk = slice(start, start + 262144)
            vol[chunk] = self.sdf_without_eyes(pts[chunk], frame)
        vol = vol.reshape(res, res, res)
        spacing = (xs[1] - xs[0], ys[1] - ys[0], zs[1] - zs[0])
        verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=spacing)
        verts = verts + lo
        return verts, faces

    def gt_contact_mask(self, template_dirs: np.ndarray, frame: int, eye: int) -> np.ndarray:
        """Which unit directions on the eyeball are covered by the lid shell."""
        ang = np.arccos(np.clip(template_dirs @ self._axis[frame, eye], -1, 1))
        return ang > self._theta_open[frame]


def _raygrid(cam: CameraModel, pixels: np.ndarray):
    dirs_cam = np.stack(
        [
            (pixels[:, 0] - cam.principal_x) / cam.focal_x,
            -(pixels[:, 1] - cam.principal_y) / cam.focal_y,
            -np.ones(len(pixels)),
        ],
        axis=-1,
    )
    dirs = _unit(dirs_cam @ cam.rotation.T)
    origins = np.broadcast_to(cam.translation, dirs.shape)
    return origins, dirs


def scene_sdf(config: SceneConfig, points: np.ndarray, frame: int) -> np.ndarray:
    """Exact signed distance of the full scene at the given frame."""
    return SyntheticScene(config).sdf(points, frame)


def _save_mask(path: Path, mask: np.ndarray):
    Image.fromarray((mask.astype(np.uint8)) * 255).save(path)


def make_scene(config: SceneConfig, out) -> GroundTruth:
    """Generate the dataset directory plus gt/ and return the ground truth."""
    out = Path(out)
    scene = SyntheticScene(config)
    cfg = config
    for sub in ("images", "masks", "eyelid_l", "eyelid_r", "iris_l", "iris_r", "gt/meshes", "gt/depth"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    for k, cam in enumerate(scene.cameras):
        for c in (scene.head_center, scene._eye_center(0), scene._eye_center(1)):
            uv, in_front = cam.project(c[None])
            if not in_front[0] or not (0 <= uv[0, 0] < cfg.width and 0 <= uv[0, 1] < cfg.height):
                raise ValueError(f"frame {k}: actor outside camera frustum")

    rng = np.random.default_rng(cfg.seed + 1)
    cam_entries = []
    closing = np.zeros((cfg.n_frames, 2), dtype=bool)
    for k in range(cfg.n_frames):
        rendered = scene.render_frame(k, rng=rng)
        name = f"{k:06d}.png"
        Image.fromarray((rendered["image"] * 255).round().astype(np.uint8)).save(out / "images" / name)
        _save_mask(out / "masks" / name, rendered["actor"])
        _save_mask(out / "eyelid_l" / name, rendered["eyelid_l"])
        _save_mask(out / "eyelid_r" / name, rendered["eyelid_r"])
        _save_mask(out / "iris_l" / name, rendered["iris_l"])
        _save_mask(out / "iris_r" / name, rendered["iris_r"])
        np.save(out / "gt" / "depth" / f"{k:06d}.npy", rendered["depth"])
        if cfg.gt_mesh_resolution > 0:
            verts, faces = scene.gt_mesh(k)
            write_ply(out / "gt" / "meshes" / f"{k:06d}.ply", verts, faces)
        cam = scene.cameras[k]
        M = np.eye(4)
        M[:3, :3] = cam.rotation
        M[:3, 3] = cam.translation
        cam_entries.append({"intrinsics": cam.intrinsics.tolist(), "world_from_camera": M.tolist()})
        closing[k] = scene.blink[k] >= 1.0

    (out / "cameras.json").write_text(json.dumps({"frames": cam_entries}))
    (out / "meta.json").write_text(
        json.dumps(
            {
                "n": cfg.n_frames,
                "near": scene.near,
                "far": scene.far,
                "bounds": {"min": scene.bounds_min.tolist(), "max": scene.bounds_max.tolist()},
                "normalization": {"scale": 1.0, "offset": [0.0, 0.0, 0.0]},
                "closing_threshold": CLOSING_META_THRESHOLD * cfg.height / 1080.0,
            },
            indent=1,
        )
    )

    rotations = np.zeros((cfg.n_frames, 2, 2))
    rotations[:, 0, 0] = rotations[:, 1, 0] = scene.pitch
    rotations[:, 0, 1] = rotations[:, 1, 1] = scene.yaw
    gt = GroundTruth(
        eye_positions=np.stack([scene._eye_center(0), scene._eye_center(1)]),
        eye_scale=cfg.eye_radius,
        rotations=rotations,
        blink_phase=scene.blink.copy(),
        distractor_offsets=scene.distractor_offsets.copy(),
        closing=closing,
        root=out,
    )
    (out / "gt" / "eyeball.json").write_text(
        json.dumps(
            {
                side: {
                    "position": gt.eye_positions[e].tolist(),
                    "scale": gt.eye_scale,
                    "rotations": rotations[:, e].tolist(),
                }
                for e, side in enumerate(("left", "right"))
            },
            indent=1,
        )
    )
    (out / "gt" / "scene_config.json").write_text(json.dumps(asdict(config), default=list))
    return gt


CLOSING_META_THRESHOLD = 3.0


def preset_scene(name: str, **overrides) -> SceneConfig:
    """Named demo scenes: calibration orbit, main training capture, blink capture.

    `main_calib` is the higher-resolution twin of `main` (same world geometry
    and schedules) used to run eyeball calibration at usable mask resolution.
    """
    presets = {
        # wide orbit, moderate gaze, large opening: the iris is never clipped
        "orbit": dict(
            n_frames=60, width=192, height=192, orbit_yaw_deg=26.0, orbit_pitch_deg=11.0,
            gaze_pitch_amp=10.0, gaze_yaw_amp=14.0, opening_angle=0.78,
            distractor_amp=0.03, gt_mesh_resolution=0,
        ),
        "main": dict(
            n_frames=36, width=80, height=80, orbit_yaw_deg=9.0, orbit_pitch_deg=4.0,
            gaze_pitch_amp=16.0, gaze_yaw_amp=24.0, distractor_amp=0.05,
            distractor_gaze_coupling=0.5, gt_mesh_resolution=96,
        ),
        "main_calib": dict(
            n_frames=36, width=160, height=160, orbit_yaw_deg=9.0, orbit_pitch_deg=4.0,
            gaze_pitch_amp=16.0, gaze_yaw_amp=24.0, distractor_amp=0.05,
            distractor_gaze_coupling=0.5, gt_mesh_resolution=0,
        ),
        "blink": dict(
            n_frames=30, width=80, height=80, orbit_yaw_deg=9.0, orbit_pitch_deg=4.0,
            gaze_pitch_amp=10.0, gaze_yaw_amp=14.0, blink_frames=(8, 20), blink_ramp=2,
            distractor_amp=0.03, gt_mesh_resolution=96,
        ),
    }
    if name not in presets:
        raise KeyError(f"unknown scene preset {name!r}; choose from {sorted(presets)}")
    kwargs = presets[name]
    kwargs.update(overrides)
    return SceneConfig(**kwargs)


def load_scene_config(path) -> SceneConfig:
    raw = json.loads(Path(path).read_text())
    raw["eye_centers"] = tuple(tuple(c) for c in raw["eye_centers"])
    raw["camera_target"] = tuple(raw["camera_target"])
    raw["blink_frames"] = tuple(raw["blink_frames"])
    if raw.get("gaze_schedule") is not None:
        raw["gaze_schedule"] = [tuple(g) for g in raw["gaze_schedule"]]
    return SceneConfig(**raw)
