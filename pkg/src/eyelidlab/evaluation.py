"""Metric evaluation against synthetic ground truth, animation export, and
the calibration-error tolerance sweep.

Depth error and Chamfer distance are restricted to the eye-region boxes
(plus the complementary front-facing "other" region); PSNR is computed over
the projected eye-region pixels. All metrics are in scene units; datasets
carry their normalization transform in meta.json.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.spatial import cKDTree

from .calibration import EyeballCalibration, perturb_calibration
from .cameras import CameraModel, generate_rays, pixel_grid
from .config import TrainConfig
from .dataset import DatasetManifest, EyeRegions
from .meshes import raycast_depth, write_obj, write_ply
from .model import EyelidModel
from .training import Checkpoint, _project_box_mask, train


def chamfer_distance(points_a: np.ndarray, points_b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two point sets."""
    if len(points_a) == 0 or len(points_b) == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    d_ab = cKDTree(points_b).query(points_a)[0].mean()
    d_ba = cKDTree(points_a).query(points_b)[0].mean()
    return float(0.5 * (d_ab + d_ba))


@dataclass
class EvalReport:
    frames: list = field(default_factory=list)
    eye_depth_error: float = float("nan")
    eye_chamfer: float = float("nan")
    eye_psnr: float = float("nan")
    other_depth_error: float = float("nan")
    other_chamfer: float = float("nan")
    closed_eye_mask_loss: float = float("nan")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def render_frame_full(model: EyelidModel, state, camera: CameraModel, near, far, sampling,
                      alpha: float = 1.0, chunk: int = 1024):
    """Full-image render (no gradients): returns (rgb, depth, accumulation)."""
    pixels = pixel_grid(camera.width, camera.height)
    origins, dirs = generate_rays(camera, pixels)
    origins = torch.tensor(origins, dtype=torch.float32)
    dirs = torch.tensor(dirs, dtype=torch.float32)
    rgb = np.zeros((len(pixels), 3), dtype=np.float32)
    depth = np.zeros(len(pixels), dtype=np.float32)
    acc = np.zeros(len(pixels), dtype=np.float32)
    for start in range(0, len(pixels), chunk):
        sl = slice(start, start + chunk)
        out = model.render_rays(origins[sl], dirs[sl], near, far, state, sampling, alpha=alpha)
        rgb[sl] = out.color.detach().numpy()
        depth[sl] = out.depth.detach().numpy()
        acc[sl] = out.accumulation.detach().numpy()
    h, w = camera.height, camera.width
    return rgb.reshape(h, w, 3), depth.reshape(h, w), acc.reshape(h, w)


def _closed_eye_mask_loss(model, state, frame, regions, sampling, near, far) -> float:
    """Mean BCE between the eye-region reconstruction mask and accumulated
    opacity on a closed frame (the hyper-space capability probe)."""
    h, w = frame.image.shape[:2]
    boxes = [(regions.bbox_left[0], regions.bbox_left[1]), (regions.bbox_right[0], regions.bbox_right[1])]
    box_mask = _project_box_mask(frame.camera, boxes, h, w).ravel()
    idx = np.flatnonzero(box_mask)
    pixels = pixel_grid(w, h)[idx]
    origins, dirs = generate_rays(frame.camera, pixels)
    out = model.render_rays(
        torch.tensor(origins, dtype=torch.float32),
        torch.tensor(dirs, dtype=torch.float32),
        near, far, state, sampling,
    )
    labels = torch.tensor(frame.reconstruction_mask().ravel()[idx].astype(np.float32))
    acc = out.accumulation.detach().clamp(1e-5, 1 - 1e-5)
    return float(-(labels * torch.log(acc) + (1 - labels) * torch.log(1 - acc)).mean())


def evaluate(
    checkpoint: Checkpoint,
    manifest: DatasetManifest,
    frames: list[int] | None = None,
    mesh_resolution: int | None = None,
    seed: int = 0,
) -> EvalReport:
    """Depth error / Chamfer / PSNR against the dataset's gt/ directory.

    Both Chamfer point clouds come from the camera-visible surface: the
    extracted mesh is ray-cast to a depth map and back-projected, mirroring
    how the ground-truth depth samples the true surface. Eyelid-opening
    pixels (where the ground truth shows the eyeball, which the field
    deliberately does not model) are excluded.
    """
    gt_root = Path(manifest.root) / "gt"
    if not gt_root.exists():
        raise FileNotFoundError(f"no ground truth at {gt_root}")
    model = checkpoint.build_model()
    cfg = checkpoint.train_config()
    regions = checkpoint.eye_regions()
    res = mesh_resolution or cfg.mesh_resolution
    if frames is None:
        step = max(1, manifest.n_frames // 4)
        frames = list(range(0, manifest.n_frames, step))[:4]

    rows = []
    for k in frames:
        frame = manifest.frames[k]
        state = model.frame_state(k)
        rgb, depth, acc = render_frame_full(
            model, state, frame.camera, manifest.near, manifest.far, cfg.sampling
        )
        gt_depth = np.load(gt_root / "depth" / f"{k:06d}.npy")
        h, w = gt_depth.shape
        opening = frame.eyelid_mask_left | frame.eyelid_mask_right
        valid = np.isfinite(gt_depth) & ~opening
        # a pixel belongs to the eye region when its true surface point falls
        # inside one of the 3D eye boxes
        pixels_all = pixel_grid(w, h)
        o_all, d_all = generate_rays(frame.camera, pixels_all)
        gt_flat = np.where(np.isfinite(gt_depth.ravel()), gt_depth.ravel(), 0.0)
        gt_points = o_all + gt_flat[:, None] * d_all
        tags = regions.tag_points(gt_points).reshape(h, w)
        eye_px = (tags != EyeRegions.REGION_OTHER) & np.isfinite(gt_depth)
        sel_eye = eye_px & valid & (acc > 0.5)
        sel_other = (~eye_px) & valid & (acc > 0.5) & frame.actor_mask
        row = {"frame": k}
        row["eye_depth_error"] = float(np.abs(depth - gt_depth)[sel_eye].mean()) if sel_eye.any() else float("nan")
        row["other_depth_error"] = float(np.abs(depth - gt_depth)[sel_other].mean()) if sel_other.any() else float("nan")
        if eye_px.any():
            mse = float(((rgb - frame.image) ** 2)[eye_px].mean())
            row["eye_psnr"] = float(-10.0 * np.log10(max(mse, 1e-10)))

        verts, faces = model.extract_mesh(state, res, manifest.bounds_min, manifest.bounds_max)
        centroid_uv, centroid_front = frame.camera.project(verts[faces].mean(axis=1))
        pixels, origins, dirs = pixels_all, o_all, d_all
        rng = np.random.default_rng(seed + 101 * k)
        recon_pc, gt_pc = {}, {}
        for name, sel in (("eye", eye_px & valid), ("other", (~eye_px) & valid & frame.actor_mask)):
            idx = np.flatnonzero(sel.ravel())
            if len(idx) == 0:
                continue
            if len(idx) > 400:
                idx = np.sort(rng.choice(idx, size=400, replace=False))
            px = pixels[idx]
            cull = (
                centroid_front
                & (centroid_uv[:, 0] >= px[:, 0].min() - 4)
                & (centroid_uv[:, 0] <= px[:, 0].max() + 4)
                & (centroid_uv[:, 1] >= px[:, 1].min() - 4)
                & (centroid_uv[:, 1] <= px[:, 1].max() + 4)
            )
            if not cull.any():
                continue
            t_mesh = raycast_depth(verts, faces[cull], origins[idx], dirs[idx])
            hit = np.isfinite(t_mesh)
            if not hit.any():
                continue
            recon_pc[name] = origins[idx][hit] + t_mesh[hit, None] * dirs[idx][hit]
            t_gt = gt_depth.ravel()[idx]
            gt_pc[name] = origins[idx] + t_gt[:, None] * dirs[idx]
        if "eye" in recon_pc and len(recon_pc["eye"]):
            row["eye_chamfer"] = chamfer_distance(recon_pc["eye"], gt_pc["eye"])
        if "other" in recon_pc and len(recon_pc["other"]):
            row["other_chamfer"] = chamfer_distance(recon_pc["other"], gt_pc["other"])
        if frame.closing_left and frame.closing_right:
            row["closed_mask_loss"] = _closed_eye_mask_loss(
                model, state, frame, regions, cfg.sampling, manifest.near, manifest.far
            )
        rows.append(row)

    def _mean(key):
        vals = [r[key] for r in rows if key in r and np.isfinite(r[key])]
        return float(np.mean(vals)) if vals else float("nan")

    return EvalReport(
        frames=rows,
        eye_depth_error=_mean("eye_depth_error"),
        eye_chamfer=_mean("eye_chamfer"),
        eye_psnr=_mean("eye_psnr"),
        other_depth_error=_mean("other_depth_error"),
        other_chamfer=_mean("other_chamfer"),
        closed_eye_mask_loss=_mean("closed_mask_loss"),
    )


def load_schedule(path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    return data["entries"] if isinstance(data, dict) else data


def animate(
    checkpoint: Checkpoint,
    schedule: list[dict],
    camera: CameraModel,
    near: float,
    far: float,
    out_dir=None,
    mesh_resolution: int | None = None,
    reference_frame: int | None = None,
    image_only: bool = False,
):
    """Render the gaze/closing schedule with the residual code frozen.

    Out-of-range gaze is clamped (with a per-entry flag in the result).
    Returns a list of dicts with image, optional mesh, and the applied pose.
    """
    model = checkpoint.build_model()
    cfg = checkpoint.train_config()
    ref = cfg.reference_frame if reference_frame is None else reference_frame
    res = mesh_resolution or cfg.mesh_resolution
    p_lo, p_hi = cfg.model.pitch_range
    y_lo, y_hi = cfg.model.yaw_range
    bmin = np.array([-1.0, -1.0, -1.0])
    bmax = np.array([1.0, 1.0, 1.0])
    results = []
    for i, entry in enumerate(schedule):
        raw = np.array(
            [
                [entry.get("pitch_left", 0.0), entry.get("yaw_left", 0.0)],
                [entry.get("pitch_right", 0.0), entry.get("yaw_right", 0.0)],
            ],
            dtype=np.float64,
        )
        gaze = np.stack([np.clip(raw[:, 0], p_lo, p_hi), np.clip(raw[:, 1], y_lo, y_hi)], axis=-1)
        clamped = bool(np.any(gaze != raw))
        closing = float(np.clip(entry.get("closing", 0.0), 0.0, 1.0))
        state = model.pose_state(gaze, (closing, closing), reference_frame=ref)
        rgb, depth, acc = render_frame_full(model, state, camera, near, far, cfg.sampling)
        item = {"index": i, "image": rgb, "gaze": gaze.tolist(), "closing": closing, "clamped": clamped}
        if not image_only:
            verts, faces = model.extract_mesh(state, res, bmin, bmax)
            item["mesh"] = (verts, faces)
        results.append(item)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            from PIL import Image

            Image.fromarray((np.clip(rgb, 0, 1) * 255).round().astype(np.uint8)).save(out / f"{i:06d}.png")
            if not image_only:
                write_ply(out / f"{i:06d}.ply", *item["mesh"])
                write_obj(out / f"{i:06d}.obj", *item["mesh"])
    return results


def tolerance_sweep(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    calib_left: EyeballCalibration,
    calib_right: EyeballCalibration,
    ratios: list[float],
    seeds: list[int],
    eval_frames: list[int] | None = None,
) -> list[dict]:
    """Train + evaluate at each manual calibration offset ratio; the last row
    is the contact-free baseline at ratio 0."""
    rows = []
    for ratio in ratios:
        for seed in seeds:
            pl = perturb_calibration(calib_left, ratio, seed) if ratio > 0 else calib_left
            pr = perturb_calibration(calib_right, ratio, seed + 1) if ratio > 0 else calib_right
            run_cfg = dataclasses.replace(cfg)
            ckpt = train(run_cfg, manifest, pl, pr)
            report = evaluate(ckpt, manifest, frames=eval_frames)
            rows.append({"ratio": ratio, "seed": seed, "contact": True, **report.as_dict()})
    base_cfg = dataclasses.replace(cfg, no_contact=True)
    ckpt = train(base_cfg, manifest, calib_left, calib_right)
    report = evaluate(ckpt, manifest, frames=eval_frames)
    rows.append({"ratio": 0.0, "seed": seeds[0], "contact": False, **report.as_dict()})
    return rows
