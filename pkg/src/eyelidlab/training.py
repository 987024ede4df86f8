"""The optimization loop: ray sampling, loss assembly, checkpointing.

One frame is drawn per step; half of the step's rays (configurable) come
from pixels inside the projected eye-region boxes. Deterministic given the
config seed: all stochastic choices run through one torch generator.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .calibration import EyeballCalibration
from .config import TrainConfig, config_to_dict, _from_dict
from .dataset import DatasetManifest, EyeRegions, build_eye_regions
from .deformation import CODE_PARTS
from .eyeball import EyeballPose, build_template, classify_contact_vertices, pose_vertices
from .losses import (
    LossReport,
    color_loss,
    contact_loss,
    disentangle_loss,
    eikonal_loss,
    mask_loss,
    normal_loss,
    total_loss,
)
from .model import EyelidModel


class TrainingAborted(RuntimeError):
    def __init__(self, message, checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class FrameRays:
    origins: torch.Tensor  # (P, 3)
    dirs: torch.Tensor  # (P, 3)
    rgb: torch.Tensor  # (P, 3)
    labels: torch.Tensor  # (P,) reconstruction mask
    eye_idx: torch.Tensor  # indices of pixels inside projected eye boxes
    other_idx: torch.Tensor


def _project_box_mask(camera, boxes, height, width) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for bmin, bmax in boxes:
        corners = np.array([[bmin[a] if (k >> a) & 1 == 0 else bmax[a] for a in range(3)] for k in range(8)])
        uv, in_front = camera.project(corners)
        if not in_front.all():
            continue
        u0 = int(np.clip(np.floor(uv[:, 0].min()), 0, width - 1))
        u1 = int(np.clip(np.ceil(uv[:, 0].max()), 0, width - 1))
        v0 = int(np.clip(np.floor(uv[:, 1].min()), 0, height - 1))
        v1 = int(np.clip(np.ceil(uv[:, 1].max()), 0, height - 1))
        mask[v0 : v1 + 1, u0 : u1 + 1] = True
    return mask


def build_frame_rays(manifest: DatasetManifest, regions: EyeRegions) -> list[FrameRays]:
    from .cameras import generate_rays, pixel_grid

    out = []
    boxes = [(regions.bbox_left[0], regions.bbox_left[1]), (regions.bbox_right[0], regions.bbox_right[1])]
    for frame in manifest.frames:
        h, w = frame.image.shape[:2]
        pixels = pixel_grid(w, h)
        origins, dirs = generate_rays(frame.camera, pixels)
        eye_mask = _project_box_mask(frame.camera, boxes, h, w).ravel()
        labels = frame.reconstruction_mask().ravel().astype(np.float32)
        out.append(
            FrameRays(
                origins=torch.tensor(origins, dtype=torch.float32),
                dirs=torch.tensor(dirs, dtype=torch.float32),
                rgb=torch.tensor(frame.image.reshape(-1, 3), dtype=torch.float32),
                labels=torch.tensor(labels),
                eye_idx=torch.tensor(np.flatnonzero(eye_mask), dtype=torch.long),
                other_idx=torch.tensor(np.flatnonzero(~eye_mask), dtype=torch.long),
            )
        )
    return out


def build_contact_sets(
    manifest: DatasetManifest,
    calib_left: EyeballCalibration,
    calib_right: EyeballCalibration,
    ring_count: int = 24,
):
    """Per-frame, per-eye contact vertex positions and normals (world space),
    frozen to the calibrated poses."""
    template = build_template(ring_count)
    sets = []
    for k, frame in enumerate(manifest.frames):
        per_eye = []
        for calib, mask in (
            (calib_left, frame.eyelid_mask_left),
            (calib_right, frame.eyelid_mask_right),
        ):
            pose = EyeballPose(
                position=calib.position,
                scale=calib.scale,
                pitch=calib.rotations[k, 0],
                yaw=calib.rotations[k, 1],
            )
            idx = classify_contact_vertices(template, pose, frame.camera, mask)
            verts, normals = pose_vertices(template, pose)
            per_eye.append(
                (
                    torch.tensor(verts[idx], dtype=torch.float32),
                    torch.tensor(normals[idx], dtype=torch.float32),
                )
            )
        sets.append(per_eye)
    return sets


@dataclass
class Checkpoint:
    model_state: dict
    optimizer_state: dict
    config: dict
    iteration: int
    rng_state: torch.Tensor
    calibration: dict
    regions: dict
    n_frames: int

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "model_state": self.model_state,
                "optimizer_state": self.optimizer_state,
                "config": self.config,
                "iteration": self.iteration,
                "rng_state": self.rng_state,
                "calibration": self.calibration,
                "regions": self.regions,
                "n_frames": self.n_frames,
            },
            path,
        )

    @staticmethod
    def load(path) -> "Checkpoint":
        data = torch.load(path, weights_only=False)
        return Checkpoint(**data)

    def build_model(self) -> EyelidModel:
        cfg = _from_dict(TrainConfig, self.config).apply_ablations()
        model = EyelidModel(
            self.n_frames,
            cfg.model,
            learnable_gaze=cfg.learnable_gaze,
            learn_anchor_offsets=not cfg.no_offset,
        )
        if cfg.model.anchor_offsets_eye_only:
            regions = self.eye_regions()
            model.anchors.set_offset_region([
                (regions.bbox_left[0], regions.bbox_left[1]),
                (regions.bbox_right[0], regions.bbox_right[1]),
            ])
        model.load_state_dict(self.model_state)
        model.eval()
        return model

    def train_config(self) -> TrainConfig:
        return _from_dict(TrainConfig, self.config).apply_ablations()

    def eye_regions(self) -> EyeRegions:
        return EyeRegions(
            bbox_left=np.asarray(self.regions["left"]),
            bbox_right=np.asarray(self.regions["right"]),
        )


def _snapshot(model, optimizer, cfg, iteration, gen, calib_payload, regions, n_frames) -> Checkpoint:
    return Checkpoint(
        model_state=copy.deepcopy(model.state_dict()),
        optimizer_state=copy.deepcopy(optimizer.state_dict()),
        config=config_to_dict(cfg),
        iteration=iteration,
        rng_state=gen.get_state().clone(),
        calibration=calib_payload,
        regions=regions,
        n_frames=n_frames,
    )


def train(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    calib_left: EyeballCalibration,
    calib_right: EyeballCalibration,
    out_dir=None,
    log_file=None,
    progress=None,
) -> Checkpoint:
    cfg.apply_ablations()
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed + 1)

    model = EyelidModel(
        manifest.n_frames,
        cfg.model,
        learnable_gaze=cfg.learnable_gaze,
        learn_anchor_offsets=not cfg.no_offset,
    )
    closing = np.array([[f.closing_left, f.closing_right] for f in manifest.frames], dtype=np.float32)
    model.control.set_calibration(calib_left.rotations, calib_right.rotations, closing)

    regions = build_eye_regions(calib_left, calib_right)
    if cfg.model.anchor_offsets_eye_only:
        model.anchors.set_offset_region([
            (regions.bbox_left[0], regions.bbox_left[1]),
            (regions.bbox_right[0], regions.bbox_right[1]),
        ])
    frame_rays = build_frame_rays(manifest, regions)
    contact_sets = None if cfg.no_contact else build_contact_sets(manifest, calib_left, calib_right)

    base_params = [p for p in model.anchors.base.parameters() if p.requires_grad]
    offset_params = [p for p in model.anchors.offsets.parameters() if p.requires_grad]
    anchor_ids = {id(p) for p in model.anchors.parameters()}
    rest = [p for p in model.parameters() if id(p) not in anchor_ids and p.requires_grad]
    optimizer = torch.optim.Adam(
        [
            {"params": rest, "lr": cfg.learning_rate},
            {"params": base_params, "lr": cfg.learning_rate * cfg.anchor_lr_scale},
            {"params": offset_params, "lr": cfg.learning_rate * cfg.offset_lr_scale},
        ]
    )

    import math as _math

    def _lr_lambda(step):
        t = step / max(cfg.iterations, 1)
        return cfg.lr_decay + 0.5 * (1 - cfg.lr_decay) * (1 + _math.cos(_math.pi * t))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, _lr_lambda)

    calib_payload = {
        "left": {"position": calib_left.position.tolist(), "scale": calib_left.scale,
                 "rotations": calib_left.rotations.tolist()},
        "right": {"position": calib_right.position.tolist(), "scale": calib_right.scale,
                  "rotations": calib_right.rotations.tolist()},
    }
    regions_payload = {"left": regions.bbox_left.tolist(), "right": regions.bbox_right.tolist()}
    last_good = _snapshot(model, optimizer, cfg, 0, gen, calib_payload, regions_payload, manifest.n_frames)

    n_eye = int(round(cfg.rays_per_batch * cfg.eye_ray_fraction))
    near, far = manifest.near, manifest.far
    log_handle = open(log_file, "a") if log_file else None
    start = time.time()

    try:
        for it in range(cfg.iterations):
            alpha = min(1.0, it / max(cfg.window_fraction * cfg.iterations, 1.0))
            frame = int(torch.randint(manifest.n_frames, (1,), generator=gen))
            rays = frame_rays[frame]
            n_eye_f = min(n_eye, len(rays.eye_idx))
            sel_eye = rays.eye_idx[torch.randint(len(rays.eye_idx), (n_eye_f,), generator=gen)] if n_eye_f else torch.empty(0, dtype=torch.long)
            n_other = cfg.rays_per_batch - n_eye_f
            sel_other = rays.other_idx[torch.randint(len(rays.other_idx), (n_other,), generator=gen)]
            sel = torch.cat([sel_eye, sel_other])

            state = model.frame_state(frame, alpha=alpha)
            try:
                out = model.render_rays(
                    rays.origins[sel], rays.dirs[sel], near, far, state, cfg.sampling,
                    alpha=alpha, generator=gen, create_graph=True,
                )
            except FloatingPointError as exc:
                raise TrainingAborted(f"{exc} at iteration {it}", last_good) from exc

            labels = rays.labels[sel]
            keep = labels > 0.5  # opening/background pixels carry no surface color
            terms = {
                "color": color_loss(out.color[keep], rays.rgb[sel][keep]) if bool(keep.any()) else out.color.sum() * 0.0,
                "mask": mask_loss(labels, out.accumulation),
                "eikonal": eikonal_loss(out.gradients),
                "normal": normal_loss(out.weights, out.gradients[:, :-1], out.normal_pred[:, :-1]),
            }

            if contact_sets is not None:
                vert_list, normal_list = [], []
                for verts, normals in contact_sets[frame]:
                    if len(verts) == 0:
                        continue
                    take = min(cfg.loss.contact_samples, len(verts))
                    idx = torch.randint(len(verts), (take,), generator=gen)
                    vert_list.append(verts[idx])
                    normal_list.append(normals[idx])
                if vert_list:
                    cverts = torch.cat(vert_list)
                    cnormals = torch.cat(normal_list)
                    csdf, cgrad = model.sdf_with_gradient(cverts, state, alpha, create_graph=True)
                    terms["contact"] = contact_loss(csdf, cgrad, cnormals)

            if not cfg.no_disentangle:
                pts_flat = out.points.reshape(-1, 3)
                budget = min(cfg.loss.disentangle_points, len(pts_flat))
                idx = torch.randint(len(pts_flat), (budget,), generator=gen)
                pts_d = pts_flat[idx]
                tags = torch.tensor(regions.tag_points(pts_d.numpy()), dtype=torch.long)
                cc = model.control.code_config
                eps = {
                    "le": torch.randn(cc.eye_dim, generator=gen),
                    "re": torch.randn(cc.eye_dim, generator=gen),
                    "other": torch.randn(cc.other_dim, generator=gen),
                }
                terms["disentangle"] = disentangle_loss(
                    lambda p, c: model.control.hyper_coords(p, c, alpha),
                    pts_d,
                    tags,
                    state.code,
                    eps,
                )

            loss, report = total_loss(terms, cfg.loss)
            if not np.isfinite(report.total):
                raise TrainingAborted(f"non-finite loss at iteration {it}", last_good)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            scheduler.step()

            if log_handle and it % cfg.log_every == 0:
                log_handle.write(json.dumps({"step": it, **report.as_dict()}) + "\n")
            if (it + 1) % cfg.checkpoint_every == 0:
                last_good = _snapshot(model, optimizer, cfg, it + 1, gen, calib_payload,
                                      regions_payload, manifest.n_frames)
            if progress and it % 500 == 0:
                progress(it, report, time.time() - start)
    finally:
        if log_handle:
            log_handle.close()

    ckpt = _snapshot(model, optimizer, cfg, cfg.iterations, gen, calib_payload,
                     regions_payload, manifest.n_frames)
    if out_dir is not None:
        ckpt.save(Path(out_dir) / "checkpoint.pt")
    return ckpt
