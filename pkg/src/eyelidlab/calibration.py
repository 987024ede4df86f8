"""Eyeball calibration: recover per-eye position, scale, and per-frame
rotations by aligning the rendered template iris with observed iris masks.

Two stages: a coarse stage fits position and scale to the observed iris
centers and sizes with rotations held fixed; the fine stage jointly refines
everything against the masks themselves, keeping the center/size terms as
regularizers (weights lambda1, lambda2). The two eyes are solved
independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .eyeball import (
    EyeballTemplate,
    iris_center_and_size,
    polygon_centroid_and_size,
    polygon_signed_distance,
)

MIN_IRIS_AREA_PX = 50.0
DEFAULT_PITCH_BOUND = 25.0
DEFAULT_YAW_BOUND = 35.0


class CalibrationError(RuntimeError):
    pass


@dataclass
class EyeballCalibration:
    position: np.ndarray  # (3,)
    scale: float
    rotations: np.ndarray  # (n, 2): pitch, yaw in degrees
    residuals: np.ndarray | None = None  # per-frame final mask loss
    template_radius: float = 1.0
    at_rotation_bound: np.ndarray | None = None
    warning: str | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 2)
        if self.scale <= 0:
            raise ValueError(f"calibration scale must be positive, got {self.scale}")

    @property
    def radius(self) -> float:
        return self.scale * self.template_radius


def perturb_calibration(calib: EyeballCalibration, ratio: float, seed: int) -> EyeballCalibration:
    """Displace the position along a seeded random unit direction by
    ratio * eyeball radius; everything else unchanged."""
    if ratio < 0:
        raise ValueError("ratio must be non-negative")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return replace(calib, position=calib.position + ratio * calib.radius * direction,
                   rotations=calib.rotations.copy())


def _batched_rotation(pitch_deg: torch.Tensor, yaw_deg: torch.Tensor) -> torch.Tensor:
    """(n,) pitch/yaw degrees -> (n, 3, 3); yaw about +y first, then pitch about +x."""
    p = torch.deg2rad(pitch_deg)
    y = torch.deg2rad(yaw_deg)
    cp, sp = torch.cos(p), torch.sin(p)
    cy, sy = torch.cos(y), torch.sin(y)
    zero = torch.zeros_like(p)
    one = torch.ones_like(p)
    ry = torch.stack([cy, zero, sy, zero, one, zero, -sy, zero, cy], dim=-1).reshape(-1, 3, 3)
    rp = torch.stack([one, zero, zero, zero, cp, sp, zero, -sp, cp], dim=-1).reshape(-1, 3, 3)
    return rp @ ry


class _FrameBatch:
    """Precomputed per-eye tensors for the usable calibration frames."""

    def __init__(self, frames, template: EyeballTemplate, eye: str,
                 min_iris_area: float = MIN_IRIS_AREA_PX, ring_samples: int = 24,
                 dtype=torch.float64):
        self.dtype = dtype
        masks, cams, keep = [], [], []
        for k, frame in enumerate(frames):
            mask = frame.iris_mask_left if eye == "left" else frame.iris_mask_right
            if mask.sum() >= min_iris_area:
                keep.append(k)
                masks.append(mask)
                cams.append(frame.camera)
        self.kept_indices = np.asarray(keep, dtype=np.int64)
        self.n_total = len(frames)
        if not keep:
            raise CalibrationError(f"all iris masks empty (or below {min_iris_area} px) for {eye} eye")
        self.n = len(keep)
        openings = [
            getattr(frames[k], f"eyelid_mask_{eye}") for k in keep
        ]
        centers, sizes = [], []
        for m in masks:
            c, r = iris_center_and_size(m)
            centers.append(c)
            sizes.append(r)
        self.gt_center = torch.tensor(np.asarray(centers), dtype=dtype)  # (n, 2)
        self.gt_size = torch.tensor(np.asarray(sizes), dtype=dtype)  # (n,)

        self.cam_R = torch.tensor(np.stack([c.rotation for c in cams]), dtype=dtype)
        self.cam_t = torch.tensor(np.stack([c.translation for c in cams]), dtype=dtype)
        self.fx = torch.tensor([c.focal_x for c in cams], dtype=dtype)
        self.fy = torch.tensor([c.focal_y for c in cams], dtype=dtype)
        self.cx = torch.tensor([c.principal_x for c in cams], dtype=dtype)
        self.cy = torch.tensor([c.principal_y for c in cams], dtype=dtype)

        ring = template.vertices[template.iris_ring]
        step = max(1, len(ring) // ring_samples)
        self.ring = torch.tensor(ring[::step], dtype=dtype)  # (K, 3)
        self.cut_z = template.cut_z

        # fixed crop windows around the observed iris, generous enough for
        # the pose to wander during optimization
        half = int(np.ceil(0.62 * float(self.gt_size.max()))) + 4
        self.crop_half = half
        origins, crops, weights = [], [], []
        side = 2 * half + 1
        for m, opening, c in zip(masks, openings, centers):
            h, w = m.shape
            u0 = int(np.clip(round(c[0]) - half, 0, max(w - side, 0)))
            v0 = int(np.clip(round(c[1]) - half, 0, max(h - side, 0)))
            origins.append((u0, v0))
            crops.append(m[v0 : v0 + side, u0 : u0 + side].astype(np.float64))
            # pixels covered by the eyelid say nothing about the iris: weight 0
            weights.append(opening[v0 : v0 + side, u0 : u0 + side].astype(np.float64))
        self.crop_origin = torch.tensor(np.asarray(origins), dtype=dtype)  # (n, 2)
        self.crop_masks = torch.tensor(np.stack(crops), dtype=dtype)  # (n, S, S)
        self.crop_weights = torch.tensor(np.stack(weights), dtype=dtype)
        vv, uu = torch.meshgrid(
            torch.arange(side, dtype=dtype), torch.arange(side, dtype=dtype), indexing="ij"
        )
        self.crop_pixels = torch.stack([uu.reshape(-1), vv.reshape(-1)], dim=-1)  # (S*S, 2)

    def project_ring(self, position, scale, rotations, subset=None):
        """(n, K, 2) projected iris polygons plus (n,) facing cosines."""
        R = _batched_rotation(rotations[:, 0], rotations[:, 1])
        cam_R, cam_t = self.cam_R, self.cam_t
        fx, fy, cx, cy = self.fx, self.fy, self.cx, self.cy
        if subset is not None:
            R, cam_R, cam_t = R[subset], cam_R[subset], cam_t[subset]
            fx, fy, cx, cy = fx[subset], fy[subset], cx[subset], cy[subset]
        world = position + scale * torch.einsum("nij,kj->nki", R, self.ring)
        center_world = position + scale * self.cut_z * R[:, :, 2]
        to_cam = cam_t - center_world
        facing = (R[:, :, 2] * to_cam).sum(-1) / torch.linalg.norm(to_cam, dim=-1)
        rel = world - cam_t[:, None, :]
        pc = torch.einsum("nki,nij->nkj", rel, cam_R)
        z = (-pc[..., 2]).clamp_min(1e-6)
        u = cx[:, None] + fx[:, None] * pc[..., 0] / z
        v = cy[:, None] - fy[:, None] * pc[..., 1] / z
        return torch.stack([u, v], dim=-1), facing


def _batched_centroid_size(polys: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Area centroids (n, 2) and max extents + 1 px (n,) of polygons (n, K, 2)."""
    v0 = polys
    v1 = torch.roll(polys, -1, dims=1)
    cross = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
    area = cross.sum(-1) / 2.0
    centroid = ((v0 + v1) * cross[..., None]).sum(1) / (6.0 * area[:, None])
    extent = polys.max(dim=1).values - polys.min(dim=1).values
    return centroid, extent.max(dim=-1).values + 1.0


def coarse_objective(batch: _FrameBatch, position, scale, rotations, subset=None) -> torch.Tensor:
    """Sum over frames of |center - rendered center|_1 + |size - rendered size|_1."""
    polys, _ = batch.project_ring(position, scale, rotations, subset)
    c, s = _batched_centroid_size(polys)
    gt_c = batch.gt_center if subset is None else batch.gt_center[subset]
    gt_s = batch.gt_size if subset is None else batch.gt_size[subset]
    return (gt_c - c).abs().sum() + (gt_s - s).abs().sum()


def fine_objective(batch: _FrameBatch, position, scale, rotations, lambda1, lambda2,
                   sharpness, subset=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Mask MSE plus center/size regularizers. Returns (total, per-frame mask term)."""
    polys, facing = batch.project_ring(position, scale, rotations, subset)
    origin = batch.crop_origin if subset is None else batch.crop_origin[subset]
    crops = batch.crop_masks if subset is None else batch.crop_masks[subset]
    weights = batch.crop_weights if subset is None else batch.crop_weights[subset]
    pix = origin[:, None, :] + batch.crop_pixels[None, :, :]  # (n, P, 2)
    v0 = polys
    v1 = torch.roll(polys, -1, dims=1)
    e = v1 - v0
    elen = torch.linalg.norm(e, dim=-1).clamp_min(1e-12)
    d = pix[:, :, None, :] - v0[:, None, :, :]  # (n, P, K, 2)
    cross = e[:, None, :, 0] * d[..., 1] - e[:, None, :, 1] * d[..., 0]
    signed = cross / elen[:, None, :]
    area2 = (v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]).sum(-1)
    orient = torch.sign(area2)[:, None, None]
    sd = (orient * signed).min(dim=-1).values  # (n, P)
    soft = torch.sigmoid(sharpness * sd) * torch.sigmoid(30.0 * facing)[:, None]
    sq = (soft - crops.reshape(len(crops), -1)) ** 2
    mask_term = (weights.reshape(len(crops), -1) * sq).sum(-1)  # per frame
    c, s = _batched_centroid_size(polys)
    gt_c = batch.gt_center if subset is None else batch.gt_center[subset]
    gt_s = batch.gt_size if subset is None else batch.gt_size[subset]
    reg = lambda1 * (gt_c - c).abs().sum() + lambda2 * (gt_s - s).abs().sum()
    return mask_term.sum() + reg, mask_term


def initialize_calibration(frames, template: EyeballTemplate, eye: str,
                           min_iris_area: float = MIN_IRIS_AREA_PX) -> EyeballCalibration:
    """Closed-form single-view start: the eyeball center sits on the ray
    through the iris centroid of the clearest frame, at the depth where the
    unit-scale template iris matches the observed size."""
    best, best_area = None, -1.0
    for frame in frames:
        mask = frame.iris_mask_left if eye == "left" else frame.iris_mask_right
        area = float(mask.sum())
        if area > best_area:
            best, best_area = frame, area
    if best is None or best_area < min_iris_area:
        raise CalibrationError(f"no usable iris masks for {eye} eye")
    mask = best.iris_mask_left if eye == "left" else best.iris_mask_right
    center, size = iris_center_and_size(mask)
    cam = best.camera
    scale = 1.0
    depth = cam.focal_x * (2.0 * scale * template.iris_ratio) / size
    from .cameras import generate_rays

    origin, direction = generate_rays(cam, center[None])
    # the iris plane sits cut_z in front of the center: push the center back
    position = origin[0] + (depth + scale * template.cut_z) * direction[0]
    return EyeballCalibration(
        position=position,
        scale=scale,
        rotations=np.zeros((len(frames), 2)),
        template_radius=1.0,
    )


def _run_adam(param_groups, step_objective, full_objective, steps: int, clamp_fn=None,
              divergence_window: int = 10, check_every: int = 50):
    """Adam with x0.5 decay at 1/3 and 2/3 of the schedule. Tracks the best
    parameters under the full objective; raises on sustained divergence."""
    params = [p for g in param_groups for p in g["params"]]
    opt = torch.optim.Adam(param_groups)
    sched = torch.optim.lr_scheduler.MultiStepLR(opt, milestones=[steps // 3, 2 * steps // 3], gamma=0.5)
    best_state = [p.detach().clone() for p in params]
    with torch.no_grad():
        best_loss = float(full_objective())
    worse_checks = 0
    last_check = best_loss
    for step in range(steps):
        opt.zero_grad()
        loss = step_objective(step)
        if not torch.isfinite(loss):
            raise CalibrationError(f"non-finite calibration loss at step {step}")
        loss.backward()
        opt.step()
        sched.step()
        if clamp_fn is not None:
            clamp_fn()
        if (step + 1) % check_every == 0 or step == steps - 1:
            with torch.no_grad():
                val = float(full_objective())
            if val < best_loss:
                best_loss = val
                best_state = [p.detach().clone() for p in params]
            if val > last_check:
                worse_checks += 1
                if worse_checks >= divergence_window:
                    raise CalibrationError(
                        f"calibration diverged: loss increased {divergence_window} checks in a row"
                    )
            else:
                worse_checks = 0
            last_check = val
    with torch.no_grad():
        for p, b in zip(params, best_state):
            p.copy_(b)
    return best_loss


def calibrate_coarse(frames, template: EyeballTemplate, init: EyeballCalibration,
                     *, eye: str = "left", steps: int = 2000, lr: float = 1e-2,
                     min_iris_area: float = MIN_IRIS_AREA_PX) -> EyeballCalibration:
    batch = _FrameBatch(frames, template, eye, min_iris_area=min_iris_area)
    warning = init.warning
    if batch.n < 2:
        warning = "single usable frame: depth along the view ray is unconstrained"
    position = torch.tensor(init.position, dtype=torch.float64, requires_grad=True)
    log_scale = torch.tensor(np.log(init.scale), dtype=torch.float64, requires_grad=True)
    rotations = torch.tensor(init.rotations[batch.kept_indices], dtype=torch.float64)

    def objective(step=None):
        return coarse_objective(batch, position, torch.exp(log_scale), rotations)

    _run_adam([{"params": [position, log_scale], "lr": lr}], objective, objective, steps)
    return EyeballCalibration(
        position=position.detach().numpy(),
        scale=float(torch.exp(log_scale).detach()),
        rotations=init.rotations.copy(),
        template_radius=init.template_radius,
        warning=warning,
    )


def calibrate_fine(frames, template: EyeballTemplate, coarse: EyeballCalibration,
                   lambda1: float = 0.1, lambda2: float = 0.01, *, eye: str = "left",
                   steps: int = 3000, lr: float = 1e-2, rotation_lr: float = 5e-2,
                   frame_batch: int = 16,
                   min_iris_area: float = MIN_IRIS_AREA_PX,
                   pitch_bound: float = DEFAULT_PITCH_BOUND,
                   yaw_bound: float = DEFAULT_YAW_BOUND,
                   sharpness: tuple[float, float] = (0.9, 3.0)) -> EyeballCalibration:
    batch = _FrameBatch(frames, template, eye, min_iris_area=min_iris_area)
    skipped = batch.n_total - batch.n
    warning = coarse.warning
    if skipped:
        warning = (warning + "; " if warning else "") + f"{skipped} near-closed frames skipped"
    position = torch.tensor(coarse.position, dtype=torch.float64, requires_grad=True)
    log_scale = torch.tensor(np.log(coarse.scale), dtype=torch.float64, requires_grad=True)
    rotations = torch.tensor(coarse.rotations[batch.kept_indices], dtype=torch.float64, requires_grad=True)
    bound = torch.tensor([pitch_bound, yaw_bound], dtype=torch.float64)
    s0, s1 = sharpness
    # round-robin frame minibatches keep the per-step cost bounded
    chunk = min(batch.n, max(8, frame_batch))
    order = np.arange(batch.n)

    def step_objective(step):
        sh = s0 + (s1 - s0) * step / max(steps - 1, 1)
        start = (step * chunk) % batch.n
        subset = torch.as_tensor(np.take(order, range(start, start + chunk), mode="wrap"))
        total, _ = fine_objective(batch, position, torch.exp(log_scale), rotations,
                                  lambda1, lambda2, sh, subset=subset)
        return total * (batch.n / chunk)

    def full_objective():
        total, _ = fine_objective(batch, position, torch.exp(log_scale), rotations,
                                  lambda1, lambda2, s1)
        return total

    def clamp():
        with torch.no_grad():
            rotations.clamp_(min=-bound, max=bound)

    groups = [
        {"params": [position, log_scale], "lr": lr},
        # rotations are in degrees; they need to travel tens of units
        {"params": [rotations], "lr": rotation_lr},
    ]
    _run_adam(groups, step_objective, full_objective, steps, clamp_fn=clamp)

    with torch.no_grad():
        _, mask_term = fine_objective(batch, position, torch.exp(log_scale), rotations,
                                      lambda1, lambda2, s1)
    full_rot = coarse.rotations.copy()
    full_rot[batch.kept_indices] = rotations.detach().numpy()
    residuals = np.full(batch.n_total, np.nan)
    residuals[batch.kept_indices] = mask_term.numpy()
    at_bound = np.zeros((batch.n_total, 2), dtype=bool)
    at_bound[batch.kept_indices] = np.abs(rotations.detach().numpy()) >= bound.numpy() - 1e-9
    return EyeballCalibration(
        position=position.detach().numpy(),
        scale=float(torch.exp(log_scale).detach()),
        rotations=full_rot,
        residuals=residuals,
        template_radius=coarse.template_radius,
        at_rotation_bound=at_bound,
        warning=warning,
    )


def calibrate(frames, template: EyeballTemplate, eye: str = "left",
              lambda1: float = 0.1, lambda2: float = 0.01,
              coarse_steps: int = 2000, fine_steps: int = 3000,
              min_iris_area: float = MIN_IRIS_AREA_PX) -> EyeballCalibration:
    init = initialize_calibration(frames, template, eye, min_iris_area=min_iris_area)
    coarse = calibrate_coarse(frames, template, init, eye=eye, steps=coarse_steps,
                              min_iris_area=min_iris_area)
    return calibrate_fine(frames, template, coarse, lambda1, lambda2, eye=eye,
                          steps=fine_steps, min_iris_area=min_iris_area)


def save_calibrations(path, left: EyeballCalibration, right: EyeballCalibration):
    payload = {}
    for side, calib in (("left", left), ("right", right)):
        payload[side] = {
            "position": calib.position.tolist(),
            "scale": calib.scale,
            "rotations": calib.rotations.tolist(),
            "template_radius": calib.template_radius,
        }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_calibrations(path) -> tuple[EyeballCalibration, EyeballCalibration]:
    payload = json.loads(Path(path).read_text())
    out = []
    for side in ("left", "right"):
        d = payload[side]
        out.append(
            EyeballCalibration(
                position=np.asarray(d["position"]),
                scale=float(d["scale"]),
                rotations=np.asarray(d["rotations"]),
                template_radius=float(d.get("template_radius", 1.0)),
            )
        )
    return out[0], out[1]
