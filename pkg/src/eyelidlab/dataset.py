"""Capture-sequence loading, validation, and per-frame annotations.

Directory layout:
    images/%06d.png             8-bit RGB
    masks/%06d.png              8-bit, 255 = actor
    eyelid_l/%06d.png           eyelid opening (visible eyeball) per eye
    eyelid_r/%06d.png
    iris_l/%06d.png
    iris_r/%06d.png
    cameras.json                per-frame 3x3 intrinsics + 4x4 world-from-camera (row-major)
    meta.json                   n, near, far, bounds, normalization, closing threshold
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .cameras import CameraError, CameraModel

# 3 px at 1080p, scaled by image height
CLOSING_THRESHOLD_1080 = 3.0
DEFAULT_EYE_REGION_MARGIN = 0.6


class DatasetError(ValueError):
    pass


@dataclass
class FrameRecord:
    index: int
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    actor_mask: np.ndarray  # (H, W) bool
    eyelid_mask_left: np.ndarray
    eyelid_mask_right: np.ndarray
    iris_mask_left: np.ndarray
    iris_mask_right: np.ndarray
    camera: CameraModel
    closing_left: bool = False
    closing_right: bool = False

    def validate(self):
        h, w = self.image.shape[:2]
        for name in ("actor_mask", "eyelid_mask_left", "eyelid_mask_right", "iris_mask_left", "iris_mask_right"):
            mask = getattr(self, name)
            if mask.shape != (h, w):
                raise DatasetError(f"frame {self.index}: {name} shape {mask.shape} != image {(h, w)}")
        for side in ("left", "right"):
            iris = getattr(self, f"iris_mask_{side}")
            lid = getattr(self, f"eyelid_mask_{side}")
            if np.any(iris & ~lid):
                raise DatasetError(f"frame {self.index}: iris mask not contained in eyelid mask ({side})")
            if np.any(lid & ~self.actor_mask):
                raise DatasetError(f"frame {self.index}: eyelid mask not covered by actor mask ({side})")
        if (self.camera.width, self.camera.height) != (w, h):
            raise DatasetError(f"frame {self.index}: camera size differs from image size")

    def reconstruction_mask(self) -> np.ndarray:
        """Supervision mask: actor silhouette minus the visible eyeball openings."""
        return self.actor_mask & ~(self.eyelid_mask_left | self.eyelid_mask_right)


@dataclass
class DatasetManifest:
    frames: list[FrameRecord]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    near: float
    far: float
    normalization: dict
    root: Path | None = None

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def image_size(self) -> tuple[int, int]:
        h, w = self.frames[0].image.shape[:2]
        return w, h


@dataclass
class EyeRegions:
    """Axis-aligned observation-space boxes for the two eyes; the complement
    is the residual "other" region."""

    bbox_left: np.ndarray  # (2, 3): min, max
    bbox_right: np.ndarray

    REGION_LEFT = 0
    REGION_RIGHT = 1
    REGION_OTHER = 2

    def tag_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points)
        tags = np.full(pts.shape[:-1], self.REGION_OTHER, dtype=np.int8)
        in_l = np.all((pts >= self.bbox_left[0]) & (pts <= self.bbox_left[1]), axis=-1)
        in_r = np.all((pts >= self.bbox_right[0]) & (pts <= self.bbox_right[1]), axis=-1)
        tags[in_l] = self.REGION_LEFT
        tags[in_r] = self.REGION_RIGHT
        return tags


def _load_gray(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    return np.asarray(Image.open(path).convert("L"))


def _load_rgb(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    return np.asarray(Image.open(path).convert("RGB")).astype(np.float32) / 255.0


def load_dataset(root) -> DatasetManifest:
    root = Path(root)
    meta_path = root / "meta.json"
    cams_path = root / "cameras.json"
    for p in (meta_path, cams_path):
        if not p.exists():
            raise DatasetError(f"missing file: {p}")
    meta = json.loads(meta_path.read_text())
    cams = json.loads(cams_path.read_text())
    n = int(meta["n"])
    if n < 2:
        raise DatasetError(f"dataset must have at least 2 frames, got {n}")
    if len(cams["frames"]) != n:
        raise DatasetError("cameras.json frame count does not match meta.json")

    threshold = float(meta.get("closing_threshold", 0.0))
    frames = []
    for i in range(n):
        name = f"{i:06d}.png"
        cam_entry = cams["frames"][i]
        K = np.asarray(cam_entry["intrinsics"], dtype=np.float64)
        M = np.asarray(cam_entry["world_from_camera"], dtype=np.float64)
        image = _load_rgb(root / "images" / name)
        h, w = image.shape[:2]
        try:
            camera = CameraModel(
                width=w,
                height=h,
                focal_x=K[0, 0],
                focal_y=K[1, 1],
                principal_x=K[0, 2],
                principal_y=K[1, 2],
                rotation=M[:3, :3],
                translation=M[:3, 3],
            )
        except CameraError as exc:
            raise DatasetError(f"frame {i}: {exc}") from exc
        frame = FrameRecord(
            index=i,
            image=image,
            actor_mask=_load_gray(root / "masks" / name) > 127,
            eyelid_mask_left=_load_gray(root / "eyelid_l" / name) > 127,
            eyelid_mask_right=_load_gray(root / "eyelid_r" / name) > 127,
            iris_mask_left=_load_gray(root / "iris_l" / name) > 127,
            iris_mask_right=_load_gray(root / "iris_r" / name) > 127,
            camera=camera,
        )
        frame.validate()
        frames.append(frame)

    if threshold <= 0:
        threshold = CLOSING_THRESHOLD_1080 * frames[0].image.shape[0] / 1080.0
    flags = compute_closing_flags(
        [(f.eyelid_mask_left, f.eyelid_mask_right) for f in frames], threshold=threshold
    )
    for frame, (cl, cr) in zip(frames, flags):
        frame.closing_left = bool(cl)
        frame.closing_right = bool(cr)

    bounds = meta.get("bounds")
    if bounds is None:
        raise DatasetError("meta.json missing bounds")
    bmin = np.asarray(bounds["min"], dtype=np.float64)
    bmax = np.asarray(bounds["max"], dtype=np.float64)
    if np.any(bmin >= bmax):
        raise DatasetError("degenerate scene bounds")
    center = (bmin + bmax) / 2
    for frame in frames:
        _, in_front = frame.camera.project(center[None])
        if not in_front[0]:
            raise DatasetError(f"frame {frame.index}: camera does not face the scene bounds")

    return DatasetManifest(
        frames=frames,
        bounds_min=bmin,
        bounds_max=bmax,
        near=float(meta["near"]),
        far=float(meta["far"]),
        normalization=meta.get("normalization", {"scale": 1.0, "offset": [0.0, 0.0, 0.0]}),
        root=root,
    )


def eyelid_gap_px(mask: np.ndarray) -> float:
    """Vertical extent (px) of the eyelid-opening mask; 0 when fully closed."""
    rows = np.nonzero(np.asarray(mask).any(axis=1))[0]
    if len(rows) == 0:
        return 0.0
    return float(rows.max() - rows.min() + 1)


def compute_closing_flags(eyelid_masks, threshold: float) -> np.ndarray:
    """Per-frame (closed_left, closed_right) from eyelid-opening masks.

    `eyelid_masks` is a sequence of (left, right) mask pairs. An eye counts
    as closed when the vertical gap between its upper and lower eyelid is at
    most `threshold` pixels.
    """
    flags = []
    for i, pair in enumerate(eyelid_masks):
        if pair is None or pair[0] is None or pair[1] is None:
            raise DatasetError(f"frame {i}: missing eyelid annotation")
        flags.append([eyelid_gap_px(pair[0]) <= threshold, eyelid_gap_px(pair[1]) <= threshold])
    return np.asarray(flags, dtype=bool)


def build_eye_regions(calibration_left, calibration_right, margin: float = DEFAULT_EYE_REGION_MARGIN) -> EyeRegions:
    """Per-eye boxes: the calibrated eyeball's bounding cube scaled by
    (1 + margin) about its center, shrunk symmetrically if the two overlap."""
    boxes = []
    for calib in (calibration_left, calibration_right):
        scale = float(calib.scale)
        if scale <= 0:
            raise ValueError("degenerate calibration: scale <= 0")
        center = np.asarray(calib.position, dtype=np.float64)
        half = (1.0 + margin) * scale * getattr(calib, "template_radius", 1.0)
        boxes.append([center, half])
    (c1, h1), (c2, h2) = boxes
    sep = np.abs(c1 - c2)
    overlap = np.all(sep < h1 + h2)
    if overlap:
        axis = int(np.argmax(sep))
        if sep[axis] <= 0:
            raise ValueError("eye calibrations coincide; cannot build disjoint regions")
        factor = 0.999 * sep[axis] / (h1 + h2)
        h1, h2 = h1 * factor, h2 * factor
    return EyeRegions(
        bbox_left=np.stack([c1 - h1, c1 + h1]),
        bbox_right=np.stack([c2 - h2, c2 + h2]),
    )
