"""Pinhole camera model and ray generation.

Convention (used everywhere in this package): right-handed camera frame with
+x right, +y up, and the camera looking down -z. Pixel u grows rightward and
pixel v grows downward, with pixel centers at integer coordinates. A world
point X projects through X_c = R^T (X - t) where (R, t) is the
world-from-camera pose and t is the camera center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    rotation: np.ndarray  # 3x3, world-from-camera
    translation: np.ndarray  # camera center in world coordinates

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        self.validate()

    def validate(self):
        if self.focal_x <= 0 or self.focal_y <= 0:
            raise CameraError(f"focal lengths must be positive, got ({self.focal_x}, {self.focal_y})")
        if not (0 <= self.principal_x < self.width and 0 <= self.principal_y < self.height):
            raise CameraError("principal point outside image")
        R = self.rotation
        if R.shape != (3, 3):
            raise CameraError(f"rotation must be 3x3, got {R.shape}")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0.5:
            raise CameraError("camera pose is not a rigid rotation (orthonormal, det +1)")

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array(
            [
                [self.focal_x, 0.0, self.principal_x],
                [0.0, self.focal_y, self.principal_y],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def center(self) -> np.ndarray:
        return self.translation

    @property
    def forward(self) -> np.ndarray:
        """Unit viewing direction (camera -z axis) in world coordinates."""
        return -self.rotation[:, 2]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to continuous pixel coordinates.

        Returns (uv, in_front) where in_front flags points with z_cam < 0.
        """
        pc = self.world_to_camera(points)
        z = -pc[..., 2]
        in_front = z > 1e-9
        zs = np.where(in_front, z, 1.0)
        u = self.principal_x + self.focal_x * pc[..., 0] / zs
        v = self.principal_y - self.focal_y * pc[..., 1] / zs
        return np.stack([u, v], axis=-1), in_front


def generate_rays(camera: CameraModel, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rays through the given (u, v) pixel coordinates.

    Returns (origins, directions) in world coordinates; directions are
    unit-norm and origins equal the camera center.
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    u, v = pixels[:, 0], pixels[:, 1]
    if np.any(u < -0.5) or np.any(u > camera.width - 0.5) or np.any(v < -0.5) or np.any(v > camera.height - 0.5):
        bad = pixels[(u < -0.5) | (u > camera.width - 0.5) | (v < -0.5) | (v > camera.height - 0.5)][0]
        raise CameraError(f"pixel {tuple(bad)} outside {camera.width}x{camera.height} image")
    dirs_cam = np.stack(
        [
            (u - camera.principal_x) / camera.focal_x,
            -(v - camera.principal_y) / camera.focal_y,
            -np.ones_like(u),
        ],
        axis=-1,
    )
    dirs = dirs_cam @ camera.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.translation, dirs.shape).copy()
    return origins, dirs


def pixel_grid(width: int, height: int) -> np.ndarray:
    """All (u, v) pixel-center coordinates of an image, row-major."""
    v, u = np.mgrid[0:height, 0:width]
    return np.stack([u.ravel(), v.ravel()], axis=-1).astype(np.float64)


def look_at_camera(
    position: np.ndarray,
    target: np.ndarray,
    up: np.ndarray,
    width: int,
    height: int,
    focal: float,
) -> CameraModel:
    """Camera at `position` looking at `target`, principal point centered."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)
    R = np.stack([right, true_up, -forward], axis=1)  # columns: x, y, z camera axes
    return CameraModel(
        width=width,
        height=height,
        focal_x=focal,
        focal_y=focal,
        principal_x=(width - 1) / 2.0,
        principal_y=(height - 1) / 2.0,
        rotation=R,
        translation=position,
    )
