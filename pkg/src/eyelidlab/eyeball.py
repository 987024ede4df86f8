"""Parametric eyeball: cut-sphere template with cornea bulge, posing, and
differentiable iris silhouette rendering.

Model space: +z is the eye's forward axis, +y up, +x to the actor's left.
Pitch rotates about model +x (positive looks up), yaw about model +y
(positive looks toward +x); yaw is applied first, then pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .cameras import CameraModel
from .meshes import write_ply

REGION_SCLERA = 0
REGION_IRIS = 1
REGION_CORNEA = 2

# Ocular anthropometry defaults: 6 mm iris radius on a 12 mm eyeball,
# 7.8 mm cornea sphere.
DEFAULT_IRIS_RATIO = 0.5
DEFAULT_CORNEA_RATIO = 0.65


@dataclass(frozen=True)
class EyeballTemplate:
    vertices: np.ndarray  # (V, 3) unit-radius model space
    faces: np.ndarray  # (F, 3)
    normals: np.ndarray  # (V, 3) unit
    vertex_regions: np.ndarray  # (V,) REGION_* codes
    face_regions: np.ndarray  # (F,)
    iris_ring: np.ndarray  # vertex indices of the iris boundary circle
    iris_ratio: float = DEFAULT_IRIS_RATIO
    cornea_ratio: float = DEFAULT_CORNEA_RATIO

    @property
    def cut_z(self) -> float:
        return math.sqrt(1.0 - self.iris_ratio**2)

    @property
    def cornea_center_z(self) -> float:
        return self.cut_z - math.sqrt(self.cornea_ratio**2 - self.iris_ratio**2)

    @property
    def cornea_apex_z(self) -> float:
        return self.cornea_center_z + self.cornea_ratio

    def export_ply(self, path):
        write_ply(path, self.vertices, self.faces, vertex_labels=self.vertex_regions)


@dataclass
class EyeballPose:
    position: np.ndarray  # (3,) world
    scale: float
    pitch: float  # degrees
    yaw: float  # degrees

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if self.scale <= 0:
            raise ValueError(f"eyeball scale must be positive, got {self.scale}")


def rotation_matrix(pitch_deg, yaw_deg):
    """Yaw about model +y, then pitch about model +x. Positive pitch looks up."""
    p = math.radians(pitch_deg)
    y = math.radians(yaw_deg)
    ry = np.array([[math.cos(y), 0.0, math.sin(y)], [0.0, 1.0, 0.0], [-math.sin(y), 0.0, math.cos(y)]])
    rp = np.array([[1.0, 0.0, 0.0], [0.0, math.cos(p), math.sin(p)], [0.0, -math.sin(p), math.cos(p)]])
    return rp @ ry


def rotation_matrix_torch(pitch_deg: torch.Tensor, yaw_deg: torch.Tensor) -> torch.Tensor:
    p = torch.deg2rad(pitch_deg)
    y = torch.deg2rad(yaw_deg)
    one = torch.ones_like(p)
    zero = torch.zeros_like(p)
    ry = torch.stack(
        [torch.stack([torch.cos(y), zero, torch.sin(y)]),
         torch.stack([zero, one, zero]),
         torch.stack([-torch.sin(y), zero, torch.cos(y)])]
    )
    rp = torch.stack(
        [torch.stack([one, zero, zero]),
         torch.stack([zero, torch.cos(p), torch.sin(p)]),
         torch.stack([zero, -torch.sin(p), torch.cos(p)])]
    )
    return rp @ ry


def build_template(ring_count: int = 32, iris_ratio: float = DEFAULT_IRIS_RATIO,
                   cornea_ratio: float = DEFAULT_CORNEA_RATIO) -> EyeballTemplate:
    """Cut sphere plus convex cornea cap plus planar iris disk.

    The sphere is cut at the iris boundary circle (radius `iris_ratio`); the
    cornea is the cap of a second sphere passing through that circle. The
    iris is a flat disk spanning the cut.
    """
    if ring_count < 8:
        raise ValueError("ring_count must be >= 8")
    if not 0 < iris_ratio < cornea_ratio:
        raise ValueError("need 0 < iris_ratio < cornea_ratio")
    m = ring_count
    z_cut = math.sqrt(1.0 - iris_ratio**2)
    theta_cut = math.acos(z_cut)
    c0 = z_cut - math.sqrt(cornea_ratio**2 - iris_ratio**2)

    phis = 2.0 * math.pi * np.arange(m) / m
    cos_p, sin_p = np.cos(phis), np.sin(phis)

    verts, regions, rows = [], [], []

    def add_row(xyz_row, region):
        start = len(verts)
        verts.extend(xyz_row)
        regions.extend([region] * len(xyz_row))
        rows.append(np.arange(start, start + len(xyz_row)))

    # sclera: from the south pole (z=-1) up to the cut circle
    n_sph = max(8, ring_count // 2 + 4)
    add_row([np.array([0.0, 0.0, -1.0])], REGION_SCLERA)
    thetas = np.linspace(math.pi, theta_cut, n_sph + 1)[1:]
    for i, th in enumerate(thetas):
        r, z = math.sin(th), math.cos(th)
        region = REGION_IRIS if i == len(thetas) - 1 else REGION_SCLERA  # boundary ring
        add_row(np.stack([r * cos_p, r * sin_p, np.full(m, z)], axis=-1), region)
    ring_row_idx = len(rows) - 1
    sphere_rows = list(range(len(rows)))

    # cornea: cap of the second sphere from the cut circle to the apex
    ang_ring = math.atan2(iris_ratio, z_cut - c0)
    n_cor = max(4, ring_count // 4 + 2)
    cor_angles = np.linspace(ang_ring, 0.0, n_cor + 1)[1:-1]
    cornea_rows = [ring_row_idx]
    for a in cor_angles:
        r = cornea_ratio * math.sin(a)
        z = c0 + cornea_ratio * math.cos(a)
        add_row(np.stack([r * cos_p, r * sin_p, np.full(m, z)], axis=-1), REGION_CORNEA)
        cornea_rows.append(len(rows) - 1)
    add_row([np.array([0.0, 0.0, c0 + cornea_ratio])], REGION_CORNEA)
    cornea_rows.append(len(rows) - 1)

    # iris disk: planar fill of the cut circle
    n_disk = max(3, ring_count // 8 + 2)
    disk_radii = np.linspace(iris_ratio, 0.0, n_disk + 1)[1:-1]
    disk_rows = [ring_row_idx]
    for r in disk_radii:
        add_row(np.stack([r * cos_p, r * sin_p, np.full(m, z_cut)], axis=-1), REGION_IRIS)
        disk_rows.append(len(rows) - 1)
    add_row([np.array([0.0, 0.0, z_cut])], REGION_IRIS)
    disk_rows.append(len(rows) - 1)

    verts = np.asarray(verts, dtype=np.float64)
    regions = np.asarray(regions, dtype=np.int8)

    faces, face_regions = [], []

    def stitch(row_a, row_b, region):
        a, b = rows[row_a], rows[row_b]
        if len(a) == 1:  # pole fan
            for k in range(m):
                faces.append([a[0], b[k], b[(k + 1) % m]])
                face_regions.append(region)
        elif len(b) == 1:
            for k in range(m):
                faces.append([a[k], b[0], a[(k + 1) % m]])
                face_regions.append(region)
        else:
            for k in range(m):
                k1 = (k + 1) % m
                faces.append([a[k], b[k], b[k1]])
                faces.append([a[k], b[k1], a[k1]])
                face_regions.extend([region, region])

    for i in range(len(sphere_rows) - 1):
        stitch(sphere_rows[i], sphere_rows[i + 1], REGION_SCLERA)
    for i in range(len(cornea_rows) - 1):
        stitch(cornea_rows[i], cornea_rows[i + 1], REGION_CORNEA)
    for i in range(len(disk_rows) - 1):
        stitch(disk_rows[i], disk_rows[i + 1], REGION_IRIS)

    faces = np.asarray(faces, dtype=np.int64)
    face_regions = np.asarray(face_regions, dtype=np.int8)

    normals = np.zeros_like(verts)
    on_sphere = np.concatenate([rows[i] for i in sphere_rows])
    normals[on_sphere] = verts[on_sphere]
    on_cornea = np.concatenate([rows[i] for i in cornea_rows[1:]])
    normals[on_cornea] = verts[on_cornea] - np.array([0.0, 0.0, c0])
    normals[on_cornea] /= cornea_ratio
    on_disk = np.concatenate([rows[i] for i in disk_rows[1:]])
    normals[on_disk] = np.array([0.0, 0.0, 1.0])

    return EyeballTemplate(
        vertices=verts,
        faces=faces,
        normals=normals,
        vertex_regions=regions,
        face_regions=face_regions,
        iris_ring=rows[ring_row_idx].copy(),
        iris_ratio=iris_ratio,
        cornea_ratio=cornea_ratio,
    )


def pose_vertices(template: EyeballTemplate, pose: EyeballPose) -> tuple[np.ndarray, np.ndarray]:
    """World-space vertices and normals: v = P + s * R(p, y) * v_model."""
    R = rotation_matrix(pose.pitch, pose.yaw)
    verts = pose.position + pose.scale * (template.vertices @ R.T)
    normals = template.normals @ R.T
    return verts, normals


def _project_torch(points: torch.Tensor, camera: CameraModel) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable pinhole projection. Returns (uv, depth along -z)."""
    Rc = torch.as_tensor(camera.rotation, dtype=points.dtype)
    tc = torch.as_tensor(camera.translation, dtype=points.dtype)
    pc = (points - tc) @ Rc
    z = -pc[..., 2]
    u = camera.principal_x + camera.focal_x * pc[..., 0] / z
    v = camera.principal_y - camera.focal_y * pc[..., 1] / z
    return torch.stack([u, v], dim=-1), z


def project_iris_ring(
    template: EyeballTemplate,
    camera: CameraModel,
    position: torch.Tensor,
    scale: torch.Tensor,
    pitch: torch.Tensor,
    yaw: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Projected iris boundary polygon (K, 2) and its facing cosine."""
    ring = torch.as_tensor(template.vertices[template.iris_ring], dtype=position.dtype)
    R = rotation_matrix_torch(pitch, yaw)
    world = position + scale * (ring @ R.T)
    center_world = position + scale * template.cut_z * R[:, 2]
    cam_center = torch.as_tensor(camera.translation, dtype=position.dtype)
    to_cam = cam_center - center_world
    facing = (R[:, 2] * to_cam).sum() / torch.linalg.norm(to_cam)
    uv, z = _project_torch(world, camera)
    if (z <= 0).any():
        raise ValueError("eyeball behind camera")
    return uv, facing


def polygon_signed_distance(polygon: torch.Tensor, pixels: torch.Tensor) -> torch.Tensor:
    """Signed distance (px) from pixels (N, 2) to a convex polygon (K, 2).

    Positive inside. Uses per-edge line distances, exact for convex polygons
    up to the small vertex wedges outside.
    """
    v0 = polygon
    v1 = torch.roll(polygon, -1, dims=0)
    e = v1 - v0  # (K, 2)
    elen = torch.linalg.norm(e, dim=-1).clamp_min(1e-12)
    # cross(e, p - v0) per edge per pixel
    d = pixels[:, None, :] - v0[None, :, :]  # (N, K, 2)
    cross = e[None, :, 0] * d[..., 1] - e[None, :, 1] * d[..., 0]
    signed = cross / elen[None, :]
    area2 = (v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]).sum()
    orient = torch.sign(area2.detach())
    if float(orient) == 0.0:
        orient = torch.ones((), dtype=polygon.dtype)
    return (orient * signed).min(dim=-1).values


def polygon_centroid_and_size(polygon: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Area centroid and max(width, height) of the polygon, in pixel units.

    Extents are padded by one pixel footprint so they are comparable with
    support sizes measured on rasterized masks.
    """
    v0 = polygon
    v1 = torch.roll(polygon, -1, dims=0)
    cross = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
    area = cross.sum() / 2.0
    centroid = ((v0 + v1) * cross[:, None]).sum(dim=0) / (6.0 * area)
    extent = polygon.max(dim=0).values - polygon.min(dim=0).values
    size = extent.max() + 1.0
    return centroid, size


def render_iris_mask_soft(
    template: EyeballTemplate,
    pose: EyeballPose,
    camera: CameraModel,
    sharpness: float = 2.0,
    pose_tensors: tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor] | None = None,
    pixels: torch.Tensor | None = None,
    visibility_sharpness: float = 30.0,
) -> torch.Tensor:
    """Soft iris silhouette in [0, 1], differentiable w.r.t. the pose.

    The cornea is treated as transparent (no refraction); self-occlusion by
    the sclera is modeled with a smooth facing term that extinguishes the
    mask as the iris plane turns edge-on or away.

    `pose_tensors` may supply (position, scale, pitch, yaw) as torch tensors
    sharing a graph; otherwise they are taken from `pose`. `pixels` restricts
    evaluation to given (u, v) coordinates and returns a flat tensor.
    """
    if pose_tensors is None:
        position = torch.as_tensor(pose.position, dtype=torch.float64)
        scale = torch.as_tensor(float(pose.scale), dtype=torch.float64)
        pitch = torch.as_tensor(float(pose.pitch), dtype=torch.float64)
        yaw = torch.as_tensor(float(pose.yaw), dtype=torch.float64)
    else:
        position, scale, pitch, yaw = pose_tensors
    polygon, facing = project_iris_ring(template, camera, position, scale, pitch, yaw)
    full = pixels is None
    if full:
        vv, uu = torch.meshgrid(
            torch.arange(camera.height, dtype=position.dtype),
            torch.arange(camera.width, dtype=position.dtype),
            indexing="ij",
        )
        pixels = torch.stack([uu.reshape(-1), vv.reshape(-1)], dim=-1)
    sd = polygon_signed_distance(polygon, pixels)
    mask = torch.sigmoid(sharpness * sd) * torch.sigmoid(visibility_sharpness * facing)
    if full:
        return mask.reshape(camera.height, camera.width)
    return mask


def iris_center_and_size(mask: np.ndarray) -> tuple[np.ndarray, float]:
    """Mass centroid (u, v) and max bounding-box extent of the mask support.

    The support is mask > 0.5 (binary masks unchanged); the centroid weights
    by mask values. Extents count pixels (max - min + 1).
    """
    mask = np.asarray(mask, dtype=np.float64)
    support = mask > 0.5
    if not support.any():
        raise ValueError("empty iris mask")
    total = mask.sum()
    vs, us = np.nonzero(support)
    v_grid, u_grid = np.mgrid[0 : mask.shape[0], 0 : mask.shape[1]]
    center = np.array([(u_grid * mask).sum() / total, (v_grid * mask).sum() / total])
    size = float(max(us.max() - us.min() + 1, vs.max() - vs.min() + 1))
    return center, size


def classify_contact_vertices(
    template: EyeballTemplate,
    pose: EyeballPose,
    camera: CameraModel,
    eyelid_mask: np.ndarray,
) -> np.ndarray:
    """Indices of eyeball vertices assumed to touch the eyelid's inner skin.

    Back vertices (model-space normal pointing away from the forward axis)
    are dropped; frontal vertices whose projection lands inside the
    eyelid-opening mask are visible, hence also dropped. Frontal vertices
    that cannot be projected into the image are kept.
    """
    frontal = template.normals[:, 2] > 0.0
    verts, _ = pose_vertices(template, pose)
    uv, in_front = camera.project(verts)
    u = np.round(uv[:, 0]).astype(int)
    v = np.round(uv[:, 1]).astype(int)
    inside_img = in_front & (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
    visible = np.zeros(len(verts), dtype=bool)
    sel = inside_img.nonzero()[0]
    visible[sel] = np.asarray(eyelid_mask)[v[sel], u[sel]] > 0.5
    return np.nonzero(frontal & ~visible)[0]
