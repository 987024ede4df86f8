import math

import numpy as np
import pytest
import torch

from eyelidlab.cameras import look_at_camera
from eyelidlab.eyeball import (
    REGION_CORNEA,
    REGION_IRIS,
    REGION_SCLERA,
    EyeballPose,
    build_template,
    classify_contact_vertices,
    iris_center_and_size,
    pose_vertices,
    render_iris_mask_soft,
    rotation_matrix,
)


def ray_cast_iris_mask(template, pose, camera):
    """Independent hard rasterizer: per-pixel nearest non-cornea triangle hit,
    marked iris if the face is iris-labeled. Cornea treated as transparent."""
    from eyelidlab.cameras import generate_rays, pixel_grid

    verts, _ = pose_vertices(template, pose)
    keep = template.face_regions != REGION_CORNEA
    tris = verts[template.faces[keep]]
    labels = template.face_regions[keep]
    origins, dirs = generate_rays(camera, pixel_grid(camera.width, camera.height))
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = v1 - v0, v2 - v0
    mask = np.zeros(len(origins), dtype=bool)
    for i in range(len(origins)):
        o, d = origins[i], dirs[i]
        p = np.cross(d, e2)
        det = np.einsum("fj,fj->f", e1, p)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = o - v0
        u = np.einsum("fj,fj->f", s, p) * inv
        q = np.cross(s, e1)
        v = np.einsum("j,fj->f", d, q) * inv
        t = np.einsum("fj,fj->f", e2, q) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-6)
        if hit.any():
            nearest = np.flatnonzero(hit)[np.argmin(t[hit])]
            mask[i] = labels[nearest] == REGION_IRIS
    return mask.reshape(camera.height, camera.width)


class TestTemplate:
    def test_sclera_vertices_unit_norm(self, template):
        scl = template.vertex_regions == REGION_SCLERA
        assert np.abs(np.linalg.norm(template.vertices[scl], axis=1) - 1.0).max() < 1e-6

    def test_iris_ring_planar_circle(self, template):
        ring = template.vertices[template.iris_ring]
        assert np.ptp(ring[:, 2]) < 1e-12
        radii = np.linalg.norm(ring[:, :2], axis=1)
        assert np.abs(radii - template.iris_ratio).max() < 1e-9

    def test_cornea_apex_matches_two_sphere_formula(self, template):
        rc, ri = template.cornea_ratio, template.iris_ratio
        apex = math.sqrt(1 - ri**2) - math.sqrt(rc**2 - ri**2) + rc
        tip = template.vertices[template.vertex_regions == REGION_CORNEA][:, 2].max()
        assert abs(tip - apex) < 1e-9
        assert abs(template.cornea_apex_z - apex) < 1e-12

    def test_iris_ratio_configurable(self):
        t = build_template(16, iris_ratio=0.45)
        ring = t.vertices[t.iris_ring]
        assert np.abs(np.linalg.norm(ring[:, :2], axis=1) - 0.45).max() < 1e-9

    def test_ring_count_minimum(self):
        with pytest.raises(ValueError):
            build_template(4)

    def test_export_ply(self, template, tmp_path):
        from eyelidlab.meshes import read_ply

        template.export_ply(tmp_path / "t.ply")
        verts, faces = read_ply(tmp_path / "t.ply")
        assert len(verts) == len(template.vertices)
        assert len(faces) == len(template.faces)


class TestPosing:
    def test_identity_pose(self, template):
        pose = EyeballPose(position=np.zeros(3), scale=1.0, pitch=0.0, yaw=0.0)
        verts, normals = pose_vertices(template, pose)
        assert np.allclose(verts, template.vertices)
        assert np.allclose(normals, template.normals)

    def test_scale_doubles_distances(self, template):
        pose = EyeballPose(position=np.array([0.1, 0.2, 0.3]), scale=2.0, pitch=0.0, yaw=0.0)
        verts, _ = pose_vertices(template, pose)
        assert np.allclose(verts - pose.position, 2.0 * template.vertices)

    def test_rotation_matches_composition_oracle(self, template):
        # independent composition: yaw about +y first, then pitch about +x
        p, y = math.radians(10.0), math.radians(-15.0)
        ry = np.array([[math.cos(y), 0, math.sin(y)], [0, 1, 0], [-math.sin(y), 0, math.cos(y)]])
        rp = np.array([[1, 0, 0], [0, math.cos(p), math.sin(p)], [0, -math.sin(p), math.cos(p)]])
        oracle = rp @ ry
        assert np.allclose(rotation_matrix(10.0, -15.0), oracle, atol=1e-12)
        pose = EyeballPose(position=np.zeros(3), scale=1.0, pitch=10.0, yaw=-15.0)
        verts, _ = pose_vertices(template, pose)
        assert np.allclose(verts, template.vertices @ oracle.T, atol=1e-12)

    def test_posing_is_similarity(self, template):
        pose = EyeballPose(position=np.array([0.3, -0.1, 0.2]), scale=1.7, pitch=8.0, yaw=12.0)
        verts, _ = pose_vertices(template, pose)
        rng = np.random.default_rng(0)
        i = rng.integers(0, len(verts), 64)
        j = rng.integers(0, len(verts), 64)
        d_model = np.linalg.norm(template.vertices[i] - template.vertices[j], axis=-1)
        d_world = np.linalg.norm(verts[i] - verts[j], axis=-1)
        assert np.allclose(d_world, 1.7 * d_model, rtol=1e-9, atol=1e-12)

    def test_positive_pitch_looks_up(self):
        fwd = rotation_matrix(15.0, 0.0) @ np.array([0, 0, 1.0])
        assert fwd[1] > 0.2

    def test_scale_must_be_positive(self):
        with pytest.raises(ValueError):
            EyeballPose(position=np.zeros(3), scale=0.0, pitch=0, yaw=0)


class TestSoftIrisMask:
    def make_setup(self, pitch=0.0, yaw=0.0, position=(0, 0, 0), scale=0.3, size=96):
        cam = look_at_camera([0, 0, 2.0], [0, 0, 0], [0, 1, 0], size, size, 150.0)
        pose = EyeballPose(position=np.asarray(position, dtype=float), scale=scale, pitch=pitch, yaw=yaw)
        return cam, pose

    def test_frontal_mask_radially_symmetric(self, template):
        cam, pose = self.make_setup()
        mask = render_iris_mask_soft(template, pose, cam, sharpness=2.0).detach().numpy()
        c, r = iris_center_and_size(mask)
        assert np.allclose(c, [(cam.width - 1) / 2, (cam.height - 1) / 2], atol=0.1)
        assert np.abs(mask - mask[::-1, :]).max() < 1e-6  # vertical flip symmetry
        assert np.abs(mask - mask[:, ::-1]).max() < 1e-6

    def test_profile_view_mass_vanishes(self, template):
        cam, pose0 = self.make_setup()
        cam, pose90 = self.make_setup(yaw=90.0)
        m0 = render_iris_mask_soft(template, pose0, cam, sharpness=2.0).sum()
        m90 = render_iris_mask_soft(template, pose90, cam, sharpness=2.0).sum()
        assert m90 < 0.01 * m0

    def test_behind_camera_raises(self, template):
        cam, pose = self.make_setup(position=(0, 0, 5.0))
        with pytest.raises(ValueError):
            render_iris_mask_soft(template, pose, cam)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_iou_against_hard_rasterizer(self, template, seed):
        rng = np.random.default_rng(seed)
        cam, pose = self.make_setup(
            pitch=rng.uniform(-18, 18),
            yaw=rng.uniform(-25, 25),
            position=rng.uniform(-0.15, 0.15, 3) * np.array([1, 1, 0.5]),
            scale=rng.uniform(0.25, 0.4),
            size=72,
        )
        soft = render_iris_mask_soft(template, pose, cam, sharpness=8.0).detach().numpy() > 0.5
        hard = ray_cast_iris_mask(template, pose, cam)
        inter = (soft & hard).sum()
        union = (soft | hard).sum()
        assert union > 0
        assert inter / union >= 0.98

    @pytest.mark.parametrize("seed", list(range(5)))
    def test_gradients_match_finite_differences(self, template, seed):
        rng = np.random.default_rng(100 + seed)
        cam, _ = self.make_setup(size=48)
        base = {
            "position": torch.tensor(rng.uniform(-0.1, 0.1, 3), dtype=torch.float64),
            "scale": torch.tensor(rng.uniform(0.25, 0.35), dtype=torch.float64),
            "pitch": torch.tensor(rng.uniform(-15, 15), dtype=torch.float64),
            "yaw": torch.tensor(rng.uniform(-20, 20), dtype=torch.float64),
        }
        probe = torch.tensor(rng.normal(size=(48, 48)), dtype=torch.float64)

        def value(params):
            mask = render_iris_mask_soft(
                template, None, cam, sharpness=2.0,
                pose_tensors=(params["position"], params["scale"], params["pitch"], params["yaw"]),
            )
            return (mask * probe).sum()

        params = {k: v.clone().requires_grad_(True) for k, v in base.items()}
        value(params).backward()
        for name in base:
            analytic = params[name].grad.detach().numpy()
            h = 1e-5 if name in ("position", "scale") else 1e-4
            flat = np.atleast_1d(base[name].numpy().copy())
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                for sign in (1, -1):
                    p2 = {k: v.clone() for k, v in base.items()}
                    arr = np.atleast_1d(p2[name].numpy().copy())
                    arr[i] += sign * h
                    p2[name] = torch.tensor(arr.reshape(base[name].shape), dtype=torch.float64)
                    fd[i] += sign * float(value(p2))
            fd /= 2 * h
            denom = max(np.linalg.norm(fd), 1e-9)
            assert np.linalg.norm(np.atleast_1d(analytic) - fd) / denom < 1e-3, name


class TestIrisCenterAndSize:
    def disk(self, h, w, cu, cv, radius):
        v, u = np.mgrid[0:h, 0:w]
        return ((u - cu) ** 2 + (v - cv) ** 2 < radius**2).astype(float)

    def test_centered_disk(self):
        # center between pixels so the support spans exactly 2*radius pixels
        mask = self.disk(64, 64, 31.5, 31.5, 10.0)
        c, r = iris_center_and_size(mask)
        assert np.allclose(c, [31.5, 31.5], atol=1e-9)
        assert r == 20

    def test_translation_equivariance(self):
        m1 = self.disk(64, 64, 25.5, 30.5, 10.0)
        m2 = self.disk(64, 64, 30.5, 30.5, 10.0)
        c1, r1 = iris_center_and_size(m1)
        c2, r2 = iris_center_and_size(m2)
        assert np.allclose(c2 - c1, [5.0, 0.0], atol=1e-9)
        assert r1 == r2

    def test_random_ellipse_matches_exhaustive_scan(self):
        rng = np.random.default_rng(3)
        v, u = np.mgrid[0:50, 0:70]
        cu, cv, a, b = 33.2, 24.7, 14.0, 8.0
        mask = (((u - cu) / a) ** 2 + ((v - cv) / b) ** 2 < 1).astype(float)
        c, r = iris_center_and_size(mask)
        # brute-force pixel scan oracle
        total = mask.sum()
        ou = sum(mask[vv, uu] * uu for vv in range(50) for uu in range(70)) / total
        ov = sum(mask[vv, uu] * vv for vv in range(50) for uu in range(70)) / total
        cols = [uu for uu in range(70) if mask[:, uu].any()]
        rows = [vv for vv in range(50) if mask[vv].any()]
        oracle_r = max(max(cols) - min(cols) + 1, max(rows) - min(rows) + 1)
        assert np.allclose(c, [ou, ov], atol=1e-12)
        assert r == oracle_r

    def test_empty_mask_raises(self):
        with pytest.raises(ValueError):
            iris_center_and_size(np.zeros((8, 8)))


class TestContactClassification:
    def setup_pose(self):
        cam = look_at_camera([0, 0, 2.0], [0, 0, 0], [0, 1, 0], 64, 64, 100.0)
        pose = EyeballPose(position=np.zeros(3), scale=0.3, pitch=0.0, yaw=0.0)
        return cam, pose

    def test_full_opening_excludes_all_projectable_frontal(self, template):
        cam, pose = self.setup_pose()
        kept = classify_contact_vertices(template, pose, cam, np.ones((64, 64)))
        # every kept vertex must be frontal yet unprojectable; this pose
        # projects all frontal vertices into the image, so the set is empty
        assert len(kept) == 0

    def test_closed_eye_keeps_all_frontal(self, template):
        cam, pose = self.setup_pose()
        kept = classify_contact_vertices(template, pose, cam, np.zeros((64, 64)))
        frontal = np.nonzero(template.normals[:, 2] > 0)[0]
        assert np.array_equal(np.sort(kept), frontal)

    def test_back_vertex_rule_is_camera_independent(self, template):
        pose = EyeballPose(position=np.zeros(3), scale=0.3, pitch=5.0, yaw=-10.0)
        cams = [
            look_at_camera(c, [0, 0, 0], [0, 1, 0], 64, 64, 100.0)
            for c in ([0, 0, 2.0], [1.2, 0.5, 1.5])
        ]
        open_mask = np.zeros((64, 64))
        kept = [set(classify_contact_vertices(template, pose, c, open_mask).tolist()) for c in cams]
        assert kept[0] == kept[1]  # with a closed lid only the normal test acts
