import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from eyelidlab.anchors import AnchorGridSet, GazeState


def small_grid(levels=3, base=4, cap=8, learn_offsets=True, seed=0):
    torch.manual_seed(seed)
    g = AnchorGridSet(levels=levels, base_resolution=base, max_resolution=cap, learn_offsets=learn_offsets)
    return g


def loop_embedding(grid, points, anchors, level):
    """Brute-force trilinear frequency embedding, one point at a time."""
    r = anchors.shape[0]
    lo, hi = grid.bounds
    out = []
    freq = (2.0 ** (level + 1)) * math.pi
    for p in points:
        x = (p - lo) / (hi - lo) * (r - 1)
        x = np.clip(x, 0, r - 1)
        i0 = np.minimum(np.floor(x).astype(int), r - 2)
        f = x - i0
        acc = np.zeros(6)
        for du in (0, 1):
            for dv in (0, 1):
                for dw in (0, 1):
                    w = (f[0] if du else 1 - f[0]) * (f[1] if dv else 1 - f[1]) * (f[2] if dw else 1 - f[2])
                    a = anchors[i0[0] + du, i0[1] + dv, i0[2] + dw]
                    acc += w * np.concatenate([np.sin(freq * a), np.cos(freq * a)])
        out.append(acc)
    return np.asarray(out)


class TestGridAtGaze:
    def test_zero_gaze_returns_base(self):
        g = small_grid()
        with torch.no_grad():
            for off in g.offsets.values():
                for p in off:
                    p.normal_()
        gaze = torch.zeros(2, 2)
        for level in range(g.levels):
            assert torch.equal(g.grid_at_gaze(gaze, level), g.base[level])

    def test_single_eye_pitch_adds_offset(self):
        g = small_grid()
        with torch.no_grad():
            for off in g.offsets.values():
                for p in off:
                    p.normal_()
        gaze = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
        got = g.grid_at_gaze(gaze, 1)
        expected = g.base[1] + g.offsets["e0_pitch"][1]
        assert torch.allclose(got, expected)

    def test_random_gaze_matches_elementwise_oracle(self):
        g = small_grid(seed=1)
        with torch.no_grad():
            for off in g.offsets.values():
                for p in off:
                    p.normal_()
        gaze = torch.tensor([[0.37, -0.52], [-0.11, 0.83]])
        for level in range(g.levels):
            oracle = (
                g.base[level]
                + 0.37 * g.offsets["e0_pitch"][level]
                - 0.52 * g.offsets["e0_yaw"][level]
                - 0.11 * g.offsets["e1_pitch"][level]
                + 0.83 * g.offsets["e1_yaw"][level]
            )
            rel = (g.grid_at_gaze(gaze, level) - oracle).abs().max() / oracle.abs().max()
            assert rel < 1e-6

    def test_gaze_linearity(self):
        g = small_grid(seed=2)
        with torch.no_grad():
            for off in g.offsets.values():
                for p in off:
                    p.normal_()
        g1 = torch.tensor([[0.2, -0.3], [0.5, 0.1]])
        g2 = torch.tensor([[-0.4, 0.6], [0.3, -0.2]])
        zero = torch.zeros(2, 2)
        for level in range(g.levels):
            lhs = g.grid_at_gaze(g1 + g2, level) + g.grid_at_gaze(zero, level)
            rhs = g.grid_at_gaze(g1, level) + g.grid_at_gaze(g2, level)
            assert torch.allclose(lhs, rhs, atol=1e-6)


class TestInterpolation:
    def test_point_at_anchor_gets_its_embedding(self):
        g = small_grid()
        level = 1  # resolution 8
        r = g.resolutions[level]
        lo, hi = g.bounds
        idx = (2, 5, 3)
        point = torch.tensor([[lo + (hi - lo) * i / (r - 1) for i in idx]])
        with torch.no_grad():
            g.base[level].add_(0.03 * torch.randn_like(g.base[level]))
        emb = g.interpolate_level(point, g.base[level], level)
        a = g.base[level][idx]
        freq = (2.0 ** (level + 1)) * math.pi
        expected = torch.cat([torch.sin(freq * a), torch.cos(freq * a)])
        assert torch.allclose(emb[0], expected, atol=1e-5)

    def test_cell_center_weights_uniform(self):
        g = small_grid()
        level = 0
        r = g.resolutions[level]
        lo, hi = g.bounds
        step = (hi - lo) / (r - 1)
        point = torch.tensor([[lo + 0.5 * step, lo + 1.5 * step, lo + 2.5 * step]])
        emb = g.interpolate_level(point, g.base[level], level)
        # all 8 corner weights are 1/8: compare to the explicit mean
        freq = 2.0 * math.pi
        corners = []
        for du in (0, 1):
            for dv in (0, 1):
                for dw in (0, 1):
                    a = g.base[level][0 + du, 1 + dv, 2 + dw]
                    corners.append(torch.cat([torch.sin(freq * a), torch.cos(freq * a)]))
        assert torch.allclose(emb[0], torch.stack(corners).mean(0), atol=1e-6)

    def test_random_points_match_loop_oracle(self):
        g = small_grid(seed=3)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1.1, 1.1, size=(40, 3))
        for level in range(g.levels):
            anchors = g.base[level].detach().clone()
            anchors += 0.05 * torch.randn(anchors.shape, generator=torch.Generator().manual_seed(level))
            got = g.interpolate_level(torch.tensor(pts, dtype=torch.float64), anchors.double(), level)
            oracle = loop_embedding(g, pts, anchors.numpy(), level)
            rel = np.abs(got.numpy() - oracle).max() / max(np.abs(oracle).max(), 1e-12)
            assert rel < 1e-6

    def test_partition_of_unity(self):
        # constant anchor grid: any interpolation must return gamma(a0) exactly
        g = small_grid()
        level = 2
        a0 = torch.tensor([0.21, -0.47, 0.09])
        anchors = a0.expand_as(g.base[level]).contiguous()
        pts = torch.rand(100, 3) * 2.2 - 1.1
        emb = g.interpolate_level(pts, anchors, level)
        freq = (2.0 ** (level + 1)) * math.pi
        expected = torch.cat([torch.sin(freq * a0), torch.cos(freq * a0)])
        assert (emb - expected).abs().max() < 1e-6

    @settings(max_examples=30, deadline=None)
    @given(
        x=st.floats(-1.05, 1.05), y=st.floats(-1.05, 1.05), z=st.floats(-1.05, 1.05),
    )
    def test_partition_of_unity_property(self, x, y, z):
        g = small_grid()
        anchors = torch.full_like(g.base[0], 0.5)
        emb = g.interpolate_level(torch.tensor([[x, y, z]]), anchors, 0)
        freq = 2.0 * math.pi
        expected = torch.cat([
            torch.sin(freq * torch.full((3,), 0.5)), torch.cos(freq * torch.full((3,), 0.5))
        ])
        assert (emb[0] - expected).abs().max() < 1e-6

    def test_continuity_across_cell_boundary(self):
        g = small_grid()
        level = 1
        r = g.resolutions[level]
        lo, hi = g.bounds
        boundary = lo + (hi - lo) * 3 / (r - 1)
        eps = 1e-5
        pts = torch.tensor([[boundary - eps, 0.0, 0.0], [boundary + eps, 0.0, 0.0]])
        emb = g.interpolate_level(pts, g.base[level], level)
        assert (emb[0] - emb[1]).abs().max() < 1e-3


class TestEncoding:
    def test_paper_scale_encoding_length(self):
        g = AnchorGridSet(levels=8, base_resolution=4, max_resolution=16)
        pts = torch.rand(5, 3)
        enc = g.encode(pts, torch.zeros(2, 2))
        assert enc.shape == (5, 3 + 8 * 6)  # 51
        assert g.out_dim == 51

    def test_frozen_offsets_make_encoding_gaze_independent(self):
        g = small_grid(learn_offsets=False)
        pts = torch.rand(10, 3)
        e1 = g.encode(pts, torch.tensor([[0.9, -0.8], [0.2, 0.4]]))
        e2 = g.encode(pts, torch.zeros(2, 2))
        assert torch.equal(e1, e2)

    def test_window_scales_levels(self):
        g = small_grid()
        pts = torch.rand(4, 3)
        full = g.encode(pts, torch.zeros(2, 2))
        half = g.encode(pts, torch.zeros(2, 2), window=torch.tensor([1.0, 0.5, 0.0]))
        assert torch.allclose(half[:, 3:9], full[:, 3:9])
        assert torch.allclose(half[:, 9:15], 0.5 * full[:, 9:15])
        assert (half[:, 15:21] == 0).all()

    @pytest.mark.parametrize("seed", list(range(5)))
    def test_anchor_gradients_match_finite_differences(self, seed):
        torch.manual_seed(seed)
        g = AnchorGridSet(levels=2, base_resolution=4, max_resolution=4).double()
        pts = (torch.rand(12, 3, dtype=torch.float64) * 2 - 1) * 1.05
        probe = torch.randn(12, 3 + 12, dtype=torch.float64)
        gaze = torch.tensor([[0.3, -0.2], [0.1, 0.5]], dtype=torch.float64)

        def value():
            return (g.encode(pts, gaze) * probe).sum()

        value().backward()
        param = g.base[0]
        analytic = param.grad.clone()
        rng = np.random.default_rng(seed)
        flat_idx = [tuple(rng.integers(0, s) for s in param.shape) for _ in range(12)]
        h = 1e-6
        for idx in flat_idx:
            with torch.no_grad():
                orig = param[idx].item()
                param[idx] = orig + h
                up = value().item()
                param[idx] = orig - h
                dn = value().item()
                param[idx] = orig
            fd = (up - dn) / (2 * h)
            if abs(fd) < 1e-12 and abs(analytic[idx]) < 1e-12:
                continue
            assert abs(analytic[idx] - fd) / max(abs(fd), 1e-9) < 1e-3


class TestGazeState:
    def test_normalization(self):
        gs = GazeState(pitch_left=10.0, yaw_left=-15.0, pitch_right=-20.0, yaw_right=30.0)
        n = gs.normalized()
        assert torch.allclose(n, torch.tensor([[0.5, -0.5], [-1.0, 1.0]]))
