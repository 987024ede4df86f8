import math

import numpy as np
import pytest
import torch

from eyelidlab.config import toy_config
from eyelidlab.model import EyelidModel
from eyelidlab.renderer import (
    alpha_from_sdf,
    composite,
    extract_mesh_from_field,
    sample_pdf,
    sample_ray_hierarchical,
    stratified_samples,
)


def loop_composite(alphas, colors):
    """Explicit-loop oracle for Eq.-style compositing."""
    R, K = alphas.shape
    weights = np.zeros((R, K))
    color = np.zeros((R, 3))
    for r in range(R):
        T = 1.0
        for k in range(K):
            weights[r, k] = T * alphas[r, k]
            color[r] += weights[r, k] * colors[r, k]
            T *= 1.0 - alphas[r, k]
    return color, weights


class TestAlphaFromSdf:
    def test_equal_sdf_gives_zero(self):
        a = alpha_from_sdf(torch.tensor([0.3]), torch.tensor([0.3]), 10.0)
        assert float(a) == 0.0

    def test_hand_evaluated_logistic(self):
        # Phi(1)=0.73106, Phi(-1)=0.26894 -> alpha = 0.63212
        a = alpha_from_sdf(torch.tensor([0.1], dtype=torch.float64),
                           torch.tensor([-0.1], dtype=torch.float64), 10.0)
        assert abs(float(a) - 0.6321205588) < 1e-9

    def test_increasing_sdf_clamped_to_zero(self):
        a = alpha_from_sdf(torch.tensor([-0.2]), torch.tensor([0.1]), 25.0)
        assert float(a) == 0.0

    def test_range_and_kappa_tensor(self):
        rng = torch.Generator().manual_seed(0)
        f0 = torch.randn(1000, generator=rng, dtype=torch.float64)
        f1 = torch.randn(1000, generator=rng, dtype=torch.float64)
        a = alpha_from_sdf(f0, f1, torch.tensor(37.0, dtype=torch.float64))
        assert (a >= 0).all() and (a <= 1).all()

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        f0 = rng.normal(size=200)
        f1 = rng.normal(size=200)
        kappa = 13.7
        got = alpha_from_sdf(torch.tensor(f0), torch.tensor(f1), kappa).numpy()
        sig = lambda x: 1.0 / (1.0 + np.exp(-x))
        want = np.maximum((sig(kappa * f0) - sig(kappa * f1)) / sig(kappa * f0), 0.0)
        rel = np.abs(got - want).max() / max(np.abs(want).max(), 1e-12)
        assert rel < 1e-6


class TestComposite:
    def test_all_zero_alpha(self):
        alphas = torch.zeros(3, 5)
        colors = torch.rand(3, 5, 3)
        c, w, t = composite(alphas, colors)
        assert (c == 0).all() and (w == 0).all() and (t == 1).all()

    def test_opaque_first_sample(self):
        alphas = torch.tensor([[1.0, 0.5, 0.7]])
        colors = torch.rand(1, 3, 3)
        c, w, _ = composite(alphas, colors)
        assert torch.allclose(c[0], colors[0, 0])
        assert w[0, 0] == 1.0 and (w[0, 1:] == 0).all()

    def test_random_batch_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        alphas = rng.uniform(0, 1, size=(8, 12))
        colors = rng.uniform(0, 1, size=(8, 12, 3))
        c, w, t = composite(torch.tensor(alphas), torch.tensor(colors))
        oc, ow = loop_composite(alphas, colors)
        assert np.abs(c.numpy() - oc).max() / np.abs(oc).max() < 1e-6
        assert np.abs(w.numpy() - ow).max() / max(np.abs(ow).max(), 1e-12) < 1e-6
        # transmittance non-increasing, weights sum <= 1
        assert (t.numpy()[:, 1:] <= t.numpy()[:, :-1] + 1e-12).all()
        assert (w.sum(-1) <= 1 + 1e-9).all()


class TestSampling:
    def test_stratified_midpoints(self):
        t = stratified_samples(1.0, 3.0, 4, 2)
        expected = 1.0 + 2.0 * (np.arange(4) + 0.5) / 4
        assert np.allclose(t.numpy()[0], expected)

    def test_stratified_jitter_stays_in_stratum(self):
        gen = torch.Generator().manual_seed(0)
        t = stratified_samples(0.0, 1.0, 10, 8, generator=gen)
        lo = np.arange(10) / 10
        assert (t.numpy() >= lo).all() and (t.numpy() <= lo + 0.1 + 1e-7).all()

    def test_sample_pdf_concentrates(self):
        bins = torch.linspace(0, 1, 9)[None, :].repeat(2, 1)
        weights = torch.zeros(2, 8)
        weights[:, 3] = 1.0  # all mass in bin [0.375, 0.5]
        s = sample_pdf(bins, weights, 16)
        frac_in = ((s >= 0.37) & (s <= 0.51)).float().mean()
        assert frac_in > 0.9

    def uniform_sdf_fn(self, value=1.0):
        return lambda pts: torch.full((len(pts),), value)

    def test_total_count_is_128_at_paper_settings(self):
        o = torch.zeros(3, 3)
        d = torch.tensor([[0.0, 0.0, -1.0]]).repeat(3, 1)
        t = sample_ray_hierarchical(o, d, 0.5, 2.5, self.uniform_sdf_fn(),
                                    n_coarse=64, rounds=4, per_round=16)
        assert t.shape == (3, 128)
        assert (t.diff(dim=-1) > 0).all()  # strictly increasing

    def test_uniform_field_coarse_samples_stratified(self):
        o = torch.zeros(2, 3)
        d = torch.tensor([[0.0, 0.0, -1.0]]).repeat(2, 1)
        t = sample_ray_hierarchical(o, d, 1.0, 3.0, self.uniform_sdf_fn(),
                                    n_coarse=16, rounds=0, per_round=0)
        centers = 1.0 + 2.0 * (np.arange(16) + 0.5) / 16
        assert np.abs(t.numpy()[0] - centers).max() < 2.0 / 16

    def test_sharp_surface_attracts_fine_samples(self):
        # analytic sphere of radius 0.5 centered at origin; ray from z=2 inward
        sphere = lambda pts: pts.norm(dim=-1) - 0.5
        o = torch.tensor([[0.0, 0.0, 2.0]])
        d = torch.tensor([[0.0, 0.0, -1.0]])
        t = sample_ray_hierarchical(o, d, 0.5, 3.5, sphere,
                                    n_coarse=64, rounds=4, per_round=16)
        crossing = 1.5  # first sphere intersection along the ray
        stratum = 3.0 / 64
        fine = t[0, :].numpy()
        near_crossing = np.abs(fine - crossing) < 3 * stratum
        # at least half of the 64 importance samples land near the crossing
        assert near_crossing.sum() >= 32


def make_toy_model(n_frames=4, seed=0):
    torch.manual_seed(seed)
    cfg = toy_config()
    cfg.model.anchor_levels = 3
    cfg.model.anchor_max_resolution = 8
    cfg.model.sdf_hidden = 48
    cfg.model.color_hidden = 32
    return EyelidModel(n_frames, cfg.model), cfg


class TestRenderRays:
    def rays(self, n=6):
        gen = torch.Generator().manual_seed(3)
        o = torch.zeros(n, 3)
        o[:, 2] = 1.6
        d = torch.nn.functional.normalize(
            torch.randn(n, 3, generator=gen) * 0.05 + torch.tensor([0.0, 0.0, -1.0]), dim=-1
        )
        return o, d

    def test_empty_scene_low_opacity(self):
        model, cfg = make_toy_model()
        with torch.no_grad():
            model.sdf_net.sdf_head.bias.fill_(1.0)
            model.sdf_net.sdf_head.weight.mul_(0.0)
        o, d = self.rays()
        out = model.render_rays(o, d, 0.5, 2.5, model.frame_state(0), cfg.sampling)
        assert float(out.accumulation.max()) < 1e-3

    def test_analytic_sphere_depth(self):
        model, cfg = make_toy_model()
        radius = 0.4

        def sphere_field(pts, state, alpha=1.0):
            sdf = pts.norm(dim=-1) - radius
            n = torch.nn.functional.normalize(pts, dim=-1)
            feat = pts.new_zeros(len(pts), model.sdf_net.feature_dim)
            return sdf, n, feat, pts, pts.new_zeros(len(pts), 0)

        model.field = sphere_field
        with torch.no_grad():
            model.sharpness.raw.fill_(math.log(400.0) / 10.0)
        o = torch.tensor([[0.0, 0.0, 1.6], [0.3, 0.0, 1.6]])
        d = torch.nn.functional.normalize(torch.tensor([[0.0, 0.0, -1.0], [-0.05, 0.0, -1.0]]), dim=-1)
        out = model.render_rays(o, d, 0.5, 2.5, model.frame_state(0), cfg.sampling)
        # closed-form ray-sphere intersection
        for i in range(2):
            oc = o[i].numpy()
            dd = d[i].numpy()
            b = np.dot(oc, dd)
            disc = b * b - (np.dot(oc, oc) - radius**2)
            t_hit = -b - np.sqrt(disc)
            stratum = 2.0 / cfg.sampling.n_coarse
            assert abs(float(out.depth[i]) - t_hit) < 2 * stratum

    def test_deterministic_given_inputs(self):
        model, cfg = make_toy_model()
        o, d = self.rays()
        st = model.frame_state(1)
        a = model.render_rays(o, d, 0.5, 2.5, st, cfg.sampling)
        b = model.render_rays(o, d, 0.5, 2.5, st, cfg.sampling)
        assert torch.equal(a.color, b.color)
        assert torch.equal(a.depth, b.depth)

    def test_alpha_in_range_transmittance_monotone(self):
        model, cfg = make_toy_model(seed=5)
        o, d = self.rays(8)
        out = model.render_rays(o, d, 0.5, 2.5, model.frame_state(0), cfg.sampling, alpha=0.7)
        assert (out.alpha >= 0).all() and (out.alpha <= 1).all()
        t = out.transmittance
        assert (t[:, 1:] <= t[:, :-1] + 1e-7).all()
        assert (out.weights.sum(-1) <= 1 + 1e-6).all()

    def test_reduces_to_static_neus_at_identity_deformation(self):
        # at initialization the deformation is the identity and W = 0; the
        # render must equal a static NeuS-style evaluation bypassing both
        model, cfg = make_toy_model()
        o, d = self.rays()
        st = model.frame_state(0)
        out = model.render_rays(o, d, 0.5, 2.5, st, cfg.sampling)

        static_field_calls = {}
        orig_field = model.field

        def static_field(pts, state, alpha=1.0):
            enc = model.anchors.encode(pts, state.gaze_norm, window=model.level_window(alpha),
                                       grids=state.grids)
            w = pts.new_zeros(len(pts), model.control.code_config.topo_dim)
            if model.topo_encoder.out_dim:
                enc = torch.cat([enc, model.topo_encoder(w, alpha)], dim=-1)
            sdf, n_hat, feat = model.sdf_net(enc)
            return sdf, n_hat, feat, pts, w

        model.field = static_field
        out_static = model.render_rays(o, d, 0.5, 2.5, st, cfg.sampling)
        model.field = orig_field
        assert torch.allclose(out.color, out_static.color, atol=1e-6)
        assert torch.allclose(out.sdf, out_static.sdf, atol=1e-6)

    def test_non_finite_field_reported(self):
        model, cfg = make_toy_model()
        with torch.no_grad():
            model.sdf_net.sdf_head.bias.fill_(float("nan"))
        o, d = self.rays()
        with pytest.raises(FloatingPointError, match="ray"):
            model.render_rays(o, d, 0.5, 2.5, model.frame_state(0), cfg.sampling)


class TestExtractMesh:
    def test_unit_sphere_vertices_on_surface(self):
        sdf = lambda pts: pts.norm(dim=-1) - 1.0
        verts, faces = extract_mesh_from_field(sdf, [-1.3] * 3, [1.3] * 3, 128)
        radii = np.linalg.norm(verts, axis=1)
        assert np.abs(radii - 1.0).max() < 2.0 / 128
        assert len(faces) > 1000

    def test_translated_field_translates_mesh(self):
        offset = torch.tensor([0.2, -0.1, 0.15])
        sdf_a = lambda pts: pts.norm(dim=-1) - 0.6
        sdf_b = lambda pts: (pts - offset).norm(dim=-1) - 0.6
        va, _ = extract_mesh_from_field(sdf_a, [-1.2] * 3, [1.2] * 3, 96)
        vb, _ = extract_mesh_from_field(sdf_b, [-1.2] * 3, [1.2] * 3, 96)
        # compare centroids: translation carries over exactly
        assert np.allclose(vb.mean(0) - va.mean(0), offset.numpy(), atol=2e-2)

    def test_outward_winding(self):
        sdf = lambda pts: pts.norm(dim=-1) - 0.8
        verts, faces = extract_mesh_from_field(sdf, [-1.2] * 3, [1.2] * 3, 64)
        tri = verts[faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        c = tri.mean(axis=1)
        outward = (n * c).sum(-1) > 0
        assert outward.mean() > 0.99

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            extract_mesh_from_field(lambda p: p.norm(dim=-1) - 1, [-1] * 3, [1] * 3, 16)

    def test_empty_level_set_raises(self):
        with pytest.raises(ValueError, match="empty"):
            extract_mesh_from_field(lambda p: p.norm(dim=-1) + 1.0, [-1] * 3, [1] * 3, 48)
