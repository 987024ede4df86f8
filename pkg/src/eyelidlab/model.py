"""The dynamic eyelid field: deformation + topology -> anchor-encoded
canonical hyper-space -> SDF and color, rendered by the volume primitives.

A `FrameState` is everything frame-specific a render needs: the control code,
the normalized gaze driving the anchor grid, and the appearance code.
Rendering is pure given a parameter snapshot; training mutates parameters
between snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .anchors import AnchorGridSet
from .config import ModelConfig
from .deformation import CodeConfig, ControlNetworks, DeformationCode
from .encoding import band_window
from .fields import ColorNetwork, SdfNetwork, Sharpness, TopologyEncoder
from .renderer import (
    RenderOutput,
    alpha_from_sdf,
    composite,
    extract_mesh_from_field,
    sample_ray_hierarchical,
)


def _inv3x3(m: torch.Tensor) -> torch.Tensor:
    """Batched closed-form 3x3 inverse (adjugate over determinant)."""
    a, b, c = m[:, 0, 0], m[:, 0, 1], m[:, 0, 2]
    d, e, f = m[:, 1, 0], m[:, 1, 1], m[:, 1, 2]
    g, h, i = m[:, 2, 0], m[:, 2, 1], m[:, 2, 2]
    co00 = e * i - f * h
    co01 = c * h - b * i
    co02 = b * f - c * e
    co10 = f * g - d * i
    co11 = a * i - c * g
    co12 = c * d - a * f
    co20 = d * h - e * g
    co21 = b * g - a * h
    co22 = a * e - b * d
    det = (a * co00 + b * co10 + c * co20).clamp_min(1e-9)
    adj = torch.stack(
        [
            torch.stack([co00, co01, co02], dim=-1),
            torch.stack([co10, co11, co12], dim=-1),
            torch.stack([co20, co21, co22], dim=-1),
        ],
        dim=-2,
    )
    return adj / det[:, None, None]


def polar_rotation(J: torch.Tensor, iterations: int = 4) -> torch.Tensor:
    """Rotational factor of near-identity Jacobians via Newton iteration
    R <- (R + R^-T) / 2; falls back to identity where J degenerates."""
    det = torch.det(J)
    eye = torch.eye(3, dtype=J.dtype).expand_as(J)
    R = torch.where((det > 1e-6)[:, None, None], J, eye)
    for _ in range(iterations):
        R = 0.5 * (R + _inv3x3(R).transpose(1, 2))
    return R


@dataclass
class FrameState:
    code: DeformationCode
    gaze_norm: torch.Tensor  # (2, 2), [-1, 1]
    psi: torch.Tensor
    frame: int | None = None
    grids: list | None = None  # cached gaze-combined anchor grids
    condition: torch.Tensor | None = None


class EyelidModel(nn.Module):
    def __init__(self, n_frames: int, cfg: ModelConfig | None = None, learnable_gaze: bool = False,
                 learn_anchor_offsets: bool = True):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        c = self.cfg
        code_cfg = CodeConfig(
            eye_dim=c.eye_dim,
            other_dim=c.other_dim,
            closing_dim=c.closing_dim,
            topo_dim=c.topo_dim,
            appearance_dim=c.appearance_dim,
            pitch_range=c.pitch_range,
            yaw_range=c.yaw_range,
        )
        self.control = ControlNetworks(
            n_frames,
            code_cfg,
            deform_blocks=c.deform_blocks,
            deform_hidden=c.deform_hidden,
            deform_layers=c.deform_layers,
            topo_hidden=c.topo_hidden,
            topo_layers=c.topo_layers,
            encoder_hidden=c.encoder_hidden,
            encoder_layers=c.encoder_layers,
            pe_bands=c.pe_bands,
            learnable_gaze=learnable_gaze,
        )
        self.anchors = AnchorGridSet(
            levels=c.anchor_levels,
            base_resolution=c.anchor_base_resolution,
            max_resolution=c.anchor_max_resolution,
            bounds=c.anchor_bounds,
            learn_offsets=learn_anchor_offsets,
        )
        self.topo_encoder = TopologyEncoder(c.topo_dim, c.topo_enc_bands)
        self.sdf_net = SdfNetwork(
            in_dim=self.anchors.out_dim + self.topo_encoder.out_dim,
            hidden=c.sdf_hidden,
            layers=c.sdf_layers,
            skip=c.sdf_skip,
            feature_dim=c.feature_dim,
            geometric_radius=c.geometric_radius,
        )
        self.color_net = ColorNetwork(c.feature_dim, c.appearance_dim, c.color_hidden, c.color_layers)
        self.sharpness = Sharpness(c.kappa_init)

    @property
    def n_frames(self) -> int:
        return self.control.n_frames

    # ---- frame states -----------------------------------------------------

    def offset_window(self, alpha: float) -> float:
        start, end = self.cfg.offset_window
        if end <= start:
            return 1.0
        return float(min(1.0, max(0.0, (alpha - start) / (end - start))))

    def _finish_state(self, state: FrameState, alpha: float = 1.0) -> FrameState:
        state.condition = state.code.condition()
        state.grids = self.anchors.combined_grids(state.gaze_norm, self.offset_window(alpha))
        return state

    def frame_state(self, frame: int, alpha: float = 1.0) -> FrameState:
        code = self.control.compose_code(frame=frame)
        gaze_norm = self.control.normalized_gaze(self.control.gaze[frame])
        return self._finish_state(
            FrameState(code=code, gaze_norm=gaze_norm, psi=self.control.psi[frame], frame=frame),
            alpha,
        )

    def pose_state(self, gaze_deg, closing: tuple[float, float], reference_frame: int = 0) -> FrameState:
        """Posing mode: explicit gaze/closing, residual code frozen to a
        reference frame's value."""
        gaze_deg = torch.as_tensor(gaze_deg, dtype=torch.get_default_dtype()).reshape(2, 2)
        other = self.control.phi_other[reference_frame]
        code = self.control.compose_code(gaze_deg=gaze_deg, closing=closing, other=other)
        return self._finish_state(
            FrameState(
                code=code,
                gaze_norm=self.control.normalized_gaze(gaze_deg),
                psi=self.control.psi[reference_frame],
                frame=None,
            )
        )

    # ---- field ------------------------------------------------------------

    def level_window(self, alpha: float) -> torch.Tensor:
        return band_window(alpha, self.anchors.levels)

    def field(self, pts: torch.Tensor, state: FrameState, alpha: float = 1.0):
        """Full evaluation: (sdf, predicted normal, feature, canonical, topo)."""
        base_cond = state.condition if state.condition is not None else state.code.condition()
        cond = base_cond[None, :].expand(len(pts), -1)
        x_c = self.control.deform(pts, cond, alpha)
        if self.control.topo is not None:
            w = self.control.topo(pts, cond, alpha)
        else:
            w = pts.new_zeros(len(pts), 0)
        enc = self.anchors.encode(x_c, state.gaze_norm, window=self.level_window(alpha), grids=state.grids)
        if self.topo_encoder.out_dim:
            enc = torch.cat([enc, self.topo_encoder(w, alpha)], dim=-1)
        sdf, n_hat, feat = self.sdf_net(enc)
        return sdf, n_hat, feat, x_c, w

    def sdf_only(self, pts: torch.Tensor, state: FrameState, alpha: float = 1.0) -> torch.Tensor:
        return self.field(pts, state, alpha)[0]

    def sdf_with_gradient(self, pts: torch.Tensor, state: FrameState, alpha: float = 1.0,
                          create_graph: bool = False):
        """SDF value and its observation-space gradient at the given points."""
        pts = pts.detach().requires_grad_(True)
        with torch.enable_grad():
            sdf = self.sdf_only(pts, state, alpha)
            grad = torch.autograd.grad(sdf.sum(), pts, create_graph=create_graph)[0]
        if not create_graph:
            sdf = sdf.detach()
        return sdf, grad

    def _deform_jacobian_rotation(self, pts: torch.Tensor, cond: torch.Tensor, alpha: float,
                                  h: float = 1e-3) -> torch.Tensor:
        """Rotational (polar) factor of the deformation Jacobian, detached.

        Finite differences are plenty for mapping view directions; gradients
        do not flow through this factor."""
        with torch.no_grad():
            base = self.control.deform(pts, cond, alpha)
            cols = []
            for a in range(3):
                dp = torch.zeros(3, dtype=pts.dtype)
                dp[a] = h
                cols.append((self.control.deform(pts + dp, cond, alpha) - base) / h)
            J = torch.stack(cols, dim=-1)  # (M, 3, 3): dX_c / dX_o
            return polar_rotation(J)

    # ---- rendering ----------------------------------------------------------

    def render_rays(
        self,
        origins: torch.Tensor,
        dirs: torch.Tensor,
        near: float,
        far: float,
        state: FrameState,
        sampling,
        alpha: float = 1.0,
        generator: torch.Generator | None = None,
        create_graph: bool = False,
    ) -> RenderOutput:
        t = sample_ray_hierarchical(
            origins,
            dirs,
            near,
            far,
            lambda p: self.sdf_only(p, state, alpha),
            n_coarse=sampling.n_coarse,
            rounds=sampling.rounds,
            per_round=sampling.per_round,
            kappa_base=sampling.kappa_up,
            generator=generator,
        )
        batch, n = t.shape
        pts = (origins[:, None, :] + t[..., None] * dirs[:, None, :]).reshape(-1, 3)
        pts = pts.detach().requires_grad_(True)
        with torch.enable_grad():
            sdf, n_hat, feat, x_c, _ = self.field(pts, state, alpha)
            grad = torch.autograd.grad(sdf.sum(), pts, create_graph=create_graph)[0]
        if not create_graph:
            sdf, n_hat, feat, x_c, grad = (v.detach() for v in (sdf, n_hat, feat, x_c, grad))
        dirs_flat = dirs[:, None, :].expand(batch, n, 3).reshape(-1, 3)
        if self.cfg.view_dir_canonical:
            # one rotation per ray, taken at the ray's current expected depth:
            # the view direction is constant along the ray and the polar factor
            # varies slowly, so a per-sample Jacobian buys nothing
            with torch.no_grad():
                a0 = alpha_from_sdf(sdf.reshape(batch, n)[:, :-1], sdf.reshape(batch, n)[:, 1:], self.sharpness())
                _, w0, _ = composite(a0)
                acc0 = w0.sum(-1, keepdim=True)
                t_ref = (w0 * t[:, :-1]).sum(-1) / acc0[:, 0].clamp_min(1e-6)
                t_ref = torch.where(acc0[:, 0] > 1e-3, t_ref, t.mean(dim=-1))
                ref_pts = origins + t_ref[:, None] * dirs
            cond = state.condition[None, :].expand(batch, -1)
            R = self._deform_jacobian_rotation(ref_pts, cond, alpha)  # (R, 3, 3)
            R_flat = R[:, None, :, :].expand(batch, n, 3, 3).reshape(-1, 3, 3)
            v_c = torch.einsum("mij,mj->mi", R_flat, dirs_flat)
            normal_in = torch.einsum("mij,mj->mi", R_flat, torch.nn.functional.normalize(grad, dim=-1))
        else:
            v_c = dirs_flat
            normal_in = torch.nn.functional.normalize(grad, dim=-1)
        color = self.color_net(x_c, normal_in, v_c, feat, state.psi)
        if not torch.isfinite(sdf).all() or not torch.isfinite(color).all():
            bad = (~torch.isfinite(sdf)).nonzero()
            ray_id = int(bad[0, 0] // n) if len(bad) else -1
            raise FloatingPointError(f"non-finite field output (ray {ray_id})")

        sdf = sdf.reshape(batch, n)
        color = color.reshape(batch, n, 3)
        kappa = self.sharpness()
        a = alpha_from_sdf(sdf[:, :-1], sdf[:, 1:], kappa)
        comp_color, weights, transmittance = composite(a, color[:, :-1, :])
        acc = weights.sum(dim=-1)
        depth = (weights * t[:, :-1]).sum(dim=-1) / acc.clamp_min(1e-6)
        return RenderOutput(
            t=t,
            sdf=sdf,
            alpha=a,
            transmittance=transmittance,
            weights=weights,
            sample_color=color[:, :-1, :],
            color=comp_color,
            accumulation=acc,
            depth=depth,
            gradients=grad.reshape(batch, n, 3),
            normal_pred=n_hat.reshape(batch, n, 3),
            points=pts.detach().reshape(batch, n, 3),
            canonical=x_c.reshape(batch, n, 3),
        )

    def extract_mesh(self, state: FrameState, resolution: int, bounds_min, bounds_max,
                     alpha: float = 1.0):
        """Deformed (observation-space) surface at the frame state."""
        return extract_mesh_from_field(
            lambda p: self.sdf_only(p, state, alpha),
            bounds_min,
            bounds_max,
            resolution,
        )
