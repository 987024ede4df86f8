"""Gaze-dependent multi-level anchor grid.

Each level stores a lattice of learnable 3D anchor positions over the
canonical bounding box. The frame's anchors are the base lattice plus a
linear combination of per-eye pitch/yaw offset lattices weighted by the
normalized gaze angles. A query point is encoded per level as the trilinear
blend of the frequency embeddings of its 8 surrounding anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

DEFAULT_PITCH_RANGE = (-20.0, 20.0)
DEFAULT_YAW_RANGE = (-30.0, 30.0)


@dataclass
class GazeState:
    """Per-eye (pitch, yaw) in degrees plus the normalization ranges."""

    pitch_left: float
    yaw_left: float
    pitch_right: float
    yaw_right: float
    pitch_range: tuple[float, float] = DEFAULT_PITCH_RANGE
    yaw_range: tuple[float, float] = DEFAULT_YAW_RANGE

    def normalized(self, dtype=torch.float32) -> torch.Tensor:
        """(2, 2) tensor [(p, y) left, (p, y) right] scaled to [-1, 1]."""
        ps = max(abs(self.pitch_range[0]), abs(self.pitch_range[1]))
        ys = max(abs(self.yaw_range[0]), abs(self.yaw_range[1]))
        return torch.tensor(
            [
                [self.pitch_left / ps, self.yaw_left / ys],
                [self.pitch_right / ps, self.yaw_right / ys],
            ],
            dtype=dtype,
        )


def _lattice(resolution: int, lo: float, hi: float, dtype) -> torch.Tensor:
    axis = torch.linspace(lo, hi, resolution, dtype=dtype)
    gx, gy, gz = torch.meshgrid(axis, axis, axis, indexing="ij")
    return torch.stack([gx, gy, gz], dim=-1)


class AnchorGridSet(nn.Module):
    """Base lattice A_0 plus per-eye pitch/yaw offset lattices per level."""

    def __init__(
        self,
        levels: int = 8,
        base_resolution: int = 8,
        max_resolution: int = 1024,
        bounds: tuple[float, float] = (-1.1, 1.1),
        eyes: tuple[str, ...] = ("left", "right"),
        learn_offsets: bool = True,
        dtype=torch.float32,
    ):
        super().__init__()
        self.levels = levels
        self.bounds = bounds
        self.eyes = eyes
        self.resolutions = [min(base_resolution * 2**k, max_resolution) for k in range(levels)]
        self.base = nn.ParameterList(
            [nn.Parameter(_lattice(r, bounds[0], bounds[1], dtype)) for r in self.resolutions]
        )
        self.offsets = nn.ParameterDict()
        for eye_idx, _ in enumerate(eyes):
            for angle_idx, angle in enumerate(("pitch", "yaw")):
                self.offsets[f"e{eye_idx}_{angle}"] = nn.ParameterList(
                    [
                        nn.Parameter(torch.zeros(r, r, r, 3, dtype=dtype), requires_grad=learn_offsets)
                        for r in self.resolutions
                    ]
                )
        # optional spatial support of the gaze offsets (plain tensors, applied
        # multiplicatively; rebuilt deterministically, not checkpoint state)
        self.offset_masks: list[torch.Tensor] | None = None

    def set_offset_region(self, boxes, feather: float = 0.08):
        """Confine gaze-dependent offsets to the given (min, max) boxes.

        Anchors outside every box get zero offset; a smooth feather avoids a
        hard seam. Pass None to restore full-space offsets.
        """
        if boxes is None:
            self.offset_masks = None
            return
        masks = []
        for level in range(self.levels):
            lattice = self.base[level].detach()
            weight = torch.zeros(lattice.shape[:-1], dtype=lattice.dtype)
            for bmin, bmax in boxes:
                lo = torch.as_tensor(bmin, dtype=lattice.dtype)
                hi = torch.as_tensor(bmax, dtype=lattice.dtype)
                inside = torch.clamp(
                    (torch.minimum(lattice - lo, hi - lattice).amin(dim=-1) + feather) / feather,
                    0.0,
                    1.0,
                )
                weight = torch.maximum(weight, inside)
            masks.append(weight[..., None])
        self.offset_masks = masks

    def effective_offset(self, key: str, level: int) -> torch.Tensor:
        off = self.offsets[key][level]
        if self.offset_masks is not None:
            off = off * self.offset_masks[level]
        return off

    @property
    def out_dim(self) -> int:
        return 3 + 6 * self.levels

    def grid_at_gaze(self, gaze_norm: torch.Tensor, level: int, offset_scale: float = 1.0) -> torch.Tensor:
        """A_0 + sum over eyes of (p * A_p + y * A_y), elementwise."""
        grid = self.base[level]
        if offset_scale == 0.0:
            return grid
        for eye_idx in range(len(self.eyes)):
            grid = grid + (offset_scale * gaze_norm[eye_idx, 0]) * self.effective_offset(f"e{eye_idx}_pitch", level)
            grid = grid + (offset_scale * gaze_norm[eye_idx, 1]) * self.effective_offset(f"e{eye_idx}_yaw", level)
        return grid

    _CORNERS = torch.tensor(
        [[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=torch.long
    )

    def interpolate_level(self, points: torch.Tensor, anchors: torch.Tensor, level: int) -> torch.Tensor:
        """Trilinear blend of the 8 surrounding anchors' frequency embeddings.

        `anchors` is the level's (R, R, R, 3) grid; `level` indexes the
        frequency band 2^(level+1) of the sin/cos embeddings.
        """
        r = anchors.shape[0]
        lo, hi = self.bounds
        x = (points - lo) / (hi - lo) * (r - 1)
        x = x.clamp(0.0, float(r - 1))
        i0 = x.floor().long().clamp_(0, r - 2)
        frac = x - i0.to(x.dtype)
        corners = self._CORNERS  # (8, 3)
        idx = i0[:, None, :] + corners[None, :, :]  # (M, 8, 3)
        flat_idx = (idx[..., 0] * r + idx[..., 1]) * r + idx[..., 2]
        a_u = anchors.reshape(-1, 3)[flat_idx]  # (M, 8, 3)
        w01 = torch.stack([1.0 - frac, frac], dim=-1)  # (M, 3, 2)
        w = (
            w01[:, 0].gather(-1, corners[None, :, 0].expand(len(points), 8))
            * w01[:, 1].gather(-1, corners[None, :, 1].expand(len(points), 8))
            * w01[:, 2].gather(-1, corners[None, :, 2].expand(len(points), 8))
        )  # (M, 8)
        freq = (2.0 ** (level + 1)) * math.pi
        gamma = torch.cat([torch.sin(freq * a_u), torch.cos(freq * a_u)], dim=-1)  # (M, 8, 6)
        return (w[..., None] * gamma).sum(dim=1)

    def combined_grids(self, gaze_norm: torch.Tensor, offset_scale: float = 1.0) -> list[torch.Tensor]:
        """All levels' gaze-combined anchors, shared across a frame's queries."""
        return [self.grid_at_gaze(gaze_norm, level, offset_scale) for level in range(self.levels)]

    def encode(self, points: torch.Tensor, gaze_norm: torch.Tensor,
               window: torch.Tensor | None = None,
               grids: list[torch.Tensor] | None = None) -> torch.Tensor:
        """[p, G^1(p), ..., G^L(p)]; `window` optionally scales each level.

        Pass precomputed `grids` (from `combined_grids`) to avoid rebuilding
        the gaze combination per query batch.
        """
        parts = [points]
        for level in range(self.levels):
            if window is not None and float(window[level]) == 0.0:
                parts.append(points.new_zeros(len(points), 6))
                continue
            anchors = grids[level] if grids is not None else self.grid_at_gaze(gaze_norm, level)
            g = self.interpolate_level(points, anchors, level)
            if window is not None:
                g = g * window[level]
            parts.append(g)
        return torch.cat(parts, dim=-1)
