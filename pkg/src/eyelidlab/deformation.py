"""Observation-to-canonical deformation, topology coordinates, and the
composite control code.

The per-frame control code concatenates, in this fixed order:
    [eye_left (gaze-derived), eye_right, other (free per-frame), closing_left,
     closing_right]
The eye parts come from per-eye gaze encoders applied to normalized eyeball
rotations; the closing parts interpolate a learned closed/non-closed pair.
The deformation field is a stack of affine coupling blocks, exactly
invertible by construction; the topology field is a small MLP with a
zero-initialized head so the hyper coordinates start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .anchors import DEFAULT_PITCH_RANGE, DEFAULT_YAW_RANGE
from .encoding import FrequencyEncoder

PART_LEFT_EYE = "le"
PART_RIGHT_EYE = "re"
PART_OTHER = "other"
CODE_PARTS = (PART_LEFT_EYE, PART_RIGHT_EYE, PART_OTHER)


@dataclass
class CodeConfig:
    eye_dim: int = 16
    other_dim: int = 32
    closing_dim: int = 32
    topo_dim: int = 2
    appearance_dim: int = 8
    pitch_range: tuple[float, float] = DEFAULT_PITCH_RANGE
    yaw_range: tuple[float, float] = DEFAULT_YAW_RANGE

    @property
    def condition_dim(self) -> int:
        return 2 * self.eye_dim + self.other_dim + 2 * self.closing_dim


@dataclass
class DeformationCode:
    eye_left: torch.Tensor
    eye_right: torch.Tensor
    other: torch.Tensor
    closing_left: torch.Tensor
    closing_right: torch.Tensor

    def condition(self) -> torch.Tensor:
        return torch.cat([self.eye_left, self.eye_right, self.other, self.closing_left, self.closing_right])

    def replaced(self, part: str, value: torch.Tensor) -> "DeformationCode":
        parts = {
            PART_LEFT_EYE: "eye_left",
            PART_RIGHT_EYE: "eye_right",
            PART_OTHER: "other",
        }
        if part not in parts:
            raise ValueError(f"unknown code part {part!r}")
        current = getattr(self, parts[part])
        if value.shape != current.shape:
            raise ValueError(f"{part} replacement has shape {tuple(value.shape)}, expected {tuple(current.shape)}")
        kwargs = {f.name: getattr(self, f.name) for f in self.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        kwargs[parts[part]] = value
        return DeformationCode(**kwargs)


def make_pseudo_codes(code: DeformationCode, eps: torch.Tensor, part: str) -> DeformationCode:
    """Replace exactly one code part with the random latent `eps`.

    The regions whose hyper coordinates must stay fixed under the pseudo code
    follow the disentanglement table: replacing `other` keeps both eye boxes;
    replacing one eye's part keeps the opposite eye box and the other region.
    """
    return code.replaced(part, eps)


def _mlp(dims, zero_last=False):
    layers = []
    for i in range(len(dims) - 1):
        lin = nn.Linear(dims[i], dims[i + 1])
        if i == len(dims) - 2 and zero_last:
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)
        layers.append(lin)
        if i < len(dims) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class GazeEncoder(nn.Module):
    """Maps one eye's normalized (pitch, yaw) to its code part."""

    def __init__(self, out_dim: int, hidden: int = 128, layers: int = 4):
        super().__init__()
        self.net = _mlp([2] + [hidden] * (layers - 1) + [out_dim])

    def forward(self, gaze_norm: torch.Tensor) -> torch.Tensor:
        return self.net(gaze_norm)


class _CouplingBlock(nn.Module):
    """Affine coupling: the focus coordinate is shifted and log-scaled by a
    conditioner network of the other two coordinates and the control code.
    The log-scale is tanh-bounded to keep the block well conditioned; the
    inverse is exact by construction."""

    SCALE_BOUND = 0.5

    def __init__(self, focus: int, cond_dim: int, hidden: int, layers: int, pe_bands: int):
        super().__init__()
        self.focus = focus
        self.others = [a for a in range(3) if a != focus]
        self.pe = FrequencyEncoder(pe_bands, 2)
        self.net = _mlp([self.pe.out_dim + cond_dim] + [hidden] * (layers - 1) + [2], zero_last=True)

    def _scale_shift(self, x_others, cond, alpha):
        h = torch.cat([self.pe(x_others, alpha), cond], dim=-1)
        out = self.net(h)
        return self.SCALE_BOUND * torch.tanh(out[:, :1]), out[:, 1:]

    def forward(self, x, cond, alpha):
        s, t = self._scale_shift(x[:, self.others], cond, alpha)
        out = x.clone()
        out[:, self.focus : self.focus + 1] = (x[:, self.focus : self.focus + 1] - t) * torch.exp(-s)
        return out

    def inverse(self, y, cond, alpha):
        s, t = self._scale_shift(y[:, self.others], cond, alpha)
        out = y.clone()
        out[:, self.focus : self.focus + 1] = y[:, self.focus : self.focus + 1] * torch.exp(s) + t
        return out


class DeformationNet(nn.Module):
    """Bijective observation -> canonical map, identity at initialization."""

    def __init__(self, cond_dim: int, n_blocks: int = 3, hidden: int = 64, layers: int = 3, pe_bands: int = 4):
        super().__init__()
        self.blocks = nn.ModuleList(
            [_CouplingBlock(b % 3, cond_dim, hidden, layers, pe_bands) for b in range(n_blocks)]
        )

    def forward(self, x, cond, alpha=1.0):
        for block in self.blocks:
            x = block(x, cond, alpha)
        return x

    def inverse(self, y, cond, alpha=1.0):
        for block in reversed(self.blocks):
            y = block.inverse(y, cond, alpha)
        return y


class TopologyNet(nn.Module):
    """Observation point + code -> m topology coordinates; zero at init."""

    def __init__(self, cond_dim: int, out_dim: int = 2, hidden: int = 128, layers: int = 4, pe_bands: int = 4):
        super().__init__()
        self.out_dim = out_dim
        self.pe = FrequencyEncoder(pe_bands, 3)
        self.net = _mlp([self.pe.out_dim + cond_dim] + [hidden] * (layers - 1) + [out_dim], zero_last=True)

    def forward(self, x, cond, alpha=1.0):
        return self.net(torch.cat([self.pe(x, alpha), cond], dim=-1))


class ControlNetworks(nn.Module):
    """All control state: deformation/topology fields, per-eye gaze encoders,
    per-frame free codes and appearance codes, the closing code pair, and the
    per-frame eyeball rotations (buffers unless gaze is learnable)."""

    def __init__(
        self,
        n_frames: int,
        code: CodeConfig | None = None,
        deform_blocks: int = 3,
        deform_hidden: int = 64,
        deform_layers: int = 3,
        topo_hidden: int = 128,
        topo_layers: int = 4,
        encoder_hidden: int = 128,
        encoder_layers: int = 4,
        pe_bands: int = 4,
        learnable_gaze: bool = False,
    ):
        super().__init__()
        self.code_config = code or CodeConfig()
        cc = self.code_config
        self.n_frames = n_frames
        self.deform = DeformationNet(cc.condition_dim, deform_blocks, deform_hidden, deform_layers, pe_bands)
        if cc.topo_dim > 0:
            self.topo = TopologyNet(cc.condition_dim, cc.topo_dim, topo_hidden, topo_layers, pe_bands)
        else:
            self.topo = None
        self.encoder_left = GazeEncoder(cc.eye_dim, encoder_hidden, encoder_layers)
        self.encoder_right = GazeEncoder(cc.eye_dim, encoder_hidden, encoder_layers)
        self.closing_open = nn.Parameter(0.01 * torch.randn(cc.closing_dim))
        self.closing_closed = nn.Parameter(0.01 * torch.randn(cc.closing_dim))
        self.phi_other = nn.Parameter(0.01 * torch.randn(n_frames, cc.other_dim))
        self.psi = nn.Parameter(0.01 * torch.randn(n_frames, cc.appearance_dim))
        gaze = torch.zeros(n_frames, 2, 2)
        if learnable_gaze:
            self.gaze = nn.Parameter(gaze)
        else:
            self.register_buffer("gaze", gaze)
        self.register_buffer("closing_flags", torch.zeros(n_frames, 2))

    def set_calibration(self, rotations_left, rotations_right, closing_flags):
        with torch.no_grad():
            self.gaze[:, 0] = torch.as_tensor(rotations_left, dtype=self.gaze.dtype)
            self.gaze[:, 1] = torch.as_tensor(rotations_right, dtype=self.gaze.dtype)
            self.closing_flags.copy_(torch.as_tensor(closing_flags, dtype=self.closing_flags.dtype))

    def normalized_gaze(self, gaze_deg: torch.Tensor) -> torch.Tensor:
        cc = self.code_config
        ps = max(abs(cc.pitch_range[0]), abs(cc.pitch_range[1]))
        ys = max(abs(cc.yaw_range[0]), abs(cc.yaw_range[1]))
        scale = torch.tensor([ps, ys], dtype=gaze_deg.dtype, device=gaze_deg.device)
        return gaze_deg / scale

    def encode_gaze(self, pitch_deg: float | torch.Tensor, yaw_deg: float | torch.Tensor, eye: str) -> torch.Tensor:
        """Deterministic smooth map from one eye's rotation to its code part."""
        dtype = self.closing_open.dtype
        p = torch.as_tensor(pitch_deg, dtype=dtype)
        y = torch.as_tensor(yaw_deg, dtype=dtype)
        gaze = self.normalized_gaze(torch.stack([p, y]))
        encoder = self.encoder_left if eye == "left" else self.encoder_right
        return encoder(gaze)

    def closing_code(self, weight: float | torch.Tensor) -> torch.Tensor:
        """Linear interpolation between the non-closed (0) and closed (1) codes."""
        w = torch.as_tensor(weight, dtype=self.closing_open.dtype)
        return (1.0 - w) * self.closing_open + w * self.closing_closed

    def compose_code(
        self,
        frame: int | None = None,
        gaze_deg: torch.Tensor | None = None,
        closing: tuple[float, float] | None = None,
        other: torch.Tensor | None = None,
    ) -> DeformationCode:
        """Assemble the full control code.

        Training mode passes `frame`; posing mode passes explicit `gaze_deg`
        (2, 2), closing weights, and optionally a frozen `other` code."""
        if frame is not None:
            if not 0 <= frame < self.n_frames:
                raise IndexError(f"unknown frame index {frame}")
            if gaze_deg is None:
                gaze_deg = self.gaze[frame]
            if closing is None:
                closing = tuple(self.closing_flags[frame].tolist())
            if other is None:
                other = self.phi_other[frame]
        if gaze_deg is None or closing is None or other is None:
            raise ValueError("posing mode requires gaze_deg, closing, and other")
        gaze_norm = self.normalized_gaze(gaze_deg)
        return DeformationCode(
            eye_left=self.encoder_left(gaze_norm[0]),
            eye_right=self.encoder_right(gaze_norm[1]),
            other=other,
            closing_left=self.closing_code(closing[0]),
            closing_right=self.closing_code(closing[1]),
        )

    # ---- field evaluation -------------------------------------------------

    def _cond(self, code: DeformationCode, n: int) -> torch.Tensor:
        return code.condition()[None, :].expand(n, -1)

    def deform_to_canonical(self, x: torch.Tensor, code: DeformationCode, alpha: float = 1.0) -> torch.Tensor:
        return self.deform(x, self._cond(code, len(x)), alpha)

    def inverse_deform(self, x_c: torch.Tensor, code: DeformationCode, alpha: float = 1.0) -> torch.Tensor:
        return self.deform.inverse(x_c, self._cond(code, len(x_c)), alpha)

    def topology_coords(self, x: torch.Tensor, code: DeformationCode, alpha: float = 1.0) -> torch.Tensor:
        if self.topo is None:
            return x.new_zeros(len(x), 0)
        return self.topo(x, self._cond(code, len(x)), alpha)

    def hyper_coords(self, x: torch.Tensor, code: DeformationCode, alpha: float = 1.0) -> torch.Tensor:
        """[canonical position, topology coords]: the full hyper-space point."""
        return torch.cat([self.deform_to_canonical(x, code, alpha), self.topology_coords(x, code, alpha)], dim=-1)
