"""Canonical hyper-space geometry and radiance networks.

The geometry network consumes the anchor-grid encoding of the canonical 3D
point concatenated with the frequency-encoded topology coordinates, and
returns the SDF value, an auxiliary predicted normal, and a geometric
feature. It is initialized to the signed distance of a sphere: the first
layer sees only the raw point coordinates at the start of training (the
encoding bands open later), so the standard geometric initialization applies.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .encoding import FrequencyEncoder


class SdfNetwork(nn.Module):
    def __init__(
        self,
        in_dim: int,
        hidden: int = 256,
        layers: int = 8,
        skip: tuple[int, ...] = (4,),
        feature_dim: int = 64,
        raw_dim: int = 3,
        geometric_radius: float = 1.0,
    ):
        super().__init__()
        self.skip = skip
        self.feature_dim = feature_dim
        dims = [in_dim] + [hidden] * layers
        self.linears = nn.ModuleList()
        for l in range(layers):
            out = dims[l + 1] - (in_dim if (l + 1) in skip else 0)
            if out <= 0:
                raise ValueError(f"hidden width {hidden} too small for skip connection of {in_dim} inputs")
            lin = nn.Linear(dims[l], out)
            nn.init.normal_(lin.weight, 0.0, math.sqrt(2.0 / out))
            nn.init.zeros_(lin.bias)
            if l == 0:
                # geometric init: only the raw point drives the first layer
                nn.init.normal_(lin.weight[:, :raw_dim], 0.0, math.sqrt(2.0 / out))
                nn.init.zeros_(lin.weight[:, raw_dim:])
            elif l in skip:
                nn.init.zeros_(lin.weight[:, -in_dim:])
            self.linears.append(lin)
        self.activation = nn.Softplus(beta=100)
        self.sdf_head = nn.Linear(hidden, 1)
        nn.init.normal_(self.sdf_head.weight, math.sqrt(math.pi) / math.sqrt(hidden), 1e-4)
        nn.init.constant_(self.sdf_head.bias, -geometric_radius)
        self.normal_head = nn.Linear(hidden, 3)
        nn.init.normal_(self.normal_head.weight, 0.0, 0.05)
        nn.init.zeros_(self.normal_head.bias)
        self.feature_head = nn.Linear(hidden, feature_dim)
        self._calibrate_sphere_init(in_dim, raw_dim, geometric_radius)

    def _calibrate_sphere_init(self, in_dim, raw_dim, radius):
        """Rescale the SDF head so the initial field is a usable sphere.

        The stochastic geometric initialization only approximates |x| - r
        well at large widths; a deterministic linear fit of f against |x|
        fixes the slope and zero crossing at any width."""
        with torch.no_grad():
            gen = torch.Generator().manual_seed(7)
            dirs = torch.nn.functional.normalize(torch.randn(64, 3, generator=gen), dim=-1)
            radii = torch.linspace(0.15, 1.4, 9)
            pts = (radii[:, None, None] * dirs[None]).reshape(-1, 3)
            x = torch.zeros(len(pts), in_dim)
            x[:, :raw_dim] = pts[:, :raw_dim]
            f = self.forward(x)[0]
            r = pts.norm(dim=-1)
            r_c = r - r.mean()
            slope = float((r_c * (f - f.mean())).sum() / (r_c * r_c).sum())
            scale = 1.0 / max(abs(slope), 0.05)
            if slope < 0:
                scale = -scale
            self.sdf_head.weight.mul_(scale)
            self.sdf_head.bias.mul_(scale)
            f2 = self.forward(x)[0]
            # shift so the mean zero crossing sits at the requested radius
            self.sdf_head.bias.add_(-(f2 - (r - radius)).mean())

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (sdf (N,), predicted normal (N, 3), feature (N, F))."""
        h = x
        for l, lin in enumerate(self.linears):
            if l in self.skip:
                h = torch.cat([h, x], dim=-1) / math.sqrt(2.0)
            h = self.activation(lin(h))
        return self.sdf_head(h)[:, 0], self.normal_head(h), self.feature_head(h)

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward(x)[0]


class ColorNetwork(nn.Module):
    """RGB from canonical position, normal, view direction, geometric
    feature, and the per-frame appearance code."""

    def __init__(self, feature_dim: int = 64, appearance_dim: int = 8, hidden: int = 256, layers: int = 4):
        super().__init__()
        in_dim = 3 + 3 + 3 + feature_dim + appearance_dim
        dims = [in_dim] + [hidden] * (layers - 1) + [3]
        mods = []
        for i in range(len(dims) - 1):
            mods.append(nn.Linear(dims[i], dims[i + 1]))
            if i < len(dims) - 2:
                mods.append(nn.ReLU())
        self.net = nn.Sequential(*mods)

    def forward(self, x_c, normal, view_dir, feature, psi) -> torch.Tensor:
        psi = psi[None, :].expand(len(x_c), -1)
        h = torch.cat([x_c, normal, view_dir, feature, psi], dim=-1)
        return torch.sigmoid(self.net(h))


class Sharpness(nn.Module):
    """The trainable transition sharpness of the SDF-to-opacity logistic,
    positive by construction (exponential reparameterization)."""

    def __init__(self, init: float = 20.0):
        super().__init__()
        self.raw = nn.Parameter(torch.tensor(math.log(init) / 10.0))

    def forward(self) -> torch.Tensor:
        return torch.exp(10.0 * self.raw)


class TopologyEncoder:
    """Frequency encoding for the topology coordinates, windowed like the
    anchor levels."""

    def __init__(self, topo_dim: int, bands: int = 2):
        self.enc = FrequencyEncoder(bands, topo_dim) if topo_dim > 0 else None
        self.out_dim = self.enc.out_dim if self.enc else 0

    def __call__(self, w: torch.Tensor, alpha: float = 1.0) -> torch.Tensor:
        if self.enc is None:
            return w
        return self.enc(w, alpha)
