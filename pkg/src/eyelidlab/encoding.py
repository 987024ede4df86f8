"""Frequency encodings and the incremental band window.

Band k of the window opens smoothly (cosine-eased) as the training progress
`alpha` sweeps 0 to 1, following the coarse-to-fine positional encoding
schedule: at alpha=0 only raw inputs pass, at alpha=1 all bands are active.
"""

from __future__ import annotations

import math

import torch


def band_window(alpha: float, n_bands: int, dtype=torch.float32) -> torch.Tensor:
    """Per-band weights in [0, 1]; band k ramps while alpha*n_bands crosses k."""
    k = torch.arange(n_bands, dtype=dtype)
    x = (alpha * n_bands - k).clamp(0.0, 1.0)
    return 0.5 * (1.0 - torch.cos(math.pi * x))


class FrequencyEncoder:
    """[x, sin(2^k pi x), cos(2^k pi x)] per coordinate, with windowed bands."""

    def __init__(self, n_bands: int, input_dim: int):
        self.n_bands = n_bands
        self.input_dim = input_dim
        self.out_dim = input_dim * (1 + 2 * n_bands)

    def __call__(self, x: torch.Tensor, alpha: float = 1.0) -> torch.Tensor:
        if self.n_bands == 0:
            return x
        freqs = (2.0 ** torch.arange(self.n_bands, dtype=x.dtype)) * math.pi
        xb = x[..., None, :] * freqs[:, None]  # (..., B, D)
        enc = torch.cat([torch.sin(xb), torch.cos(xb)], dim=-1)  # (..., B, 2D)
        w = band_window(alpha, self.n_bands, dtype=x.dtype)
        enc = enc * w[:, None]
        return torch.cat([x, enc.flatten(-2)], dim=-1)
