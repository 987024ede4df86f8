"""Volume rendering primitives: SDF-to-opacity, compositing, hierarchical
ray sampling, and marching-cubes extraction.

Opacity follows the logistic-CDF construction: with Phi(x) the sigmoid of
sharpness kappa, alpha_k = max((Phi(f_k) - Phi(f_{k+1})) / Phi(f_k), 0) over
consecutive samples, so alpha is zero wherever the SDF is non-decreasing
along the ray. N samples yield N-1 opacity intervals; compositing runs over
those intervals with T_1 = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from skimage import measure


def alpha_from_sdf(sdf_curr: torch.Tensor, sdf_next: torch.Tensor, kappa) -> torch.Tensor:
    """Opacity of the interval between two consecutive SDF samples."""
    phi_curr = torch.sigmoid(kappa * sdf_curr)
    phi_next = torch.sigmoid(kappa * sdf_next)
    return ((phi_curr - phi_next) / phi_curr.clamp_min(1e-12)).clamp(0.0, 1.0)


def composite(alphas: torch.Tensor, colors: torch.Tensor | None = None):
    """Front-to-back compositing.

    alphas: (..., K); colors: (..., K, 3) or None.
    Returns (color (..., 3) or None, weights (..., K), transmittance (..., K)).
    """
    ones = alphas.new_ones(alphas.shape[:-1] + (1,))
    transmittance = torch.cumprod(torch.cat([ones, 1.0 - alphas], dim=-1), dim=-1)[..., :-1]
    weights = transmittance * alphas
    color = (weights[..., None] * colors).sum(dim=-2) if colors is not None else None
    return color, weights, transmittance


def stratified_samples(near, far, n: int, batch: int, generator: torch.Generator | None = None,
                       dtype=torch.float32) -> torch.Tensor:
    """(batch, n) t-values, one per stratum; midpoints unless jittered."""
    edges = torch.linspace(0.0, 1.0, n + 1, dtype=dtype)
    if generator is None:
        frac = edges[:-1] + 0.5 / n
        frac = frac[None, :].expand(batch, n)
    else:
        frac = edges[:-1] + torch.rand(batch, n, generator=generator, dtype=dtype) / n
    return near + (far - near) * frac


def sample_pdf(bins: torch.Tensor, weights: torch.Tensor, n: int, deterministic: bool = True,
               generator: torch.Generator | None = None) -> torch.Tensor:
    """Inverse-CDF importance sampling over bin intervals.

    bins: (R, K); weights: (R, K-1) interval weights. Returns (R, n).
    """
    weights = weights + 1e-5
    pdf = weights / weights.sum(dim=-1, keepdim=True)
    cdf = torch.cumsum(pdf, dim=-1)
    cdf = torch.cat([torch.zeros_like(cdf[..., :1]), cdf], dim=-1)
    if deterministic:
        u = torch.linspace(0.5 / n, 1.0 - 0.5 / n, n, dtype=bins.dtype)
        u = u[None, :].expand(cdf.shape[0], n).contiguous()
    else:
        u = torch.rand(cdf.shape[0], n, generator=generator, dtype=bins.dtype)
    idx = torch.searchsorted(cdf, u, right=True)
    below = (idx - 1).clamp_min(0)
    above = idx.clamp_max(cdf.shape[-1] - 1)
    cdf_lo = torch.gather(cdf, -1, below)
    cdf_hi = torch.gather(cdf, -1, above)
    bin_lo = torch.gather(bins, -1, below.clamp_max(bins.shape[-1] - 1))
    bin_hi = torch.gather(bins, -1, above.clamp_max(bins.shape[-1] - 1))
    denom = (cdf_hi - cdf_lo).clamp_min(1e-9)
    frac = (u - cdf_lo) / denom
    return bin_lo + frac * (bin_hi - bin_lo)


def sample_ray_hierarchical(
    origins: torch.Tensor,
    dirs: torch.Tensor,
    near: float,
    far: float,
    sdf_fn,
    n_coarse: int = 64,
    rounds: int = 4,
    per_round: int = 16,
    kappa_base: float = 64.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Coarse stratified samples refined by importance rounds with doubling
    sharpness, guided by the SDF-induced weights. Strictly increasing."""
    batch = len(origins)
    t = stratified_samples(near, far, n_coarse, batch, generator, dtype=origins.dtype)
    with torch.no_grad():
        sdf = sdf_fn((origins[:, None, :] + t[..., None] * dirs[:, None, :]).reshape(-1, 3)).reshape(batch, -1)
        for r in range(rounds):
            alpha = alpha_from_sdf(sdf[:, :-1], sdf[:, 1:], kappa_base * 2**r)
            _, weights, _ = composite(alpha)
            new_t = sample_pdf(t, weights, per_round, deterministic=generator is None, generator=generator)
            t = torch.cat([t, new_t], dim=-1)
            t, order = torch.sort(t, dim=-1)
            if r + 1 < rounds:
                new_sdf = sdf_fn(
                    (origins[:, None, :] + new_t[..., None] * dirs[:, None, :]).reshape(-1, 3)
                ).reshape(batch, -1)
                sdf = torch.gather(torch.cat([sdf, new_sdf], dim=-1), -1, order)
    # enforce strict monotonicity against duplicate importance samples
    eps = (far - near) * 1e-7
    return t + eps * torch.arange(t.shape[-1], dtype=t.dtype)[None, :]


@dataclass
class RenderOutput:
    t: torch.Tensor  # (R, N) sample depths
    sdf: torch.Tensor  # (R, N)
    alpha: torch.Tensor  # (R, N-1)
    transmittance: torch.Tensor  # (R, N-1)
    weights: torch.Tensor  # (R, N-1)
    sample_color: torch.Tensor  # (R, N-1, 3)
    color: torch.Tensor  # (R, 3) composited
    accumulation: torch.Tensor  # (R,) sum of weights
    depth: torch.Tensor  # (R,) expected surface depth
    gradients: torch.Tensor  # (R, N, 3) SDF gradient at samples (observation space)
    normal_pred: torch.Tensor  # (R, N, 3) auxiliary predicted normals
    points: torch.Tensor  # (R, N, 3) observation-space samples
    canonical: torch.Tensor  # (R, N, 3)


def extract_mesh_from_field(sdf_fn, bounds_min, bounds_max, resolution: int,
                            chunk: int = 131072) -> tuple[np.ndarray, np.ndarray]:
    """Marching cubes over a lattice; `sdf_fn` maps (M, 3) float tensors to
    (M,) SDF values (negative inside). Faces wind counter-clockwise seen from
    outside."""
    if resolution < 32:
        raise ValueError("mesh extraction resolution must be >= 32")
    bounds_min = np.asarray(bounds_min, dtype=np.float64)
    bounds_max = np.asarray(bounds_max, dtype=np.float64)
    axes = [np.linspace(bounds_min[a], bounds_max[a], resolution) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    vol = np.empty(len(pts), dtype=np.float32)
    with torch.no_grad():
        for start in range(0, len(pts), chunk):
            sl = slice(start, start + chunk)
            vol[sl] = sdf_fn(torch.as_tensor(pts[sl], dtype=torch.float32)).numpy()
    vol = vol.reshape(resolution, resolution, resolution)
    if vol.min() > 0 or vol.max() < 0:
        raise ValueError("empty zero-level set: no surface inside the bounds")
    spacing = tuple((bounds_max[a] - bounds_min[a]) / (resolution - 1) for a in range(3))
    verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=spacing, gradient_direction="ascent")
    # counter-clockwise winding seen from outside (SDF negative inside)
    return verts + bounds_min, np.ascontiguousarray(faces[:, ::-1])
