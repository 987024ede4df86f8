"""The six training objectives and their weighted sum.

Conventions: the color term is the mean absolute difference per channel; the
mask term is mean binary cross entropy over rays; the Eikonal term averages
over all ray samples; the normal term is a weighted sum (volume-rendering
weights already sum to at most one per ray); the contact term averages over
the sampled eyeball vertices; the disentangle term takes per-region means.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .config import LossWeights
from .dataset import EyeRegions
from .deformation import CODE_PARTS, DeformationCode, make_pseudo_codes

# regions whose hyper coordinates must not change when the given code part is
# replaced by a random latent (the disentanglement table)
KEEP_REGIONS = {
    "other": (EyeRegions.REGION_LEFT, EyeRegions.REGION_RIGHT),
    "le": (EyeRegions.REGION_RIGHT, EyeRegions.REGION_OTHER),
    "re": (EyeRegions.REGION_LEFT, EyeRegions.REGION_OTHER),
}


@dataclass
class LossReport:
    color: float = 0.0
    mask: float = 0.0
    eikonal: float = 0.0
    normal: float = 0.0
    contact: float = 0.0
    disentangle: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return {
            "color": self.color,
            "mask": self.mask,
            "eikonal": self.eikonal,
            "normal": self.normal,
            "contact": self.contact,
            "disentangle": self.disentangle,
            "total": self.total,
        }


def color_loss(rendered: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over rays and channels."""
    if rendered.shape != target.shape:
        raise ValueError(f"batch shapes differ: {tuple(rendered.shape)} vs {tuple(target.shape)}")
    return (rendered - target).abs().mean()


def mask_loss(labels: torch.Tensor, accumulated: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy between mask labels and accumulated opacity."""
    acc = accumulated.clamp(1e-5, 1.0 - 1e-5)
    return -(labels * torch.log(acc) + (1.0 - labels) * torch.log(1.0 - acc)).mean()


def eikonal_loss(gradients: torch.Tensor) -> torch.Tensor:
    """Mean squared deviation of the SDF gradient norm from one."""
    return (torch.linalg.norm(gradients, dim=-1) - 1.0).pow(2).mean()


def normal_loss(weights: torch.Tensor, gradients: torch.Tensor, predicted: torch.Tensor) -> torch.Tensor:
    """Sum over samples of weight * |gradient - predicted normal|_1."""
    return (weights[..., None] * (gradients - predicted).abs()).sum()


def contact_loss(sdf: torch.Tensor, gradients: torch.Tensor, normals: torch.Tensor) -> torch.Tensor:
    """Zero SDF and opposite unit normals at eyeball contact vertices.

    `sdf` and `gradients` are the field values at the sampled vertices;
    `normals` the corresponding outward eyeball normals. The gradient is
    normalized before the dot product, bounding the directional term in
    [0, 2]. Returns 0 for an empty vertex set.
    """
    if len(sdf) == 0:
        return torch.zeros(())
    grad_unit = torch.nn.functional.normalize(gradients, dim=-1)
    direction = ((grad_unit * normals).sum(-1) + 1.0).abs()
    return sdf.abs().mean() + direction.mean()


def disentangle_loss(
    hyper_fn,
    points: torch.Tensor,
    tags: torch.Tensor,
    code: DeformationCode,
    epsilons: dict[str, torch.Tensor],
) -> torch.Tensor:
    """Per-region mean L1 between hyper coordinates under pseudo codes and
    under the original code.

    `hyper_fn(points, code)` evaluates [deformation, topology]; `epsilons`
    maps each code part to its random replacement. Regions with no points
    are skipped. The reference is evaluated on the same point subset as the
    pseudo pass, so an identity replacement yields exactly zero.
    """
    total = points.new_zeros(())
    for part in CODE_PARTS:
        if part not in epsilons:
            continue
        keep = KEEP_REGIONS[part]
        sel = (tags == keep[0]) | (tags == keep[1])
        if not bool(sel.any()):
            continue
        pseudo = make_pseudo_codes(code, epsilons[part], part)
        subset = points[sel]
        h_pseudo = hyper_fn(subset, pseudo)
        h_ref = hyper_fn(subset, code)
        total = total + (h_pseudo - h_ref).abs().sum(-1).mean()
    return total


def total_loss(terms: dict[str, torch.Tensor], weights: LossWeights) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum; the report carries each term's raw value."""
    zero = torch.zeros(())
    color = terms.get("color", zero)
    mask = terms.get("mask", zero)
    eik = terms.get("eikonal", zero)
    norm = terms.get("normal", zero)
    contact = terms.get("contact", zero)
    det = terms.get("disentangle", zero)
    total = (
        color
        + weights.mask * mask
        + weights.eikonal * eik
        + weights.normal * norm
        + weights.contact * contact
        + weights.disentangle * det
    )
    report = LossReport(
        color=float(color.detach()),
        mask=float(mask.detach()),
        eikonal=float(eik.detach()),
        normal=float(norm.detach()),
        contact=float(contact.detach()),
        disentangle=float(det.detach()),
        total=float(total.detach()),
    )
    return total, report
