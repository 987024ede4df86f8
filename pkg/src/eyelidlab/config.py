"""Training and model configuration, with the default (paper-scale) preset
and a desk-scale toy preset, loadable from TOML."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .anchors import DEFAULT_PITCH_RANGE, DEFAULT_YAW_RANGE


@dataclass
class ModelConfig:
    # control codes
    eye_dim: int = 16
    other_dim: int = 32
    closing_dim: int = 32
    topo_dim: int = 2
    appearance_dim: int = 8
    # anchor grid
    anchor_levels: int = 8
    anchor_base_resolution: int = 8
    anchor_max_resolution: int = 1024
    anchor_bounds: tuple[float, float] = (-1.1, 1.1)
    # networks
    sdf_hidden: int = 256
    sdf_layers: int = 8
    sdf_skip: tuple[int, ...] = (4,)
    feature_dim: int = 64
    geometric_radius: float = 1.0
    color_hidden: int = 256
    color_layers: int = 4
    deform_blocks: int = 3
    deform_hidden: int = 64
    deform_layers: int = 3
    topo_hidden: int = 128
    topo_layers: int = 4
    encoder_hidden: int = 128
    encoder_layers: int = 4
    pe_bands: int = 4
    topo_enc_bands: int = 2
    kappa_init: float = 30.0
    anchor_offsets_eye_only: bool = False
    offset_window: tuple[float, float] = (0.0, 0.0)  # (start, end) training fraction ramping offsets in
    view_dir_canonical: bool = True
    pitch_range: tuple[float, float] = DEFAULT_PITCH_RANGE
    yaw_range: tuple[float, float] = DEFAULT_YAW_RANGE


@dataclass
class SamplingConfig:
    n_coarse: int = 64
    rounds: int = 4
    per_round: int = 16
    kappa_up: float = 64.0

    @property
    def total(self) -> int:
        return self.n_coarse + self.rounds * self.per_round


@dataclass
class LossWeights:
    mask: float = 0.1
    eikonal: float = 0.1
    normal: float = 1e-5
    contact: float = 0.01
    disentangle: float = 0.1
    contact_samples: int = 256
    disentangle_points: int = 512


@dataclass
class TrainConfig:
    iterations: int = 120_000
    learning_rate: float = 5e-4
    lr_decay: float = 0.1  # cosine decay floor as a fraction of the base lr
    anchor_lr_scale: float = 10.0
    offset_lr_scale: float = 10.0
    rays_per_batch: int = 1024
    eye_ray_fraction: float = 0.5
    window_fraction: float = 0.4  # training fraction over which encoding bands open
    seed: int = 0
    log_every: int = 1
    checkpoint_every: int = 1000
    mesh_resolution: int = 512
    reference_frame: int = 0
    # ablation flags
    no_contact: bool = False
    no_offset: bool = False
    no_hyper: bool = False
    no_disentangle: bool = False
    learnable_gaze: bool = False
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def apply_ablations(self) -> "TrainConfig":
        if self.no_hyper:
            self.model.topo_dim = 0
        return self


def toy_config(**overrides) -> TrainConfig:
    """Desk-scale preset: 80x80 renders, 5k iterations, small networks."""
    cfg = TrainConfig(
        iterations=5000,
        rays_per_batch=48,
        eye_ray_fraction=0.6,
        mesh_resolution=128,
        sampling=SamplingConfig(n_coarse=12, rounds=2, per_round=8, kappa_up=128.0),
        loss=LossWeights(contact_samples=128, disentangle_points=256),
        model=ModelConfig(
            eye_dim=8,
            other_dim=8,
            closing_dim=8,
            appearance_dim=4,
            anchor_levels=5,
            anchor_base_resolution=4,
            anchor_max_resolution=32,
            sdf_hidden=96,
            sdf_layers=4,
            sdf_skip=(2,),
            feature_dim=24,
            geometric_radius=0.75,
            color_hidden=64,
            color_layers=3,
            deform_hidden=48,
            deform_layers=3,
            topo_hidden=48,
            topo_layers=3,
            encoder_hidden=32,
            encoder_layers=3,
            pe_bands=3,
            anchor_offsets_eye_only=True,
            offset_window=(0.5, 0.8),
        ),
    )
    cfg.offset_lr_scale = 1.0
    return _apply_overrides(cfg, overrides)


def _apply_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    for key, value in overrides.items():
        obj = cfg
        parts = key.split(".")
        try:
            for p in parts[:-1]:
                obj = getattr(obj, p)
        except AttributeError:
            raise KeyError(f"unknown config key: {key}") from None
        if not hasattr(obj, parts[-1]):
            raise KeyError(f"unknown config key: {key}")
        setattr(obj, parts[-1], value)
    return cfg


def _from_dict(cls, data: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(f.type) or f.name in ("sampling", "loss", "model"):
            sub = {"sampling": SamplingConfig, "loss": LossWeights, "model": ModelConfig}[f.name]
            value = _from_dict(sub, value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def load_train_config(path) -> TrainConfig:
    """Read a TOML file whose keys mirror TrainConfig (nested tables for
    sampling, loss, model). `preset = "toy"` starts from the toy preset."""
    data = tomllib.loads(Path(path).read_text())
    preset = data.pop("preset", "default")
    base = toy_config() if preset == "toy" else TrainConfig()
    merged = asdict(base)
    for key, value in data.items():
        if isinstance(value, dict):
            merged.setdefault(key, {}).update(value)
        else:
            merged[key] = value
    return _from_dict(TrainConfig, merged)


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
