"""Shared test utilities: deterministic dataset generation and a disk cache
for expensive artifacts (calibrations, trained checkpoints).

Cache keys include a digest of the package sources, so any code change
invalidates cached runs and they are recomputed honestly.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from pathlib import Path

import numpy as np

import eyelidlab

TESTS_DIR = Path(__file__).parent
CACHE_DIR = TESTS_DIR / ".cache"
SRC_DIR = Path(eyelidlab.__file__).parent


def source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(SRC_DIR.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def ensure_dataset(name: str, **overrides):
    """Generate the named preset scene once; the cache key includes the full
    scene configuration so preset changes regenerate the data."""
    import dataclasses

    from eyelidlab.dataset import load_dataset
    from eyelidlab.synthetic import make_scene, preset_scene

    cfg = preset_scene(name, **overrides)
    generator_src = (SRC_DIR / "synthetic.py").read_bytes()
    digest = hashlib.sha256(
        json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=list).encode()
        + generator_src
    ).hexdigest()[:10]
    root = CACHE_DIR / f"scene_{name}_{digest}"
    if not (root / "meta.json").exists():
        root.mkdir(parents=True, exist_ok=True)
        make_scene(cfg, root)
    return load_dataset(root)


def cached(key_parts: list, builder, suffix: str = ".pkl"):
    """Build-or-load an artifact keyed by the given parts plus the source digest."""
    key = hashlib.sha256(
        json.dumps([source_digest()] + [str(p) for p in key_parts], sort_keys=True).encode()
    ).hexdigest()[:20]
    path = CACHE_DIR / "artifacts" / f"{key}{suffix}"
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        with open(path, "rb") as f:
            return pickle.load(f)
    value = builder()
    with open(path, "wb") as f:
        pickle.dump(value, f)
    return value


def gt_calibrations(manifest_root):
    """Ground-truth eyeball parameters as calibration objects."""
    from eyelidlab.calibration import EyeballCalibration

    gt = json.loads((Path(manifest_root) / "gt" / "eyeball.json").read_text())
    out = []
    for side in ("left", "right"):
        d = gt[side]
        out.append(
            EyeballCalibration(
                position=np.asarray(d["position"]),
                scale=float(d["scale"]),
                rotations=np.asarray(d["rotations"]),
            )
        )
    return out[0], out[1]


def trained_checkpoint(tag: str, manifest, calib_left, calib_right, cfg):
    """Train once per (sources, config, dataset, calibration) and cache."""
    from eyelidlab.config import config_to_dict
    from eyelidlab.training import Checkpoint, train

    key = [
        "ckpt",
        tag,
        json.dumps(config_to_dict(cfg), sort_keys=True),
        str(manifest.root),
        calib_left.position.tobytes().hex(),
        calib_right.position.tobytes().hex(),
        f"{calib_left.scale:.9f}/{calib_right.scale:.9f}",
        hashlib.sha256(calib_left.rotations.tobytes() + calib_right.rotations.tobytes()).hexdigest()[:12],
    ]
    digest = hashlib.sha256(json.dumps([source_digest()] + key).encode()).hexdigest()[:20]
    path = CACHE_DIR / "runs" / f"{tag}_{digest}.pt"
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        return Checkpoint.load(path)
    ckpt = train(cfg, manifest, calib_left, calib_right)
    ckpt.save(path)
    return ckpt


def relative_error(a, b, floor=1e-12) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))
