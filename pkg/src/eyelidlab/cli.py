"""Command-line entry points.

    eyelidlab make-scene --preset main --out data/main
    eyelidlab calibrate --data data/main --out eyeball.json
    eyelidlab train --data data/main --eyeball eyeball.json --out run/ --preset toy
    eyelidlab eval --ckpt run/checkpoint.pt --data data/main --out report.json
    eyelidlab animate --ckpt run/checkpoint.pt --schedule schedule.json --out frames/
    eyelidlab tolerance-sweep --data data/main --eyeball eyeball.json --ratios 0,0.1
    eyelidlab serve --ckpt run/checkpoint.pt --port 8080
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np


def _cmd_make_scene(args):
    from .synthetic import load_scene_config, make_scene, preset_scene

    cfg = load_scene_config(args.config) if args.config else preset_scene(args.preset)
    if args.seed is not None:
        cfg.seed = args.seed
    gt = make_scene(cfg, args.out)
    print(f"wrote {cfg.n_frames} frames to {args.out} (eye scale {gt.eye_scale})")


def _cmd_calibrate(args):
    from .calibration import calibrate, save_calibrations
    from .dataset import load_dataset
    from .eyeball import build_template

    manifest = load_dataset(args.data)
    template = build_template(args.ring_count)
    results = {}
    for eye in ("left", "right"):
        results[eye] = calibrate(
            manifest.frames,
            template,
            eye=eye,
            lambda1=args.lambda1,
            lambda2=args.lambda2,
            coarse_steps=args.coarse_steps,
            fine_steps=args.fine_steps,
        )
        res = results[eye]
        print(f"{eye}: position {np.round(res.position, 4).tolist()} scale {res.scale:.5f}"
              + (f" [{res.warning}]" if res.warning else ""))
    save_calibrations(args.out, results["left"], results["right"])
    print(f"wrote {args.out}")


def _load_calibration_pair(path):
    from .calibration import load_calibrations

    return load_calibrations(path)


def _cmd_train(args):
    from .calibration import perturb_calibration
    from .config import TrainConfig, load_train_config, toy_config
    from .dataset import load_dataset
    from .training import train

    manifest = load_dataset(args.data)
    left, right = _load_calibration_pair(args.eyeball)
    if args.config:
        cfg = load_train_config(args.config)
    elif args.preset == "toy":
        cfg = toy_config()
    else:
        cfg = TrainConfig()
    if args.iterations is not None:
        cfg.iterations = args.iterations
    if args.seed is not None:
        cfg.seed = args.seed
    for flag in ("no_contact", "no_offset", "no_hyper", "no_disentangle", "learnable_gaze"):
        if getattr(args, flag):
            setattr(cfg, flag, True)
    if args.perturb_ratio > 0:
        left = perturb_calibration(left, args.perturb_ratio, cfg.seed)
        right = perturb_calibration(right, args.perturb_ratio, cfg.seed + 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(it, report, elapsed):
        print(f"iter {it}: total {report.total:.4f} ({elapsed:.0f}s)", flush=True)

    train(cfg, manifest, left, right, out_dir=out, log_file=out / "train_log.jsonl", progress=progress)
    print(f"wrote {out / 'checkpoint.pt'}")


def _cmd_eval(args):
    from .dataset import load_dataset
    from .evaluation import evaluate
    from .training import Checkpoint

    manifest = load_dataset(args.data)
    ckpt = Checkpoint.load(args.ckpt)
    frames = [int(f) for f in args.frames.split(",")] if args.frames else None
    report = evaluate(ckpt, manifest, frames=frames)
    payload = report.as_dict()
    print(json.dumps({k: v for k, v in payload.items() if k != "frames"}, indent=1))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1))
        print(f"wrote {args.out}")


def _cmd_animate(args):
    from .dataset import load_dataset
    from .evaluation import animate, load_schedule
    from .service import default_camera
    from .training import Checkpoint

    ckpt = Checkpoint.load(args.ckpt)
    schedule = load_schedule(args.schedule)
    if args.data:
        manifest = load_dataset(args.data)
        camera = manifest.frames[args.camera_frame].camera
        near, far = manifest.near, manifest.far
    else:
        camera = default_camera(args.size)
        near, far = 0.5, 2.4
    results = animate(ckpt, schedule, camera, near, far, out_dir=args.out, image_only=args.image_only)
    clamped = sum(1 for r in results if r["clamped"])
    print(f"wrote {len(results)} frames to {args.out}" + (f" ({clamped} clamped)" if clamped else ""))


def _cmd_tolerance_sweep(args):
    from .config import load_train_config, toy_config
    from .dataset import load_dataset
    from .evaluation import tolerance_sweep

    manifest = load_dataset(args.data)
    left, right = _load_calibration_pair(args.eyeball)
    cfg = load_train_config(args.config) if args.config else toy_config()
    if args.iterations is not None:
        cfg.iterations = args.iterations
    ratios = [float(r) for r in args.ratios.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = tolerance_sweep(cfg, manifest, left, right, ratios, seeds)
    table = [
        {k: row[k] for k in ("ratio", "seed", "contact", "eye_chamfer", "eye_depth_error")}
        for row in rows
    ]
    print(json.dumps(table, indent=1))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=1, default=str))
        print(f"wrote {args.out}")


def _cmd_serve(args):
    import uvicorn

    from .service import PoseService, create_app
    from .training import Checkpoint

    cameras = {"default": None}
    near, far = 0.5, 2.4
    if args.data:
        from .dataset import load_dataset

        manifest = load_dataset(args.data)
        near, far = manifest.near, manifest.far
        for k in range(0, manifest.n_frames, max(1, manifest.n_frames // 4)):
            cameras[f"frame{k}"] = manifest.frames[k].camera
    ckpt = Checkpoint.load(args.ckpt) if Path(args.ckpt).exists() else None
    if ckpt is None:
        print(f"warning: checkpoint {args.ckpt} not found; serving 503s", file=sys.stderr)
    service = PoseService(ckpt, cameras, near=near, far=far)
    uvicorn.run(create_app(service), host=args.host, port=args.port)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="eyelidlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-scene", help="generate a synthetic dataset with ground truth")
    p.add_argument("--preset", default="main", choices=["main", "main_calib", "orbit", "blink"])
    p.add_argument("--config", help="scene config JSON (overrides --preset)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_scene)

    p = sub.add_parser("calibrate", help="recover eyeball position/scale/rotations")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--lambda2", type=float, default=0.01)
    p.add_argument("--coarse-steps", type=int, default=2000)
    p.add_argument("--fine-steps", type=int, default=3000)
    p.add_argument("--ring-count", type=int, default=32)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("train", help="train the dynamic eyelid field")
    p.add_argument("--data", required=True)
    p.add_argument("--eyeball", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TOML config")
    p.add_argument("--preset", default="toy", choices=["toy", "default"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--perturb-ratio", type=float, default=0.0)
    for flag in ("no-contact", "no-offset", "no-hyper", "no-disentangle", "learnable-gaze"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against ground truth")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--frames")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("animate", help="render a gaze/closing schedule")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="dataset supplying the camera")
    p.add_argument("--camera-frame", type=int, default=0)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--image-only", action="store_true")
    p.set_defaults(func=_cmd_animate)

    p = sub.add_parser("tolerance-sweep", help="reconstruction quality vs calibration error")
    p.add_argument("--data", required=True)
    p.add_argument("--eyeball", required=True)
    p.add_argument("--ratios", default="0,0.05,0.1,0.2")
    p.add_argument("--seeds", default="0")
    p.add_argument("--config")
    p.add_argument("--iterations", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tolerance_sweep)

    p = sub.add_parser("serve", help="HTTP posing service for the viewer")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
