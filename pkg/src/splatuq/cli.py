"""Command line pipeline: synth -> train-uncert / ensemble -> render / eval.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import ensemble, imageio, plots, sparsify, synth, trainer
from .errors import ConfigError, SceneFormatError
from .render import render, render_many
from .scene import load_cameras, load_scene, save_cameras, save_scene


def _lambda(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 0.5:
        raise argparse.ArgumentTypeError(f"lambda must be strictly smaller than 0.5 (and > 0), got {value}")
    return value


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _members(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"an ensemble needs at least 2 members, got {value}")
    return value


def _uncert_source(text: str) -> str:
    if text == "sh" or text.startswith("ensemble:") or text.startswith("random:"):
        if text.startswith("random:"):
            int(text.split(":", 1)[1])
        return text
    raise argparse.ArgumentTypeError("expected sh, ensemble:<manifest> or random:<seed>")


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _echo(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _gt_images(gt_dir: Path, count: int) -> list[np.ndarray]:
    paths = sorted(gt_dir.glob("*.ppm"))
    if len(paths) != count:
        raise ValueError(f"{gt_dir}: expected {count} PPM images, found {len(paths)}")
    return [imageio.read_image(p) for p in paths]


class _Image:
    """Minimal stand-in for a RenderBuffer holding only a color raster."""

    def __init__(self, color):
        self.color = color


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    true_scene = synth.make_scene(args.kind, args.n, args.seed)
    cams = synth.make_orbit(args.cams, args.radius, args.elevation, args.arc,
                            width=args.size, height=args.size, target=(0.0, 0.0, args.target_z))
    train_idx, eval_idx = synth.holdout_indices(len(cams), args.holdout, args.seed)
    train_cams = [cams[i] for i in train_idx]
    eval_cams = [cams[i] for i in eval_idx]
    gt_train = render_many(true_scene, train_cams)
    gt_eval = render_many(true_scene, eval_cams)
    recon = synth.reconstruct(true_scene, train_cams, gt_train, args.seed + 1_000_003,
                              iterations=args.recon_iters)
    save_scene(recon, out / "scene.ply")
    save_scene(true_scene, out / "scene_true.ply")
    save_cameras(train_cams, out / "cameras_train.json")
    save_cameras(eval_cams, out / "cameras_eval.json")
    for name, images in (("gt_train", gt_train), ("gt_eval", gt_eval)):
        (out / name).mkdir(exist_ok=True)
        for i, buf in enumerate(images):
            imageio.write_ppm(out / name / f"{i:03d}.ppm", buf.color)
    _write_json(out / "synth.json", {
        "command": "synth", "args": _echo(args),
        "train_indices": train_idx.tolist(), "eval_indices": eval_idx.tolist(),
    })
    print(f"wrote {len(train_cams)} training and {len(eval_cams)} held-out views to {out}")
    return 0


def cmd_train(args) -> int:
    scene = load_scene(args.scene)
    cams = load_cameras(args.cameras)
    cfg = trainer.TrainConfig(lam=args.lam, threshold_t=args.threshold, variant=args.variant,
                              mean_samples=args.mean_samples, iterations=args.iters,
                              learning_rate=args.lr, seed=args.seed)
    out_scene, report = trainer.train(scene, cams, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scene(out_scene, out / "scene.ply")
    doc = json.loads(report.to_json())
    doc["command"] = "train-uncert"
    doc["args"] = _echo(args)
    _write_json(out / "report.json", doc)
    print(f"trained {report.records} records for {report.iterations} iterations, "
          f"final loss {report.final_loss:.6f} ({report.wall_time_s:.1f} s)")
    return 0


def cmd_ensemble(args) -> int:
    scene = load_scene(args.scene)
    cams = load_cameras(args.cameras)
    targets = [_Image(im) for im in _gt_images(Path(args.gt_dir), len(cams))]
    cfg = ensemble.EnsembleConfig(members=args.members, seed=args.seed, fit_iterations=args.iters,
                                  learning_rate=args.lr, bootstrap=not args.no_bootstrap)
    members, timings = ensemble.run_ensemble(scene, cams, targets, cfg)
    manifest = ensemble.save_members(members, args.out_dir, cfg, timings)
    for i, t in enumerate(timings):
        print(f"member {i}: {t:.1f} s")
    print(f"manifest: {manifest}")
    return 0


def cmd_render(args) -> int:
    scene = load_scene(args.scene)
    cams = load_cameras(args.cameras)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = "color" if args.mode == "color" else "uncertainty"
    for i, cam in enumerate(cams):
        buf = render(scene, cam, mode)
        if mode == "color":
            imageio.write_ppm(out / f"view_{i:03d}.ppm", buf.color)
        else:
            imageio.write_pgm(out / f"view_{i:03d}.pgm", buf.uncert)
        imageio.write_pgm(out / f"alpha_{i:03d}.pgm", buf.alpha)
    if args.figure:
        maps = [render(scene, c, "uncertainty").uncert for c in cams]
        plots.uncertainty_strip(args.figure, maps, [f"view {i}" for i in range(len(cams))])
    print(f"rendered {len(cams)} {args.mode} views to {out}")
    return 0


def cmd_eval(args) -> int:
    scene = load_scene(args.scene)
    cams = load_cameras(args.cameras_eval)
    gt = _gt_images(Path(args.gt_dir), len(cams))
    errors = [sparsify.error_map(render(scene, c, "color").color, g) for c, g in zip(cams, gt)]
    source = args.uncert
    start = time.perf_counter()
    if args.self_oracle:
        maps = errors
        source = "oracle"
    elif source == "sh":
        maps = [render(scene, c, "uncertainty").uncert for c in cams]
    elif source.startswith("ensemble:"):
        members = ensemble.load_members(source.split(":", 1)[1])
        maps = [ensemble.ensemble_uncertainty(members, c) for c in cams]
    else:
        rng = np.random.default_rng(int(source.split(":", 1)[1]))
        maps = [rng.random(e.shape) for e in errors]
    report = sparsify.evaluate_maps(errors, maps)
    doc = {"command": "eval", "args": _echo(args), "uncertainty_source": source}
    doc.update(report.to_dict())
    _write_json(Path(args.out), doc)
    if args.curves:
        stem = Path(args.curves).with_suffix("")
        stem.parent.mkdir(parents=True, exist_ok=True)
        sparsify.write_curves_csv(stem.with_suffix(".csv"), report.fractions,
                                  report.mean_uncertainty_curve, report.mean_oracle_curve)
        plots.sparsification_plot(stem.with_suffix(".svg"), report.fractions,
                                  report.mean_uncertainty_curve, report.mean_oracle_curve,
                                  label=source, title=f"AUSE {report.mean_ause:.4f}")
    print(f"mean AUSE ({source}): {report.mean_ause:.6f} over {len(cams)} views "
          f"[{time.perf_counter() - start:.1f} s]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatuq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene, cameras and ground-truth renders")
    p.add_argument("--kind", choices=synth.SCENE_KINDS, default="poster")
    p.add_argument("--n", type=_positive_int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cams", type=_positive_int, default=64)
    p.add_argument("--radius", type=float, default=3.5)
    p.add_argument("--elevation", type=float, default=30.0)
    p.add_argument("--arc", type=float, default=360.0)
    p.add_argument("--holdout", type=_positive_int, default=16)
    p.add_argument("--size", type=_positive_int, default=128)
    p.add_argument("--target-z", type=float, default=0.4)
    p.add_argument("--recon-iters", type=int, default=500)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-uncert", help="fit the per-gaussian uncertainty field")
    p.add_argument("--scene", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--lambda", dest="lam", type=_lambda, default=0.2)
    p.add_argument("--threshold", type=_unit_interval, default=0.05)
    p.add_argument("--variant", choices=trainer.VARIANTS, default="opposite")
    p.add_argument("--mean-samples", type=_positive_int, default=16)
    p.add_argument("--iters", type=_positive_int, default=2000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for scene.ply and report.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ensemble", help="fit the color-refit ensemble baseline")
    p.add_argument("--scene", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--members", type=_members, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("render", help="render color or uncertainty images")
    p.add_argument("--scene", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--mode", choices=("color", "uncert"), default="color")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--figure", help="optional figure path with all uncertainty maps side by side")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="AUSE of an uncertainty source on held-out views")
    p.add_argument("--scene", required=True)
    p.add_argument("--cameras-eval", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--uncert", type=_uncert_source, default="sh")
    p.add_argument("--self-oracle", action="store_true", help="rank by the error map itself (AUSE 0)")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="curve output path; writes both .csv and .svg with this stem")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and args.holdout >= args.cams:
        parser.error(f"--holdout ({args.holdout}) must be smaller than --cams ({args.cams})")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, SceneFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
