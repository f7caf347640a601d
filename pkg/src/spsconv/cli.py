"""Command-line front end.

    spsconv synth    --config scene.cfg --out scene.bin [--labels scene.labels]
    spsconv voxelize --config run.cfg --input scene.bin --out voxels.txt
    spsconv run      --config run.cfg --input scene.bin [--out report.json]
    spsconv sweep    --config run.cfg --input scene.bin --ratios 0.1,0.3,0.5 [--out sweep.csv]
    spsconv stats    --config run.cfg --input scene.bin --labels scene.labels

Exit codes: 0 success, 2 configuration error, 3 input/IO error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import harness
from .config import RunConfig, load_config
from .errors import ConfigError, InputError, SpsConvError
from .scene import generate_scene
from .sparse import read_points, voxelize, voxelize_points, write_points

log = logging.getLogger("spsconv")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc}") from exc


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ConfigError(f"--{n} is required for '{args.command}'")


def _load_tensor(cfg: RunConfig, path: str, with_rows: bool = False):
    if cfg.grid is None:
        raise ConfigError("config must define the voxel grid (origin, voxel_size, shape)")
    pts = read_points(path)
    return voxelize_points(pts, cfg.grid) + (pts,) if with_rows else voxelize(pts, cfg.grid)


def cmd_synth(args) -> None:
    _need(args, "config", "out")
    cfg = load_config(args.config, seed=args.seed)
    if cfg.scene is None:
        raise ConfigError("synth needs scene keys (n_background, n_foreground_clusters, cluster_size, ...)")
    points, labels = generate_scene(cfg.scene)
    labels_path = args.labels or os.path.splitext(args.out)[0] + ".labels"
    write_points(args.out, points)
    harness.write_labels(labels_path, labels)
    summary = {
        "points": len(points),
        "foreground_points": int(labels.sum()),
        "foreground_fraction": float(labels.sum()) / len(points) if len(points) else 0.0,
        "points_path": args.out,
        "labels_path": labels_path,
        "config": cfg.echo(),
    }
    sys.stdout.write(_dump_json(summary))


def cmd_voxelize(args) -> None:
    _need(args, "config", "input", "out")
    cfg = load_config(args.config, seed=args.seed)
    t = _load_tensor(cfg, args.input)
    lines = ["# b x y z " + " ".join(f"f{i}" for i in range(t.num_channels))]
    for c, f in zip(t.coords, t.features):
        lines.append(" ".join(str(int(v)) for v in c) + " " + " ".join(repr(float(v)) for v in f))
    _emit("\n".join(lines) + "\n", args.out)
    sys.stdout.write(_dump_json({"voxels": len(t), "channels": t.num_channels, "out": args.out}))


def cmd_run(args) -> None:
    _need(args, "config", "input")
    cfg = load_config(args.config, seed=args.seed)
    t = _load_tensor(cfg, args.input)
    report = harness.run_report(cfg.backbone, t, cfg.echo(), args.input)
    _emit(_dump_json(report), args.out)


def _parse_ratios(text: str) -> list[float]:
    try:
        ratios = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"--ratios: {exc}") from exc
    if not ratios or any(not 0 <= r <= 1 for r in ratios):
        raise ConfigError("--ratios needs a comma list of values in [0, 1]")
    return ratios


def cmd_sweep(args) -> None:
    _need(args, "config", "input", "ratios")
    ratios = _parse_ratios(args.ratios)
    cfg = load_config(args.config, seed=args.seed)
    t = _load_tensor(cfg, args.input)
    _emit(harness.rows_to_csv(harness.sweep(cfg.backbone, t, ratios)), args.out)


def cmd_stats(args) -> None:
    _need(args, "config", "input", "labels")
    cfg = load_config(args.config, seed=args.seed)
    labels = harness.read_labels(args.labels)
    t, point_rows, pts = _load_tensor(cfg, args.input, with_rows=True)
    if len(labels) != len(pts):
        raise InputError(f"{len(labels)} labels for {len(pts)} points")
    fg = harness.voxel_labels(point_rows, labels, len(t))
    stats = harness.foreground_stats(cfg.backbone, t, fg, labels)
    stats["config"] = cfg.echo()
    _emit(_dump_json(stats), args.out)


COMMANDS = {
    "synth": cmd_synth,
    "voxelize": cmd_voxelize,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spsconv", description="Sparse conv pruning harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--input")
        p.add_argument("--labels")
        p.add_argument("--out")
        p.add_argument("--ratios", help="comma-separated pruning ratios")
        p.add_argument("--seed", type=int, help="override the config seed (u64)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        COMMANDS[args.command](args)
    except SpsConvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
