"""Measurement runs behind the CLI: baseline vs pruned reports, ratio sweeps, foreground stats."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import replace

import numpy as np

from .backbone import BackboneConfig, StageStats, build_backbone
from .errors import ConsistencyError, InputError
from .sparse import SparseTensor

SWEEP_FIELDS = (
    "ratio",
    "baseline_flops",
    "spss_flops",
    "sprs_flops",
    "combined_flops",
    "baseline_subm_flops",
    "spss_subm_flops",
    "baseline_stage2_voxels",
    "sprs_stage2_voxels",
)


def total_flops(stats: list[StageStats]) -> int:
    return sum(s.conv_flops for s in stats)


def subm_layer_flops(stats: list[StageStats], kinds=("spss",)) -> int:
    """FLOPs of the stage-internal submanifold layers (the ones SPSS replaces)."""
    return sum(
        b.flops for s in stats[1:] for b in s.blocks if ".subm" in b.name and b.kind in kinds
    )


def run_variant(cfg: BackboneConfig, t: SparseTensor, labels=None) -> list[StageStats]:
    return build_backbone(cfg).forward(t, labels)[1]


def run_report(cfg: BackboneConfig, t: SparseTensor, echo: dict, input_name: str) -> dict:
    base = run_variant(replace(cfg, mode="baseline"), t)
    pruned = run_variant(replace(cfg, mode="pruned"), t)
    fb, fp = total_flops(base), total_flops(pruned)
    for stats in (base, pruned):
        if sum(b.flops for s in stats for b in s.blocks) != total_flops(stats):
            raise ConsistencyError("per-block FLOPs do not sum to the stage totals")
    reduction = 1.0 - fp / fb if fb else 0.0
    return {
        "input": {"path": input_name, "voxels": len(t), "channels": t.num_channels},
        "config": echo,
        "seed": int(cfg.seed),
        "strategy": str(cfg.selection()),
        "baseline": {"total_flops": fb, "stages": [s.to_dict() for s in base]},
        "pruned": {"total_flops": fp, "stages": [s.to_dict() for s in pruned]},
        "reduction": reduction,
        "stage_voxel_ratio": [
            (p.active_voxel_count / b.active_voxel_count) if b.active_voxel_count else None
            for b, p in zip(base, pruned)
        ],
    }


def sweep(cfg: BackboneConfig, t: SparseTensor, ratios) -> list[dict]:
    """One row per ratio: SPSS only, SPRS only and both, against the baseline."""
    base = run_variant(replace(cfg, mode="baseline"), t)
    rows = []
    for r in ratios:
        r = float(r)
        spss = run_variant(replace(cfg, mode="pruned", subm_ratios=(r,) * 4, down_ratios=(0.0,) * 3), t)
        sprs = run_variant(replace(cfg, mode="pruned", subm_ratios=(0.0,) * 4, down_ratios=(r,) * 3), t)
        both = run_variant(replace(cfg, mode="pruned", subm_ratios=(r,) * 4, down_ratios=(r,) * 3), t)
        rows.append({
            "ratio": r,
            "baseline_flops": total_flops(base),
            "spss_flops": total_flops(spss),
            "sprs_flops": total_flops(sprs),
            "combined_flops": total_flops(both),
            "baseline_subm_flops": subm_layer_flops(base, kinds=("subm",)),
            "spss_subm_flops": subm_layer_flops(spss),
            "baseline_stage2_voxels": base[2].active_voxel_count,
            "sprs_stage2_voxels": sprs[2].active_voxel_count,
        })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def voxel_labels(point_rows: np.ndarray, labels: np.ndarray, n_voxels: int) -> np.ndarray:
    """A voxel is foreground when any point that landed in it is."""
    fg = np.zeros(n_voxels, bool)
    hit = (point_rows >= 0) & (np.asarray(labels) != 0)
    fg[point_rows[hit]] = True
    return fg


def foreground_stats(cfg: BackboneConfig, t: SparseTensor, voxel_fg: np.ndarray, point_labels: np.ndarray) -> dict:
    stats = run_variant(replace(cfg, mode="baseline"), t, labels=voxel_fg)
    n_fg = int(voxel_fg.sum())
    stages = [
        {
            "name": s.name,
            "voxels": s.active_voxel_count,
            "foreground": s.foreground_count,
            "foreground_fraction": s.foreground_count / s.active_voxel_count if s.active_voxel_count else 0.0,
        }
        for s in stats
    ]
    n_pts = len(point_labels)
    return {
        "points": {
            "count": n_pts,
            "foreground": int(np.count_nonzero(point_labels)),
            "foreground_fraction": float(np.count_nonzero(point_labels)) / n_pts if n_pts else 0.0,
        },
        "input": {
            "voxels": len(t),
            "foreground": n_fg,
            "foreground_fraction": n_fg / len(t) if len(t) else 0.0,
        },
        "stages": stages,
    }


def read_labels(path) -> np.ndarray:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise InputError(f"cannot read labels {path}: {exc}") from exc
    if not tokens:
        raise InputError(f"label file {path} is empty")
    try:
        vals = np.array([int(t) for t in tokens], np.int8)
    except ValueError as exc:
        raise InputError(f"{path}: labels must be integers 0/1 ({exc})") from exc
    if not np.isin(vals, (0, 1)).all():
        raise InputError(f"{path}: labels must be 0 or 1")
    return vals


def write_labels(path, labels) -> None:
    try:
        with open(os.fspath(path), "w", encoding="utf-8") as fh:
            fh.write("".join(f"{int(v)}\n" for v in labels))
    except OSError as exc:
        raise InputError(f"cannot write labels {path}: {exc}") from exc
