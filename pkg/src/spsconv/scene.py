"""Synthetic LiDAR-like scenes: a sparse ground band plus compact foreground clusters.

Every point lands in its own voxel, so the voxel-level foreground fraction is
exactly ``clusters * cluster_size / total``. Foreground points carry
intensities scaled by ``foreground_feature_scale``; background intensities
stay in ``[0, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .sparse import VoxelGridSpec


@dataclass(frozen=True)
class SceneSpec:
    grid: VoxelGridSpec
    n_background: int
    n_foreground_clusters: int
    cluster_size: int
    foreground_feature_scale: float = 4.0
    seed: int = 0
    ground_band: int = 2

    def __post_init__(self):
        if self.n_background < 0 or self.n_foreground_clusters < 0 or self.cluster_size < 1:
            raise ConfigError("scene counts must be non-negative and cluster_size >= 1")
        if not self.foreground_feature_scale > 1:
            raise ConfigError("foreground_feature_scale must be > 1")
        if not 1 <= self.ground_band <= self.grid.shape[2]:
            raise ConfigError(f"ground_band must lie in [1, {self.grid.shape[2]}]")
        sx, sy, _ = self.grid.shape
        if self.n_background > sx * sy * self.ground_band:
            raise ConfigError(
                f"n_background={self.n_background} exceeds the {sx * sy * self.ground_band} ground-band cells"
            )

    @property
    def n_foreground(self) -> int:
        return self.n_foreground_clusters * self.cluster_size

    @property
    def foreground_fraction(self) -> float:
        total = self.n_background + self.n_foreground
        return self.n_foreground / total if total else 0.0


def _cluster_template(size: int) -> np.ndarray:
    # the `size` cells of a cube nearest its centre, as offsets from the cube corner
    side = math.ceil(round(size ** (1 / 3), 9))
    cells = np.stack(np.meshgrid(*(np.arange(side),) * 3, indexing="ij"), -1).reshape(-1, 3)
    d = ((cells - (side - 1) / 2) ** 2).sum(1)
    return cells[np.argsort(d, kind="stable")[:size]]


def _place_clusters(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.n_foreground_clusters == 0:
        return np.zeros((0, 3), np.int64)
    sx, sy, sz = spec.grid.shape
    tmpl = _cluster_template(spec.cluster_size)
    ext = tmpl.max(0) + 1
    z_lo, z_hi = spec.ground_band, sz - ext[2]
    if z_hi < z_lo or ext[0] > sx or ext[1] > sy:
        raise ConfigError("grid too small to place foreground clusters above the ground band")
    boxes: list[np.ndarray] = []
    out = []
    for _ in range(spec.n_foreground_clusters):
        for _attempt in range(1000):
            corner = np.array([
                rng.integers(0, sx - ext[0] + 1),
                rng.integers(0, sy - ext[1] + 1),
                rng.integers(z_lo, z_hi + 1),
            ])
            # keep a one-cell gap between cluster boxes
            if all(np.any((corner + ext < b[0]) | (b[1] < corner)) for b in boxes):
                break
        else:
            raise ConfigError("could not place non-overlapping clusters; enlarge the grid")
        boxes.append((corner, corner + ext))
        out.append(corner + tmpl)
    return np.concatenate(out)


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(points, labels)``; points are ``x y z intensity`` rows in metres."""
    rng = np.random.default_rng(spec.seed)
    sx, sy, _ = spec.grid.shape
    flat = rng.choice(sx * sy * spec.ground_band, size=spec.n_background, replace=False)
    bg = np.stack([flat % sx, (flat // sx) % sy, flat // (sx * sy)], axis=1)
    fg = _place_clusters(spec, rng)
    cells = np.concatenate([bg, fg]).astype(np.float64)
    labels = np.concatenate([np.zeros(len(bg), np.int8), np.ones(len(fg), np.int8)])

    jitter = rng.uniform(0.1, 0.9, size=cells.shape)
    xyz = np.asarray(spec.grid.origin) + (cells + jitter) * np.asarray(spec.grid.voxel_size)
    inten = np.concatenate([
        rng.uniform(0.0, 1.0, len(bg)),
        spec.foreground_feature_scale * rng.uniform(0.5, 1.0, len(fg)),
    ])
    points = np.column_stack([xyz, inten])
    # float32 storage must not push a point across a cell boundary; jitter keeps a 10% margin
    return points, labels
