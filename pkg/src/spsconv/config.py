"""Flat ``key = value`` configuration files.

Keys are the field names of :class:`VoxelGridSpec`, :class:`BackboneConfig`
and :class:`SceneSpec`. Lists are comma separated, ``#`` starts a comment.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .backbone import BackboneConfig
from .errors import ConfigError, InputError
from .scene import SceneSpec
from .sparse import VoxelGridSpec

GRID_KEYS = {"origin": float, "voxel_size": float, "shape": int}
LIST_KEYS = {"stage_channels": int, "stage_strides": int, "subm_ratios": float, "down_ratios": float}
SCALAR_KEYS = {
    "in_channels": int,
    "stem_channels": int,
    "kernel_size": int,
    "mode": str,
    "strategy": str,
    "seed": int,
    "n_background": int,
    "n_foreground_clusters": int,
    "cluster_size": int,
    "foreground_feature_scale": float,
    "ground_band": int,
}
SCENE_KEYS = {f.name for f in fields(SceneSpec)} - {"grid"}
BACKBONE_KEYS = {f.name for f in fields(BackboneConfig)}


@dataclass(frozen=True)
class RunConfig:
    grid: VoxelGridSpec | None
    backbone: BackboneConfig
    scene: SceneSpec | None
    raw: dict

    def echo(self) -> dict:
        """Fully resolved configuration, for embedding in reports."""
        out = {"backbone": self.backbone.to_dict()}
        if self.grid is not None:
            out["grid"] = {"origin": list(self.grid.origin), "voxel_size": list(self.grid.voxel_size),
                           "shape": list(self.grid.shape)}
        if self.scene is not None:
            out["scene"] = {k: getattr(self.scene, k) for k in sorted(SCENE_KEYS)}
        for part in out.values():
            for k, v in part.items():
                if isinstance(v, tuple):
                    part[k] = list(v)
        return out


def _convert(key: str, text: str, lineno: int):
    def fail(msg):
        raise ConfigError(f"line {lineno}: key {key!r}: {msg}")

    try:
        if key in GRID_KEYS or key in LIST_KEYS:
            typ = GRID_KEYS.get(key) or LIST_KEYS[key]
            items = [s.strip() for s in text.split(",") if s.strip()]
            if not items:
                fail("empty list")
            return tuple(typ(s) for s in items)
        typ = SCALAR_KEYS[key]
        value = typ(text)
    except ValueError as exc:
        fail(f"cannot parse {text!r} ({exc})")
    if key == "seed" and not 0 <= value < 2**64:
        fail("seed must be an unsigned 64-bit integer")
    return value


def parse_text(text: str) -> dict:
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in GRID_KEYS and key not in LIST_KEYS and key not in SCALAR_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: key {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        values[key] = _convert(key, val, lineno)
    return values


def load_config(path, seed: int | None = None) -> RunConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    values = parse_text(text)
    if seed is not None:
        values["seed"] = seed
    return build_config(values)


def build_config(values: dict) -> RunConfig:
    grid = None
    grid_given = [k for k in GRID_KEYS if k in values]
    if grid_given:
        missing = [k for k in GRID_KEYS if k not in values]
        if missing:
            raise ConfigError(f"grid needs origin, voxel_size and shape; missing {missing}")
        grid = VoxelGridSpec(values["origin"], values["voxel_size"], values["shape"])
    backbone = BackboneConfig(**{k: v for k, v in values.items() if k in BACKBONE_KEYS})
    scene = None
    scene_given = {k: v for k, v in values.items() if k in SCENE_KEYS}
    if set(scene_given) - {"seed"}:
        if grid is None:
            raise ConfigError("scene keys need a grid (origin, voxel_size, shape)")
        for k in ("n_background", "n_foreground_clusters", "cluster_size"):
            if k not in scene_given:
                raise ConfigError(f"scene needs key {k!r}")
        scene = SceneSpec(grid=grid, **scene_given)
    return RunConfig(grid, backbone, scene, dict(values))
