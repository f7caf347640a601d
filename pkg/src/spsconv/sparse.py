"""Sparse voxel tensors, coordinate hashing and point-cloud voxelization.

Coordinates are stored as an ``(N, 4)`` int32 array with columns
``(b, x, y, z)``. The canonical row order sorts by ``(b, z, y, x)``
ascending, so ``x`` varies fastest.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ConsistencyError, DomainError, InputError, ShapeError

COORD_DTYPE = np.int32
FEAT_DTYPE = np.float32


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class VoxelGridSpec:
    origin: tuple[float, float, float]
    voxel_size: tuple[float, float, float]
    shape: tuple[int, int, int]

    def __post_init__(self):
        for name in ("origin", "voxel_size", "shape"):
            val = getattr(self, name)
            if len(val) != 3:
                raise ConfigError(f"grid {name} needs 3 components, got {len(val)}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "voxel_size", tuple(float(v) for v in self.voxel_size))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if not all(v > 0 for v in self.voxel_size):
            raise ConfigError(f"voxel_size must be strictly positive, got {self.voxel_size}")
        if not all(v >= 1 for v in self.shape):
            raise ConfigError(f"grid shape must be >= 1 on every axis, got {self.shape}")


@dataclass(frozen=True, eq=False)
class SparseTensor:
    """Active voxel coordinates with one feature row per voxel.

    Arrays are made read-only on construction; operators always return new
    tensors.
    """

    coords: np.ndarray
    features: np.ndarray
    spatial_shape: tuple[int, int, int]
    stride_level: tuple[int, int, int] = (1, 1, 1)
    _index: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=COORD_DTYPE).reshape(-1, 4)
        feats = np.asarray(self.features, dtype=FEAT_DTYPE)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        if feats.ndim != 2 or feats.shape[0] != coords.shape[0]:
            raise ShapeError(
                f"features shape {feats.shape} does not match {coords.shape[0]} coordinates"
            )
        if coords.size and coords[:, 0].min() < 0:
            raise DomainError("batch index must be non-negative")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "spatial_shape", tuple(int(v) for v in self.spatial_shape))
        object.__setattr__(self, "stride_level", tuple(int(v) for v in self.stride_level))

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def num_channels(self) -> int:
        return self.features.shape[1]

    @property
    def batch_size(self) -> int:
        return int(self.coords[:, 0].max()) + 1 if len(self) else 0

    def is_canonical(self) -> bool:
        return bool(np.array_equal(canonical_order(self.coords), np.arange(len(self))))

    def index(self) -> "CoordIndex":
        # cached; the tensor is immutable
        if not self._index:
            self._index.append(build_index(self))
        return self._index[0]

    def replace(self, features=None, coords=None, **kw) -> "SparseTensor":
        return SparseTensor(
            self.coords if coords is None else coords,
            self.features if features is None else features,
            kw.get("spatial_shape", self.spatial_shape),
            kw.get("stride_level", self.stride_level),
        )

    @classmethod
    def empty(cls, channels: int, spatial_shape, stride_level=(1, 1, 1)) -> "SparseTensor":
        return cls(
            np.zeros((0, 4), COORD_DTYPE),
            np.zeros((0, channels), FEAT_DTYPE),
            spatial_shape,
            stride_level,
        )


def canonical_order(coords: np.ndarray) -> np.ndarray:
    """Permutation sorting coords by (b, z, y, x)."""
    coords = np.asarray(coords).reshape(-1, 4)
    return np.lexsort((coords[:, 1], coords[:, 2], coords[:, 3], coords[:, 0]))


def canonicalize(t: SparseTensor) -> SparseTensor:
    order = canonical_order(t.coords)
    if np.array_equal(order, np.arange(len(t))):
        return t
    return t.replace(coords=t.coords[order], features=t.features[order])


class CoordIndex:
    """Hash index from coordinate to row.

    Keys are a mixed-radix encoding of each coordinate relative to the
    tensor's bounding box, so any query outside the box is a guaranteed miss.
    """

    def __init__(self, coords: np.ndarray):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 4)
        self.size = coords.shape[0]
        if self.size:
            self._lo = coords.min(axis=0)
            self._hi = coords.max(axis=0)
        else:
            self._lo = np.zeros(4, np.int64)
            self._hi = -np.ones(4, np.int64)
        self._ext = self._hi - self._lo + 1
        keys = self.encode(coords)
        if np.unique(keys).size != keys.size:
            raise ConsistencyError("duplicate coordinates in sparse tensor")
        self._table = kernels.build_table(keys)

    def __len__(self) -> int:
        return self.size

    def encode(self, coords: np.ndarray) -> np.ndarray:
        """Keys for in-box coords, -1 for anything outside the box."""
        c = np.asarray(coords, dtype=np.int64).reshape(-1, 4)
        inside = np.all((c >= self._lo) & (c <= self._hi), axis=1)
        r = c - self._lo
        ext = self._ext
        keys = ((r[:, 0] * ext[3] + r[:, 3]) * ext[2] + r[:, 2]) * ext[1] + r[:, 1]
        return np.where(inside, keys, -1)

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Row index per query coordinate, or -1 when absent."""
        if self.size == 0:
            return np.full(np.asarray(coords).reshape(-1, 4).shape[0], -1, np.int64)
        return kernels.probe(self._table, self.encode(coords))

    def neighbors(self, centers: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """``(K, M)`` rows of ``centers[m] + offsets[k]`` (spatial shift), -1 when absent."""
        centers = np.asarray(centers, dtype=np.int64).reshape(-1, 4)
        if self.size == 0:
            return np.full((len(offsets), len(centers)), -1, np.int64)
        return kernels.neighbor_lookup(self._table, self._lo, self._hi, centers, offsets)

    def get(self, coord) -> int | None:
        row = int(self.lookup(np.asarray(coord).reshape(1, 4))[0])
        return None if row < 0 else row

    def __contains__(self, coord) -> bool:
        return self.get(coord) is not None


def build_index(t: SparseTensor) -> CoordIndex:
    return CoordIndex(t.coords)


def voxelize_points(points: np.ndarray, spec: VoxelGridSpec) -> tuple[SparseTensor, np.ndarray]:
    """Voxelize and also return, per input point, its voxel row (-1 if dropped)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 4:
        raise ShapeError(f"points need columns x, y, z and at least one feature, got {pts.shape}")
    n_feat = pts.shape[1] - 3
    cells = np.floor((pts[:, :3] - np.asarray(spec.origin)) / np.asarray(spec.voxel_size))
    keep = np.all((cells >= 0) & (cells < np.asarray(spec.shape)), axis=1)
    point_rows = np.full(len(pts), -1, np.int64)
    if not keep.any():
        return SparseTensor.empty(n_feat, spec.shape), point_rows

    cells = cells[keep].astype(np.int64)
    sx, sy, _ = spec.shape
    keys = (cells[:, 2] * sy + cells[:, 1]) * sx + cells[:, 0]
    # np.unique sorts keys, which is exactly the (b=0, z, y, x) canonical order
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    sums = np.zeros((len(uniq), n_feat), np.float64)
    np.add.at(sums, inverse, pts[keep, 3:])
    feats = sums / counts[:, None]

    coords = np.zeros((len(uniq), 4), COORD_DTYPE)
    coords[:, 1] = uniq % sx
    coords[:, 2] = (uniq // sx) % sy
    coords[:, 3] = uniq // (sx * sy)
    point_rows[keep] = inverse
    return SparseTensor(coords, feats.astype(FEAT_DTYPE), spec.shape), point_rows


def voxelize(points: np.ndarray, spec: VoxelGridSpec) -> SparseTensor:
    """Mean-pool points into the grid; out-of-range points are dropped."""
    return voxelize_points(points, spec)[0]


def read_points(path) -> np.ndarray:
    """Load ``x y z f...`` rows from a ``.txt`` file or float32 x/y/z/intensity ``.bin``."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext not in (".txt", ".bin"):
        raise InputError(f"unsupported point file extension {ext!r} (expected .txt or .bin)")
    try:
        if ext == ".bin":
            raw = np.fromfile(path, dtype="<f4")
            if raw.size % 4:
                raise InputError(f"{path}: size is not a multiple of 16-byte records")
            return raw.reshape(-1, 4).astype(np.float64)
        with open(path, encoding="utf-8") as fh:
            rows = [line.split() for line in fh if line.strip() and not line.lstrip().startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        return np.zeros((0, 4))
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() < 4:
        raise InputError(f"{path}: every line needs 'x y z f1 [f2 ...]' with a fixed width")
    try:
        return np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_points(path, points: np.ndarray) -> None:
    path = os.fspath(path)
    pts = np.asarray(points, dtype=np.float64)
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".bin":
            if pts.shape[1] != 4:
                raise ShapeError(".bin point files hold exactly x, y, z, intensity")
            pts.astype("<f4").tofile(path)
        elif ext == ".txt":
            with open(path, "w", encoding="utf-8") as fh:
                for row in pts:
                    fh.write(" ".join(f"{v:.6f}" for v in row) + "\n")
        else:
            raise InputError(f"unsupported point file extension {ext!r}")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc
