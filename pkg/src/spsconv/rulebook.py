"""Kernel offsets, gather/scatter rulebooks and structural FLOP counts."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .sparse import COORD_DTYPE, CoordIndex, SparseTensor


def _triple(v) -> tuple[int, int, int]:
    if np.isscalar(v):
        return (int(v),) * 3
    v = tuple(int(x) for x in v)
    if len(v) != 3:
        raise ConfigError(f"expected 3 components, got {v}")
    return v


@dataclass(frozen=True)
class KernelSpec:
    size: int = 3
    stride: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "stride", _triple(self.stride))
        if self.size < 1 or self.size % 2 == 0:
            raise ConfigError(f"unsupported kernel size {self.size}: only odd sizes have a center")
        if min(self.stride) < 1:
            raise ConfigError(f"stride components must be >= 1, got {self.stride}")

    @property
    def volume(self) -> int:
        return self.size**3

    @property
    def is_strided(self) -> bool:
        return self.stride != (1, 1, 1)


def kernel_offsets(spec: KernelSpec) -> np.ndarray:
    """All centered offsets as a ``(K**3, 3)`` array in lexicographic (x, y, z) order."""
    if not isinstance(spec, KernelSpec):
        spec = KernelSpec(spec)
    r = (spec.size - 1) // 2
    return np.array(list(itertools.product(range(-r, r + 1), repeat=3)), dtype=np.int64).reshape(-1, 3)


def output_shape(shape, stride) -> tuple[int, int, int]:
    return tuple(-(-int(n) // int(s)) for n, s in zip(shape, _triple(stride)))


@dataclass(frozen=True, eq=False)
class Rulebook:
    """Gather/scatter plan grouped by kernel offset.

    Pairs for offset ``k`` live in ``in_rows[ptr[k]:ptr[k+1]]`` and
    ``out_rows[ptr[k]:ptr[k+1]]``, sorted by output row.
    """

    offsets: np.ndarray
    in_rows: np.ndarray
    out_rows: np.ndarray
    offset_ptr: np.ndarray
    out_coords: np.ndarray
    mode: str
    stride: tuple[int, int, int]
    n_in: int
    out_shape: tuple[int, int, int]

    @property
    def n_out(self) -> int:
        return self.out_coords.shape[0]

    @property
    def num_pairs(self) -> int:
        return int(self.in_rows.shape[0])

    def pairs(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offset_ptr[k], self.offset_ptr[k + 1]
        return self.in_rows[lo:hi], self.out_rows[lo:hi]

    def triples(self) -> np.ndarray:
        """``(P, 3)`` array of (offset index, input row, output row)."""
        k = np.repeat(np.arange(len(self.offsets)), np.diff(self.offset_ptr))
        return np.stack([k, self.in_rows, self.out_rows], axis=1)

    def same_as(self, other: "Rulebook") -> bool:
        return (
            self.mode == other.mode
            and self.stride == other.stride
            and self.n_in == other.n_in
            and self.out_shape == other.out_shape
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("offsets", "in_rows", "out_rows", "offset_ptr", "out_coords")
            )
        )


def _gather_pairs(index: CoordIndex, centers: np.ndarray, out_rows: np.ndarray, offsets: np.ndarray):
    """Look up ``center + k`` for every offset; keep hits.

    ``centers`` are output positions expressed in the input frame.
    """
    n_k = len(offsets)
    if len(out_rows) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(n_k + 1, np.int64)
    hits = index.neighbors(centers, offsets)
    valid = hits >= 0
    counts = valid.sum(axis=1)
    ptr = np.zeros(n_k + 1, np.int64)
    np.cumsum(counts, out=ptr[1:])
    in_rows = hits[valid]
    out_b = np.broadcast_to(out_rows[None, :], hits.shape)[valid]
    return in_rows.astype(np.int64), out_b.astype(np.int64), ptr


def build_subm_rulebook(t: SparseTensor, spec: KernelSpec, active_out=None) -> Rulebook:
    """Submanifold plan: outputs sit on the input sites.

    ``active_out`` restricts which output rows receive pairs; the output
    coordinate list is always the full input list.
    """
    if spec.is_strided:
        raise ConfigError(f"submanifold rulebook requires stride 1, got {spec.stride}")
    n = len(t)
    if active_out is None:
        rows = np.arange(n, dtype=np.int64)
    else:
        rows = np.unique(np.asarray(active_out, dtype=np.int64))
        if rows.size and (rows[0] < 0 or rows[-1] >= n):
            raise ShapeError("active_out rows out of range")
    offsets = kernel_offsets(spec)
    in_rows, out_rows, ptr = _gather_pairs(t.index(), t.coords[rows], rows, offsets)
    return Rulebook(offsets, in_rows, out_rows, ptr, t.coords, "submanifold", (1, 1, 1), n, t.spatial_shape)


def _encode_out(coords: np.ndarray, shape) -> np.ndarray:
    # canonical (b, z, y, x) radix key inside the output grid
    sx, sy, sz = (int(v) for v in shape)
    return ((coords[:, 0] * sz + coords[:, 3]) * sy + coords[:, 2]) * sx + coords[:, 1]


def _decode_out(keys: np.ndarray, shape) -> np.ndarray:
    sx, sy, sz = (int(v) for v in shape)
    out = np.empty((len(keys), 4), np.int64)
    out[:, 1] = keys % sx
    rest = keys // sx
    out[:, 2] = rest % sy
    rest //= sy
    out[:, 3] = rest % sz
    out[:, 0] = rest // sz
    return out


def candidate_outputs(coords: np.ndarray, spec: KernelSpec, spatial_shape) -> np.ndarray:
    """Stride-surviving kernel neighbourhood of ``coords``, in the output frame.

    Canonically ordered, duplicates removed, clipped to ``[0, ceil(shape/s))``.
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 4)
    stride = np.asarray(spec.stride, np.int64)
    oshape = output_shape(spatial_shape, spec.stride)
    keys = []
    for k in kernel_offsets(spec):
        q = coords.copy()
        q[:, 1:] += k
        ok = np.all(q[:, 1:] >= 0, axis=1) & np.all(q[:, 1:] % stride == 0, axis=1)
        q = q[ok]
        q[:, 1:] //= stride
        q = q[np.all(q[:, 1:] < np.asarray(oshape), axis=1)]
        keys.append(_encode_out(q, oshape))
    if not keys:
        return np.zeros((0, 4), np.int64)
    return _decode_out(np.unique(np.concatenate(keys)), oshape)


def build_regular_rulebook(t: SparseTensor, spec: KernelSpec, allowed_out=None) -> Rulebook:
    """Regular (possibly strided) plan.

    Outputs are every stride-aligned kernel neighbour of an active input,
    divided into the output frame. ``allowed_out`` (output-frame coords)
    intersects that set; gathering still reads all of the input.
    """
    oshape = output_shape(t.spatial_shape, spec.stride)
    out = candidate_outputs(t.coords, spec, t.spatial_shape)
    if allowed_out is not None:
        allowed = np.asarray(allowed_out, dtype=np.int64).reshape(-1, 4)
        if len(allowed) == 0 or len(out) == 0:
            out = out[:0]
        else:
            allowed = np.unique(allowed, axis=0)
            out = out[CoordIndex(allowed).lookup(out) >= 0]
    stride = np.asarray(spec.stride, np.int64)
    centers = out.copy()
    centers[:, 1:] *= stride
    offsets = kernel_offsets(spec)
    rows = np.arange(len(out), dtype=np.int64)
    in_rows, out_rows, ptr = _gather_pairs(t.index(), centers, rows, offsets)
    return Rulebook(
        offsets, in_rows, out_rows, ptr, out.astype(COORD_DTYPE), "regular", spec.stride, len(t), oshape
    )


def flops_of(rb: Rulebook, c_in: int, c_out: int) -> int:
    """Multiply and add per MAC: ``2 * pairs * c_in * c_out``."""
    return 2 * rb.num_pairs * int(c_in) * int(c_out)
