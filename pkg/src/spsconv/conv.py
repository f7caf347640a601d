"""Sparse convolution execution over rulebooks, conv blocks and weight files."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, InputError, ShapeError
from .rulebook import KernelSpec, Rulebook, build_regular_rulebook, build_subm_rulebook, flops_of
from .sparse import FEAT_DTYPE, SparseTensor, canonicalize

WEIGHT_MAGIC = b"SPSW"


@dataclass(frozen=True, eq=False)
class ConvWeights:
    """Kernel ``(K**3, c_in, c_out)`` plus an optional per-channel affine."""

    kernel: np.ndarray
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(self.kernel, dtype=FEAT_DTYPE)
        if w.ndim != 3:
            raise ShapeError(f"kernel must be 3-D (K^3, c_in, c_out), got shape {w.shape}")
        k = round(w.shape[0] ** (1 / 3))
        if k**3 != w.shape[0]:
            raise ShapeError(f"first kernel dimension {w.shape[0]} is not a cube")
        object.__setattr__(self, "kernel", w)
        if (self.gamma is None) != (self.beta is None):
            raise ConfigError("gamma and beta must be given together")
        if self.gamma is not None:
            g = np.asarray(self.gamma, FEAT_DTYPE).reshape(-1)
            b = np.asarray(self.beta, FEAT_DTYPE).reshape(-1)
            if g.size != w.shape[2] or b.size != w.shape[2]:
                raise ShapeError(f"affine parameters need length c_out={w.shape[2]}")
            object.__setattr__(self, "gamma", g)
            object.__setattr__(self, "beta", b)

    @property
    def kernel_size(self) -> int:
        return round(self.kernel.shape[0] ** (1 / 3))

    @property
    def c_in(self) -> int:
        return self.kernel.shape[1]

    @property
    def c_out(self) -> int:
        return self.kernel.shape[2]

    @property
    def has_affine(self) -> bool:
        return self.gamma is not None


def init_weights(kernel_size: int, c_in: int, c_out: int, seed: int, affine: bool = True) -> ConvWeights:
    """Uniform in ``[-a, a]`` with ``a = sqrt(1 / (K**3 * c_in))``; affine starts at identity."""
    vol = kernel_size**3
    a = np.sqrt(1.0 / (vol * c_in))
    rng = np.random.default_rng(seed)
    w = rng.uniform(-a, a, size=(vol, c_in, c_out)).astype(FEAT_DTYPE)
    if not affine:
        return ConvWeights(w)
    return ConvWeights(w, np.ones(c_out, FEAT_DTYPE), np.zeros(c_out, FEAT_DTYPE))


def apply_rulebook(t: SparseTensor, rb: Rulebook, w: ConvWeights) -> SparseTensor:
    if t.num_channels != w.c_in:
        raise ShapeError(f"tensor has {t.num_channels} channels, weights expect {w.c_in}")
    if rb.n_in != len(t):
        raise ShapeError(f"rulebook built for {rb.n_in} inputs, tensor has {len(t)}")
    if len(rb.offsets) != w.kernel.shape[0]:
        raise ShapeError(f"rulebook has {len(rb.offsets)} offsets, kernel has {w.kernel.shape[0]}")
    feats = kernels.gather_gemm_scatter(
        t.features, w.kernel, rb.in_rows, rb.out_rows, rb.offset_ptr, rb.n_out
    )
    stride_level = tuple(a * b for a, b in zip(t.stride_level, rb.stride))
    return canonicalize(SparseTensor(rb.out_coords, feats, rb.out_shape, stride_level))


def subm_conv(t: SparseTensor, spec: KernelSpec, w: ConvWeights) -> SparseTensor:
    return apply_rulebook(t, build_subm_rulebook(t, spec), w)


def regular_conv(t: SparseTensor, spec: KernelSpec, w: ConvWeights) -> SparseTensor:
    return apply_rulebook(t, build_regular_rulebook(t, spec), w)


def affine_relu(t: SparseTensor, w: ConvWeights) -> SparseTensor:
    """Frozen-statistics normalization followed by ReLU."""
    if not w.has_affine:
        raise ConfigError("block needs affine (gamma, beta) parameters")
    y = t.features * w.gamma + w.beta
    return t.replace(features=np.maximum(y, 0, dtype=FEAT_DTYPE))


def block_forward(t: SparseTensor, spec: KernelSpec, w: ConvWeights, regular: bool | None = None) -> SparseTensor:
    """Conv, affine, ReLU. Strided specs run a regular conv, others submanifold unless told otherwise."""
    if not w.has_affine:
        raise ConfigError("block needs affine (gamma, beta) parameters")
    if regular is None:
        regular = spec.is_strided
    conv = regular_conv if regular else subm_conv
    return affine_relu(conv(t, spec, w), w)


def block_flops(rb: Rulebook, w: ConvWeights) -> int:
    return flops_of(rb, w.c_in, w.c_out)


def write_weights(path, w: ConvWeights) -> None:
    """``SPSW`` + u32 K, c_in, c_out, then offset-major float32 kernel, then optional gamma, beta."""
    header = WEIGHT_MAGIC + struct.pack("<III", w.kernel_size, w.c_in, w.c_out)
    try:
        with open(os.fspath(path), "wb") as fh:
            fh.write(header)
            fh.write(w.kernel.astype("<f4").tobytes())
            if w.has_affine:
                fh.write(w.gamma.astype("<f4").tobytes())
                fh.write(w.beta.astype("<f4").tobytes())
    except OSError as exc:
        raise InputError(f"cannot write weights to {path}: {exc}") from exc


def read_weights(path) -> ConvWeights:
    try:
        with open(os.fspath(path), "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read weights from {path}: {exc}") from exc
    if len(blob) < 16 or blob[:4] != WEIGHT_MAGIC:
        raise InputError(f"{path}: not an SPSW weight file")
    k, c_in, c_out = struct.unpack("<III", blob[4:16])
    n_kernel = k**3 * c_in * c_out
    body = np.frombuffer(blob, dtype="<f4", offset=16)
    if body.size == n_kernel:
        return ConvWeights(body.reshape(k**3, c_in, c_out))
    if body.size == n_kernel + 2 * c_out:
        return ConvWeights(
            body[:n_kernel].reshape(k**3, c_in, c_out),
            body[n_kernel : n_kernel + c_out],
            body[n_kernel + c_out :],
        )
    raise InputError(f"{path}: payload of {body.size} floats does not match K={k}, c_in={c_in}, c_out={c_out}")
