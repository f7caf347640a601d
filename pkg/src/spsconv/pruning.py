"""Magnitude-guided spatial sampling and the two pruned sparse convolutions.

``spss_conv`` convolves only the important sites of a submanifold layer and
passes the rest through re-weighted. ``sprs_conv`` lets only important sites
dilate during a regular (downsampling) convolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conv import ConvWeights, apply_rulebook
from .errors import ConfigError, DomainError, ShapeError
from .rulebook import KernelSpec, Rulebook, build_regular_rulebook, build_subm_rulebook, kernel_offsets, output_shape
from .sparse import FEAT_DTYPE, SparseTensor, canonicalize

STRATEGIES = ("magnitude", "random", "inverse")


@dataclass(frozen=True, eq=False)
class MagnitudeScores:
    g: np.ndarray
    m: np.ndarray

    def __len__(self) -> int:
        return self.g.shape[0]


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str = "magnitude"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ConfigError(f"unknown selection strategy {self.kind!r}; choose from {STRATEGIES}")
        if self.kind == "random":
            if self.seed is None:
                raise ConfigError("random strategy needs an explicit seed")
            if not 0 <= int(self.seed) < 2**64:
                raise ConfigError(f"seed {self.seed} is not an unsigned 64-bit value")

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "SelectionStrategy":
        """``magnitude``, ``inverse``, ``random`` or ``random:<seed>``."""
        kind, _, rest = text.strip().partition(":")
        if rest:
            try:
                seed = int(rest)
            except ValueError as exc:
                raise ConfigError(f"bad seed in strategy {text!r}") from exc
        return cls(kind, seed if kind == "random" else None)

    def derive(self, layer: int) -> "SelectionStrategy":
        """Independent per-layer stream for the random strategy."""
        if self.kind != "random":
            return self
        state = np.random.SeedSequence([int(self.seed), layer]).generate_state(2, np.uint32)
        return SelectionStrategy("random", int(state[0]) << 32 | int(state[1]))

    def __str__(self) -> str:
        return f"random:{self.seed}" if self.kind == "random" else self.kind


MAGNITUDE = SelectionStrategy("magnitude")


@dataclass(frozen=True, eq=False)
class Partition:
    im: np.ndarray
    nim: np.ndarray
    ratio: float


@dataclass(frozen=True, eq=False)
class PrunedResult:
    output: SparseTensor
    rulebook: Rulebook
    partition: Partition


def magnitude_map(features) -> MagnitudeScores:
    f = np.asarray(features, dtype=FEAT_DTYPE)
    if f.ndim != 2 or f.shape[1] < 1:
        raise ShapeError(f"magnitude map needs an N x C feature matrix with C >= 1, got {f.shape}")
    g = np.abs(f.astype(np.float64)).mean(axis=1)
    m = 1.0 / (1.0 + np.exp(-g))
    return MagnitudeScores(g, m)


def num_pruned(ratio: float, n: int) -> int:
    """``floor(ratio * n)``; rounding to 9 places first absorbs binary noise such as 0.29 * 100."""
    return math.floor(round(ratio * n, 9))


def _check_ratio(ratio: float) -> float:
    ratio = float(ratio)
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"pruning ratio must lie in [0, 1], got {ratio}")
    return ratio


def partition(scores: MagnitudeScores, ratio: float, strategy: SelectionStrategy = MAGNITUDE) -> Partition:
    """Split rows into important / unimportant sets.

    Ties in ``g`` go to the lower row index (canonical coordinate order).
    """
    ratio = _check_ratio(ratio)
    n = len(scores)
    n_im = n - num_pruned(ratio, n)
    if strategy.kind == "magnitude":
        order = np.argsort(-scores.g, kind="stable")
    elif strategy.kind == "inverse":
        order = np.argsort(scores.g, kind="stable")
    else:
        order = np.random.default_rng(int(strategy.seed)).permutation(n)
    keep = np.zeros(n, bool)
    keep[order[:n_im]] = True
    rows = np.arange(n, dtype=np.int64)
    return Partition(rows[keep], rows[~keep], ratio)


def reweight(t: SparseTensor, scores: MagnitudeScores | None = None) -> np.ndarray:
    """Features multiplied row-wise by their magnitude mask, in float32."""
    if scores is None:
        scores = magnitude_map(t.features)
    return t.features * scores.m.astype(FEAT_DTYPE)[:, None]


def spss_forward(t: SparseTensor, spec: KernelSpec, w: ConvWeights, ratio: float,
                 strategy: SelectionStrategy = MAGNITUDE) -> PrunedResult:
    """Spatially pruned submanifold conv, also returning the plan it executed."""
    ratio = _check_ratio(ratio)
    if w.c_in != w.c_out:
        raise ConfigError(f"pruned submanifold conv needs c_in == c_out, got {w.c_in} -> {w.c_out}")
    if spec.is_strided:
        raise ConfigError("pruned submanifold conv requires stride 1")
    t = canonicalize(t)
    scores = magnitude_map(t.features)
    part = partition(scores, ratio, strategy)
    xt = reweight(t, scores)
    rb = build_subm_rulebook(t, spec, active_out=part.im)
    y = apply_rulebook(t.replace(features=xt), rb, w)
    feats = np.array(y.features)
    feats[part.nim] = xt[part.nim]
    return PrunedResult(y.replace(features=feats), rb, part)


def spss_conv(t, spec, w, ratio, strategy: SelectionStrategy = MAGNITUDE) -> SparseTensor:
    return spss_forward(t, spec, w, ratio, strategy).output


def stride_mask(coords, stride) -> np.ndarray:
    """True where every spatial axis is divisible by its stride."""
    c = np.asarray(coords, dtype=np.int64)
    c = c.reshape(-1, c.shape[-1] if c.ndim > 1 else 3)
    spatial = c[:, -3:]
    if (spatial < 0).any():
        raise DomainError("stride mask is undefined for negative coordinates")
    s = np.broadcast_to(np.asarray(stride, np.int64), (3,))
    return (spatial % s).sum(axis=1) == 0


def dilate_positions(p_im, spec: KernelSpec, spatial_shape=None) -> np.ndarray:
    """Kernel-neighbourhood closure of ``p_im`` (input frame), canonical and unique.

    Negative coordinates are dropped; with ``spatial_shape`` the upper bound is
    ``s * ceil(shape / s)`` per axis, the last input index any output can reach.
    """
    pts = np.asarray(p_im, dtype=np.int64).reshape(-1, 4)
    if len(pts) == 0:
        return pts
    shift = np.zeros((spec.volume, 1, 4), np.int64)
    shift[:, 0, 1:] = kernel_offsets(spec)
    cand = np.concatenate([(pts[None] + shift).reshape(-1, 4), pts])
    ok = np.all(cand[:, 1:] >= 0, axis=1)
    if spatial_shape is not None:
        bound = np.asarray(output_shape(spatial_shape, spec.stride)) * np.asarray(spec.stride)
        ok &= np.all(cand[:, 1:] < bound, axis=1)
    cand = np.unique(cand[ok], axis=0)
    return cand[np.lexsort((cand[:, 1], cand[:, 2], cand[:, 3], cand[:, 0]))]


def sprs_output_positions(part: Partition, coords, spec: KernelSpec, spatial_shape=None) -> np.ndarray:
    """Output-frame sites: stride-surviving dilation of P_im plus stride-surviving P_nim."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 4)
    dil = dilate_positions(coords[part.im], spec, spatial_shape)
    nim = coords[part.nim]
    pos = np.concatenate([dil[stride_mask(dil, spec.stride)], nim[stride_mask(nim, spec.stride)]])
    pos[:, 1:] //= np.asarray(spec.stride, np.int64)
    if spatial_shape is not None:
        pos = pos[np.all(pos[:, 1:] < np.asarray(output_shape(spatial_shape, spec.stride)), axis=1)]
    if len(pos) == 0:
        return pos
    pos = np.unique(pos, axis=0)
    return pos[np.lexsort((pos[:, 1], pos[:, 2], pos[:, 3], pos[:, 0]))]


def sprs_forward(t: SparseTensor, spec: KernelSpec, w: ConvWeights, ratio: float,
                 strategy: SelectionStrategy = MAGNITUDE) -> PrunedResult:
    """Spatially pruned regular conv, also returning the plan it executed.

    Features are not mask re-weighted here; pruning is purely positional.
    """
    ratio = _check_ratio(ratio)
    t = canonicalize(t)
    part = partition(magnitude_map(t.features), ratio, strategy)
    allowed = sprs_output_positions(part, t.coords, spec, t.spatial_shape)
    rb = build_regular_rulebook(t, spec, allowed_out=allowed)
    return PrunedResult(apply_rulebook(t, rb, w), rb, part)


def sprs_conv(t, spec, w, ratio, strategy: SelectionStrategy = MAGNITUDE) -> SparseTensor:
    return sprs_forward(t, spec, w, ratio, strategy).output
