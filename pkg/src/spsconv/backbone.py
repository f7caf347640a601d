"""Stem plus four stages of sparse conv blocks, in baseline or pruned form."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .conv import ConvWeights, affine_relu, apply_rulebook, init_weights
from .errors import ConfigError, ShapeError
from .pruning import SelectionStrategy, spss_forward, sprs_forward
from .rulebook import KernelSpec, Rulebook, build_regular_rulebook, build_subm_rulebook, flops_of
from .sparse import SparseTensor, canonicalize

MODES = ("baseline", "pruned")


def _ratios(name, values, n):
    vals = tuple(float(v) for v in values)
    if len(vals) != n:
        raise ConfigError(f"{name} needs {n} values, got {len(vals)}")
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise ConfigError(f"{name} values must lie in [0, 1], got {vals}")
    return vals


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 1
    stem_channels: int = 16
    stage_channels: tuple[int, ...] = (16, 32, 64, 128)
    stage_strides: tuple[int, ...] = (1, 2, 2, 2)
    subm_ratios: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    down_ratios: tuple[float, ...] = (0.0, 0.0, 0.0)
    kernel_size: int = 3
    mode: str = "baseline"
    strategy: str = "magnitude"
    seed: int = 0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("stage_channels", tuple(int(c) for c in self.stage_channels))
        set_("stage_strides", tuple(int(s) for s in self.stage_strides))
        if len(self.stage_channels) != 4 or len(self.stage_strides) != 4:
            raise ConfigError("backbone has exactly 4 stages (stage_channels and stage_strides need 4 values)")
        if min(self.in_channels, self.stem_channels, *self.stage_channels) < 1:
            raise ConfigError("channel counts must be >= 1")
        if min(self.stage_strides) < 1:
            raise ConfigError("stage strides must be >= 1")
        set_("subm_ratios", _ratios("subm_ratios", self.subm_ratios, 4))
        set_("down_ratios", _ratios("down_ratios", self.down_ratios, 3))
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed {self.seed} is not an unsigned 64-bit value")
        KernelSpec(self.kernel_size)
        self.selection()

    def selection(self) -> SelectionStrategy:
        return SelectionStrategy.parse(self.strategy, seed=int(self.seed))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Block:
    name: str
    stage: int
    kind: str  # subm | regular | spss | sprs
    spec: KernelSpec
    weights: ConvWeights
    ratio: float = 0.0
    strategy: SelectionStrategy | None = None

    def run(self, t: SparseTensor) -> tuple[SparseTensor, Rulebook, object]:
        if self.kind == "subm":
            rb = build_subm_rulebook(t, self.spec)
            y, part = apply_rulebook(t, rb, self.weights), None
        elif self.kind == "regular":
            rb = build_regular_rulebook(t, self.spec)
            y, part = apply_rulebook(t, rb, self.weights), None
        else:
            fwd = spss_forward if self.kind == "spss" else sprs_forward
            res = fwd(t, self.spec, self.weights, self.ratio, self.strategy)
            y, rb, part = res.output, res.rulebook, res.partition
        return affine_relu(y, self.weights), rb, part


@dataclass
class BlockStats:
    name: str
    kind: str
    n_in: int
    n_out: int
    pairs: int
    flops: int
    positions_convolved: int
    positions_skipped: int


@dataclass
class StageStats:
    name: str
    active_voxel_count: int = 0
    conv_flops: int = 0
    positions_convolved: int = 0
    positions_skipped: int = 0
    stride_level: tuple[int, int, int] = (1, 1, 1)
    foreground_count: int | None = None
    blocks: list[BlockStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stride_level"] = list(self.stride_level)
        return d


def _block_seed(seed: int, idx: int) -> int:
    return int(np.random.SeedSequence([int(seed), idx]).generate_state(1, np.uint64)[0])


class Backbone:
    def __init__(self, cfg: BackboneConfig, blocks: list[Block]):
        self.cfg = cfg
        self.blocks = blocks

    @property
    def num_pruned_ops(self) -> int:
        return sum(b.kind in ("spss", "sprs") for b in self.blocks)

    def forward(self, t: SparseTensor, labels=None) -> tuple[SparseTensor, list[StageStats]]:
        """Run every block; stats are recorded per stage (stem first).

        ``labels`` (bool per input row) is optionally carried along: an output
        voxel is foreground when any input it gathers from was.
        """
        if t.num_channels != self.cfg.in_channels:
            raise ShapeError(f"input has {t.num_channels} channels, backbone expects {self.cfg.in_channels}")
        t = canonicalize(t)
        fg = None if labels is None else np.asarray(labels, bool).copy()
        if fg is not None and fg.shape != (len(t),):
            raise ShapeError(f"labels length {fg.shape} does not match {len(t)} voxels")
        names = ["stem", "stage1", "stage2", "stage3", "stage4"]
        stats = [StageStats(n) for n in names]
        for blk in self.blocks:
            n_in = len(t)
            t, rb, part = blk.run(t)
            if fg is not None and rb.mode == "regular":
                out_fg = np.zeros(rb.n_out, bool)
                out_fg[rb.out_rows[fg[rb.in_rows]]] = True
                fg = out_fg
            flops = flops_of(rb, blk.weights.c_in, blk.weights.c_out)
            if rb.mode == "submanifold":
                skipped = len(part.nim) if part is not None else 0
                convolved = n_in - skipped
            else:
                convolved, skipped = len(t), 0
            st = stats[blk.stage]
            st.blocks.append(BlockStats(blk.name, blk.kind, n_in, len(t), rb.num_pairs, flops, convolved, skipped))
            st.conv_flops += flops
            if rb.mode == "submanifold":
                st.positions_convolved, st.positions_skipped = convolved, skipped
            st.active_voxel_count = len(t)
            st.stride_level = t.stride_level
            if fg is not None:
                st.foreground_count = int(fg.sum())
        return t, stats


def build_backbone(cfg: BackboneConfig) -> Backbone:
    """Stem block, then per stage one downsampling block and two submanifold blocks.

    A stage with stride 1 has nothing to downsample, so its leading block is
    submanifold rather than a dilating stride-1 regular conv. In pruned mode,
    stage submanifold blocks become SPSS with that stage's ratio, and strided
    downsampling blocks of stages 2-4 become SPRS with ``down_ratios[stage - 2]``.
    The stem and the stage 1 leading block are never pruned.
    """
    pruned = cfg.mode == "pruned"
    strategy = cfg.selection()
    k = cfg.kernel_size
    blocks: list[Block] = []

    def add(name, stage, kind, spec, c_in, c_out, ratio=0.0):
        idx = len(blocks)
        w = init_weights(k, c_in, c_out, _block_seed(cfg.seed, idx))
        blocks.append(Block(name, stage, kind, spec, w, ratio, strategy.derive(idx)))

    add("stem.subm", 0, "subm", KernelSpec(k), cfg.in_channels, cfg.stem_channels)
    c_prev = cfg.stem_channels
    for i, (c, s) in enumerate(zip(cfg.stage_channels, cfg.stage_strides), start=1):
        spec = KernelSpec(k, s)
        if pruned and i >= 2 and s > 1:
            add(f"stage{i}.down", i, "sprs", spec, c_prev, c, cfg.down_ratios[i - 2])
        elif s == 1:
            add(f"stage{i}.down", i, "subm", spec, c_prev, c)
        else:
            add(f"stage{i}.down", i, "regular", spec, c_prev, c)
        for j in (1, 2):
            if pruned:
                add(f"stage{i}.subm{j}", i, "spss", KernelSpec(k), c, c, cfg.subm_ratios[i - 1])
            else:
                add(f"stage{i}.subm{j}", i, "subm", KernelSpec(k), c, c)
        c_prev = c
    return Backbone(cfg, blocks)


def forward(bb: Backbone, t: SparseTensor, labels=None):
    return bb.forward(t, labels)
