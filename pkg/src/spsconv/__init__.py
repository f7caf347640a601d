"""Sparse 3D convolution engine with magnitude-pruned submanifold and regular operators."""
from .errors import ConfigError, ConsistencyError, DomainError, InputError, ShapeError, SpsConvError
from .kernels import BACKEND
from .sparse import CoordIndex, SparseTensor, VoxelGridSpec, build_index, canonicalize, voxelize
from .rulebook import KernelSpec, Rulebook, build_regular_rulebook, build_subm_rulebook, flops_of, kernel_offsets
from .conv import ConvWeights, apply_rulebook, block_forward, init_weights, regular_conv, subm_conv
from .pruning import (
    MagnitudeScores,
    Partition,
    SelectionStrategy,
    dilate_positions,
    magnitude_map,
    partition,
    spss_conv,
    sprs_conv,
    sprs_output_positions,
    stride_mask,
)

__version__ = "0.1.0"
