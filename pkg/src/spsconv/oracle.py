"""Dense 3D convolution reference used to check the sparse operators.

Deliberately shares nothing with the rulebook path: it pads a dense volume
and sums shifted slices tap by tap, in float64.
"""
import numpy as np

from .errors import DomainError, ShapeError
from .sparse import SparseTensor


def densify(t: SparseTensor, batch_size: int | None = None) -> np.ndarray:
    """Scatter features into a zero ``(B, C, Sx, Sy, Sz)`` float32 volume."""
    sx, sy, sz = t.spatial_shape
    b = t.batch_size if batch_size is None else batch_size
    b = max(b, 1)
    vol = np.zeros((b, t.num_channels, sx, sy, sz), np.float32)
    if len(t) == 0:
        return vol
    c = t.coords.astype(np.int64)
    hi = np.array([b, sx, sy, sz])
    if (c < 0).any() or (c >= hi).any():
        raise DomainError("coordinate outside the tensor's spatial shape")
    vol[c[:, 0], :, c[:, 1], c[:, 2], c[:, 3]] = t.features
    return vol


def sparsify(vol: np.ndarray, stride_level=(1, 1, 1)) -> SparseTensor:
    """Active sites are the cells with any nonzero channel."""
    vol = np.asarray(vol)
    nz = np.any(vol != 0, axis=1)
    b, x, y, z = np.nonzero(nz)
    coords = np.stack([b, x, y, z], axis=1)
    order = np.lexsort((x, y, z, b))
    coords = coords[order]
    feats = vol[coords[:, 0], :, coords[:, 1], coords[:, 2], coords[:, 3]]
    return SparseTensor(coords, feats, vol.shape[2:], stride_level)


def dense_conv3d(vol: np.ndarray, kernel: np.ndarray, stride=1) -> np.ndarray:
    """Zero-padded cross-correlation ``y[c] = sum_k w[k] x[c + k]``, no bias.

    ``kernel`` is ``(K**3, c_in, c_out)`` with taps ordered over (dx, dy, dz)
    lexicographically. Output extent is ``ceil(S / s)`` per axis.
    """
    vol = np.asarray(vol, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if vol.ndim != 5:
        raise ShapeError(f"volume must be (B, C, Sx, Sy, Sz), got {vol.shape}")
    ksize = round(kernel.shape[0] ** (1 / 3))
    if ksize**3 != kernel.shape[0] or ksize % 2 == 0:
        raise ShapeError(f"kernel leading dim {kernel.shape[0]} is not an odd cube")
    if kernel.shape[1] != vol.shape[1]:
        raise ShapeError(f"kernel expects {kernel.shape[1]} channels, volume has {vol.shape[1]}")
    s = (stride,) * 3 if np.isscalar(stride) else tuple(stride)
    r = ksize // 2
    bsz, _, sx, sy, sz = vol.shape
    padded = np.pad(vol, ((0, 0), (0, 0), (r, r), (r, r), (r, r)))
    full = np.zeros((bsz, kernel.shape[2], sx, sy, sz))
    tap = 0
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dz in range(-r, r + 1):
                window = padded[:, :, r + dx : r + dx + sx, r + dy : r + dy + sy, r + dz : r + dz + sz]
                full += np.einsum("bixyz,io->boxyz", window, kernel[tap])
                tap += 1
    return full[:, :, :: s[0], :: s[1], :: s[2]]
