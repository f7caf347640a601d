"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module.
"""
import numpy as np


def build_table(keys):
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    order = np.argsort(keys, kind="stable")
    return keys[order], order


def probe(table, queries):
    sorted_keys, order = table
    queries = np.ascontiguousarray(queries, dtype=np.int64)
    out = np.full(queries.shape[0], -1, np.int64)
    if sorted_keys.size == 0 or queries.size == 0:
        return out
    pos = np.searchsorted(sorted_keys, queries)
    pos = np.minimum(pos, sorted_keys.size - 1)
    hit = (sorted_keys[pos] == queries) & (queries >= 0)
    out[hit] = order[pos[hit]]
    return out


def neighbor_lookup(table, lo, hi, centers, offsets):
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 4)
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, 3)
    lo = np.asarray(lo, np.int64)
    hi = np.asarray(hi, np.int64)
    ext = hi - lo + 1
    out = np.full((len(offsets), len(centers)), -1, np.int64)
    for k, off in enumerate(offsets):
        q = centers.copy()
        q[:, 1:] += off
        inside = np.all((q >= lo) & (q <= hi), axis=1)
        r = q[inside] - lo
        keys = ((r[:, 0] * ext[3] + r[:, 3]) * ext[2] + r[:, 2]) * ext[1] + r[:, 1]
        out[k, inside] = probe(table, keys)
    return out


def gather_gemm_scatter(features, weights, in_rows, out_rows, offset_ptr, n_out):
    features = np.ascontiguousarray(features, dtype=np.float32)
    weights = np.ascontiguousarray(weights, dtype=np.float32)
    out = np.zeros((n_out, weights.shape[2]), np.float32)
    for k in range(weights.shape[0]):
        lo, hi = offset_ptr[k], offset_ptr[k + 1]
        if lo == hi:
            continue
        # output rows are unique within one offset, so plain fancy-index += is safe
        o = out_rows[lo:hi]
        out[o] += features[in_rows[lo:hi]] @ weights[k]
    return out
