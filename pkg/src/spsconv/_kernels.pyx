# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Open-addressing coordinate hash with a fused neighbour lookup, and a
gather / sgemm / scatter-add executor for rulebooks.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    # splitmix64 finalizer
    z = (z ^ (z >> 30)) * <uint64_t>0xbf58476d1ce4e5b9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94d049bb133111ebULL
    return z ^ (z >> 31)


cdef inline int64_t _find(const int64_t[::1] sk, const int64_t[::1] sv, uint64_t mask, int64_t key) noexcept nogil:
    cdef uint64_t h = _mix(<uint64_t>key) & mask
    while sk[h] != -1:
        if sk[h] == key:
            return sv[h]
        h = (h + 1) & mask
    return -1


def build_table(keys):
    cdef const int64_t[::1] k = np.ascontiguousarray(keys, dtype=np.int64)
    cdef Py_ssize_t n = k.shape[0]
    cdef Py_ssize_t cap = 16
    while cap < 2 * n:
        cap <<= 1
    slot_keys_arr = np.full(cap, -1, np.int64)
    slot_vals_arr = np.full(cap, -1, np.int64)
    cdef int64_t[::1] sk = slot_keys_arr
    cdef int64_t[::1] sv = slot_vals_arr
    cdef uint64_t mask = cap - 1
    cdef uint64_t h
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            h = _mix(<uint64_t>k[i]) & mask
            while sk[h] != -1 and sk[h] != k[i]:
                h = (h + 1) & mask
            if sk[h] == -1:
                sk[h] = k[i]
                sv[h] = i
    return slot_keys_arr, slot_vals_arr


def probe(table, queries):
    slot_keys_arr, slot_vals_arr = table
    cdef const int64_t[::1] sk = slot_keys_arr
    cdef const int64_t[::1] sv = slot_vals_arr
    cdef const int64_t[::1] q = np.ascontiguousarray(queries, dtype=np.int64)
    cdef Py_ssize_t m = q.shape[0]
    out_arr = np.full(m, -1, np.int64)
    cdef int64_t[::1] out = out_arr
    cdef uint64_t mask = sk.shape[0] - 1
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            if q[i] >= 0:
                out[i] = _find(sk, sv, mask, q[i])
    return out_arr


def neighbor_lookup(table, lo, hi, centers, offsets):
    """Row of ``center + offset`` for every (offset, center), -1 when absent.

    Keys use the same bounding-box radix as ``CoordIndex.encode``.
    """
    slot_keys_arr, slot_vals_arr = table
    cdef const int64_t[::1] sk = slot_keys_arr
    cdef const int64_t[::1] sv = slot_vals_arr
    cdef const int64_t[:, ::1] c = np.ascontiguousarray(centers, dtype=np.int64).reshape(-1, 4)
    cdef const int64_t[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 3)
    cdef const int64_t[::1] l = np.ascontiguousarray(lo, dtype=np.int64)
    cdef const int64_t[::1] u = np.ascontiguousarray(hi, dtype=np.int64)
    cdef Py_ssize_t n_k = off.shape[0], m = c.shape[0]
    out_arr = np.full((n_k, m), -1, np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cdef uint64_t mask = sk.shape[0] - 1
    cdef int64_t e1 = u[1] - l[1] + 1, e2 = u[2] - l[2] + 1, e3 = u[3] - l[3] + 1
    cdef int64_t b, x, y, z
    cdef Py_ssize_t k, i
    with nogil:
        for k in range(n_k):
            for i in range(m):
                b = c[i, 0]
                x = c[i, 1] + off[k, 0]
                y = c[i, 2] + off[k, 1]
                z = c[i, 3] + off[k, 2]
                if (b < l[0] or b > u[0] or x < l[1] or x > u[1]
                        or y < l[2] or y > u[2] or z < l[3] or z > u[3]):
                    continue
                out[k, i] = _find(sk, sv, mask,
                                  (((b - l[0]) * e3 + (z - l[3])) * e2 + (y - l[2])) * e1 + (x - l[1]))
    return out_arr


def gather_gemm_scatter(features, weights, in_rows, out_rows, offset_ptr, Py_ssize_t n_out):
    cdef const float[:, ::1] x = np.ascontiguousarray(features, dtype=np.float32)
    cdef const float[:, :, ::1] w = np.ascontiguousarray(weights, dtype=np.float32)
    cdef const int64_t[::1] ir = np.ascontiguousarray(in_rows, dtype=np.int64)
    cdef const int64_t[::1] orow = np.ascontiguousarray(out_rows, dtype=np.int64)
    cdef const int64_t[::1] ptr = np.ascontiguousarray(offset_ptr, dtype=np.int64)
    cdef int n_k = w.shape[0], c_in = w.shape[1], c_out = w.shape[2]
    out_arr = np.zeros((n_out, c_out), np.float32)
    cdef float[:, ::1] out = out_arr
    if n_out == 0 or ir.shape[0] == 0:
        return out_arr

    cdef Py_ssize_t max_pairs = 0, k, p, j, ci, co
    for k in range(n_k):
        max_pairs = max(max_pairs, ptr[k + 1] - ptr[k])
    gathered_arr = np.empty((max_pairs, c_in), np.float32)
    prod_arr = np.empty((max_pairs, c_out), np.float32)
    cdef float[:, ::1] g = gathered_arr
    cdef float[:, ::1] prod = prod_arr
    cdef char trans = b'N'
    cdef float one = 1.0, zero = 0.0
    cdef int n_p
    with nogil:
        # offsets in canonical order; fixed order keeps accumulation bit-reproducible
        for k in range(n_k):
            n_p = <int>(ptr[k + 1] - ptr[k])
            if n_p == 0:
                continue
            for j in range(n_p):
                p = ptr[k] + j
                for ci in range(c_in):
                    g[j, ci] = x[ir[p], ci]
            # row-major prod = g @ w[k] is column-major prod^T = w[k]^T g^T
            sgemm(&trans, &trans, &c_out, &n_p, &c_in, &one,
                  <float*>&w[k, 0, 0], &c_out, &g[0, 0], &c_in, &zero, &prod[0, 0], &c_out)
            for j in range(n_p):
                p = ptr[k] + j
                for co in range(c_out):
                    out[orow[p], co] += prod[j, co]
    return out_arr
