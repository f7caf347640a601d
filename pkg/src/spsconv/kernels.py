"""Backend selection for the hot kernels.

The compiled Cython core is used when it was built; otherwise the numpy
fallback. Set ``SPSCONV_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

_requested = os.environ.get("SPSCONV_BACKEND", "").strip().lower()
if _requested and _requested not in BACKENDS:
    raise ImportError(f"SPSCONV_BACKEND={_requested!r} unavailable; have {sorted(BACKENDS)}")
BACKEND = _requested or ("cython" if _compiled is not None else "python")
_impl = BACKENDS[BACKEND]


def use_backend(name: str) -> None:
    """Switch the active backend for the whole process (tests and benchmarks)."""
    global BACKEND, _impl
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(BACKENDS)}")
    BACKEND, _impl = name, BACKENDS[name]


def build_table(keys):
    return (BACKEND, _impl.build_table(keys))


def probe(table, queries):
    # a table must be probed by the backend that built it
    name, inner = table
    return BACKENDS[name].probe(inner, queries)


def neighbor_lookup(table, lo, hi, centers, offsets):
    name, inner = table
    return BACKENDS[name].neighbor_lookup(inner, lo, hi, centers, offsets)


def gather_gemm_scatter(features, weights, in_rows, out_rows, offset_ptr, n_out):
    return _impl.gather_gemm_scatter(features, weights, in_rows, out_rows, offset_ptr, n_out)
