"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--voxels 20000] [--repeat 5] [--format table|json|csv]

Three workloads, each timed on every available backend:

* ``rulebook``: submanifold plus stride-2 regular rulebook construction
  (coordinate hashing and neighbour probing),
* ``gemm``: gather, per-offset matrix multiply, scatter-add for one 32->32 layer,
* ``forward``: a full baseline backbone pass on a synthetic scene.

Outputs are checked to agree across backends before any timing is reported.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from spsconv import kernels
from spsconv.backbone import BackboneConfig, build_backbone
from spsconv.conv import init_weights
from spsconv.rulebook import KernelSpec, build_regular_rulebook, build_subm_rulebook
from spsconv.sparse import VoxelGridSpec, voxelize


def make_scene(n_voxels: int, seed: int):
    rng = np.random.default_rng(seed)
    shape = (256, 256, 16)
    # ground band plus clutter, roughly LiDAR-like occupancy
    band = rng.choice(shape[0] * shape[1] * 2, size=n_voxels, replace=False)
    xyz = np.column_stack([band % shape[0], (band // shape[0]) % shape[1], band // (shape[0] * shape[1])])
    pts = np.column_stack([xyz + 0.5, rng.uniform(0, 1, n_voxels)])
    return voxelize(pts, VoxelGridSpec((0, 0, 0), (1, 1, 1), shape))


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(t, channels: int):
    spec = KernelSpec(3)
    down = KernelSpec(3, 2)
    feats = np.random.default_rng(1).standard_normal((len(t), channels)).astype(np.float32)
    wide = t.replace(features=feats)
    w = init_weights(3, channels, channels, seed=2)
    rb = build_subm_rulebook(t, spec)
    bb = build_backbone(BackboneConfig())

    def rulebook():
        fresh = t.replace()  # drop the cached index so hashing is timed too
        return build_subm_rulebook(fresh, spec).num_pairs + build_regular_rulebook(fresh, down).num_pairs

    def gemm():
        return kernels.gather_gemm_scatter(wide.features, w.kernel, rb.in_rows, rb.out_rows, rb.offset_ptr, rb.n_out)

    def forward():
        return bb.forward(t)[0].features

    return {"rulebook": rulebook, "gemm": gemm, "forward": forward}


def run(n_voxels: int, repeat: int, channels: int, seed: int) -> list[dict]:
    t = make_scene(n_voxels, seed)
    backends = sorted(kernels.BACKENDS)
    prev = kernels.BACKEND
    rows, results = [], {}
    try:
        for name in backends:
            kernels.use_backend(name)
            for wl, fn in workloads(t, channels).items():
                results[(name, wl)] = fn()
                rows.append({"backend": name, "workload": wl, "voxels": len(t), "seconds": best_of(fn, repeat)})
    finally:
        kernels.use_backend(prev)
    for wl in ("rulebook", "gemm", "forward"):
        ref = results[(backends[0], wl)]
        for name in backends[1:]:
            got = results[(name, wl)]
            if not np.allclose(got, ref, rtol=1e-5, atol=1e-6):
                raise SystemExit(f"backend {name} disagrees with {backends[0]} on {wl}")
    base = {r["workload"]: r["seconds"] for r in rows if r["backend"] == "python"}
    for r in rows:
        r["speedup_vs_python"] = base[r["workload"]] / r["seconds"] if r["workload"] in base else None
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--voxels", type=int, default=20000)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--format", choices=("table", "json", "csv"), default="table")
    args = ap.parse_args(argv)

    if len(kernels.BACKENDS) < 2:
        print("note: compiled backend not built; timing the fallback only", file=sys.stderr)
    rows = run(args.voxels, args.repeat, args.channels, args.seed)

    if args.format == "json":
        json.dump(rows, sys.stdout, indent=2)
        sys.stdout.write("\n")
    elif args.format == "csv":
        writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    else:
        print(f"{'workload':<10} {'backend':<8} {'voxels':>8} {'best s':>10} {'speedup':>8}")
        for r in rows:
            sp = f"{r['speedup_vs_python']:.2f}x" if r["speedup_vs_python"] else "-"
            print(f"{r['workload']:<10} {r['backend']:<8} {r['voxels']:>8} {r['seconds']:>10.4f} {sp:>8}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
