"""Acceptance criteria, one test each, each recording a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance criteria"
section of the summary.
"""
import itertools
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import random_tensor, tensor
from spsconv import harness, kernels
from spsconv.cli import main
from spsconv.config import load_config
from spsconv.conv import ConvWeights, init_weights, regular_conv, subm_conv
from spsconv.oracle import dense_conv3d, densify
from spsconv.pruning import (
    Partition,
    SelectionStrategy,
    magnitude_map,
    partition,
    reweight,
    spss_forward,
    sprs_conv,
    sprs_forward,
    sprs_output_positions,
)
from spsconv.rulebook import KernelSpec, build_regular_rulebook, flops_of
from spsconv.scene import generate_scene
from spsconv.sparse import VoxelGridSpec, voxelize, voxelize_points

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SCENE_CFG = CONFIGS / "scene_5pct.cfg"
RUN_CFG = CONFIGS / "nuscenes_ratios.cfg"


@pytest.fixture(scope="module")
def scene():
    """The 5%-foreground synthetic scene, voxelized, with per-voxel labels."""
    cfg = load_config(SCENE_CFG)
    points, labels = generate_scene(cfg.scene)
    t, rows = voxelize_points(points, cfg.grid)
    return t, harness.voxel_labels(rows, labels, len(t))


def rel_err(got, ref):
    ref = np.asarray(ref, np.float64)
    scale = np.abs(ref).max()
    return float(np.abs(np.asarray(got, np.float64) - ref).max() / scale) if scale > 0 else float(np.abs(got).max())


@pytest.mark.parametrize("backend_name", sorted(kernels.BACKENDS))
def test_c1_oracle_equivalence(criterion, backend_name):
    prev = kernels.BACKEND
    kernels.use_backend(backend_name)
    try:
        rng = np.random.default_rng(2024)
        worst = 0.0
        start = time.perf_counter()
        for i in range(50):
            c = (1, 4)[i % 2]
            t = random_tensor(rng, shape=(8, 8, 8), density=0.5, channels=c)
            w = init_weights(3, c, c, seed=i, affine=False)
            vol = densify(t)
            ref1 = dense_conv3d(vol, w.kernel, 1)
            sub = subm_conv(t, KernelSpec(3), w)
            b, x, y, z = sub.coords.T
            worst = max(worst, rel_err(sub.features, ref1[b, :, x, y, z]))
            for s in (1, 2):
                reg = regular_conv(t, KernelSpec(3, s), w)
                ref = ref1 if s == 1 else dense_conv3d(vol, w.kernel, s)
                worst = max(worst, rel_err(densify(reg, 1), ref))
        elapsed = time.perf_counter() - start
    finally:
        kernels.use_backend(prev)
    ok = worst <= 1e-4 and elapsed < 5.0
    criterion(1, ok, f"[{backend_name}] max rel err {worst:.2e} (<= 1e-4), {elapsed:.2f}s for 50 tensors (< 5s)")
    assert ok


def test_c2_limit_identities(criterion):
    rng = np.random.default_rng(7)
    spss1 = spss0 = sprs0_pos = True
    sprs0_err = 0.0
    for i in range(20):
        c = (1, 4)[i % 2]
        t = random_tensor(rng, shape=(8, 8, 8), density=0.4, channels=c, scale=2.0)
        w = init_weights(3, c, c, seed=i)
        xt = reweight(t)
        spss1 &= spss_forward(t, KernelSpec(3), w, 1.0).output.features.tobytes() == xt.tobytes()
        want0 = subm_conv(t.replace(features=xt), KernelSpec(3), w).features
        spss0 &= spss_forward(t, KernelSpec(3), w, 0.0).output.features.tobytes() == want0.tobytes()
        for s in (1, 2):
            a = sprs_conv(t, KernelSpec(3, s), w, 0.0)
            b = regular_conv(t, KernelSpec(3, s), w)
            sprs0_pos &= np.array_equal(a.coords, b.coords)
            if sprs0_pos:
                sprs0_err = max(sprs0_err, rel_err(a.features, b.features))
    ok = spss1 and spss0 and sprs0_pos and sprs0_err <= 1e-5
    criterion(2, ok, f"SPSS r=1 bitwise {spss1}, SPSS r=0 bitwise {spss0}, "
                     f"SPRS r=0 positions {sprs0_pos}, features rel err {sprs0_err:.1e} (<= 1e-5)")
    assert ok


def test_c3_sprs_set_algebra(criterion):
    rng = np.random.default_rng(99)
    ratios = (0.0, 0.25, 0.5, 0.75, 1.0)
    subset_fail = nest_fail = 0
    for i in range(100):
        t = random_tensor(rng, shape=(10, 10, 10), density=float(rng.uniform(0.05, 0.5)), channels=4)
        spec = KernelSpec(3, 2)
        full = {tuple(c) for c in build_regular_rulebook(t, spec).out_coords.tolist()}
        w = init_weights(3, 4, 4, seed=i)
        prev = full
        for r in ratios:
            cur = {tuple(c) for c in sprs_forward(t, spec, w, r).output.coords.tolist()}
            subset_fail += not cur <= full
            nest_fail += not cur <= prev
            prev = cur
    ok = subset_fail == 0 and nest_fail == 0
    criterion(3, ok, f"100 tensors x 5 ratios: subset violations {subset_fail}, nesting violations {nest_fail}")
    assert ok


def test_c4_sprs_micro_cases(criterion):
    spec = KernelSpec(3, 2)

    def outputs(coord, important):
        im = np.array([0] if important else [], np.int64)
        nim = np.array([] if important else [0], np.int64)
        return sprs_output_positions(Partition(im, nim, 0.0), [(0, *coord)], spec, (8, 8, 8))

    a = outputs((1, 1, 1), True)
    b = outputs((1, 1, 1), False)
    c = outputs((2, 2, 2), False)
    ok_a = {tuple(x[1:]) for x in a.tolist()} == set(itertools.product((0, 1), repeat=3)) and len(a) == 8
    ok_b = len(b) == 0
    ok_c = c.tolist() == [[0, 1, 1, 1]]
    feats = sprs_conv(tensor([(1, 1, 1)], [1.0]), spec, ConvWeights(np.ones((27, 1, 1))), 0.0).features
    ok_f = feats.shape == (8, 1) and (feats == 1.0).all()
    ok = ok_a and ok_b and ok_c and ok_f
    criterion(4, ok, f"important (1,1,1) -> {len(a)} outputs, unimportant (1,1,1) -> {len(b)}, "
                     f"unimportant (2,2,2) -> {c[:, 1:].tolist()}, all-ones features {ok_f}")
    assert ok


def uniform_scene(rng, shape, n, channels):
    """n distinct cells drawn uniformly from the grid, i.i.d. normal features."""
    sx, sy, sz = shape
    cells = rng.choice(sx * sy * sz, size=n, replace=False)
    xyz = np.column_stack([cells % sx, (cells // sx) % sy, cells // (sx * sy)])
    pts = np.column_stack([xyz + 0.5, rng.standard_normal((n, channels))])
    return voxelize(pts, VoxelGridSpec((0, 0, 0), (1, 1, 1), shape))


def test_c5_flop_proportionality(criterion):
    rng = np.random.default_rng(5)
    ratios = (0.1, 0.3, 0.5, 0.7, 0.9)
    worst = 0.0
    decreasing = True
    for shape, n in (((40, 40, 10), 2000), ((40, 40, 10), 6000), ((64, 64, 16), 4000)):
        t = uniform_scene(rng, shape, n, 16)
        w = init_weights(3, 16, 16, seed=n)
        flops = [flops_of(spss_forward(t, KernelSpec(3), w, r).rulebook, 16, 16) for r in (0.0, *ratios)]
        f0 = flops[0]
        worst = max(worst, max(abs(f / (f0 * (1 - r)) - 1) for f, r in zip(flops[1:], ratios)))
        decreasing &= all(a > b for a, b in zip(flops, flops[1:]))

    # informational: the same measurement through the composed backbone
    cfg = load_config(RUN_CFG).backbone
    t = uniform_scene(rng, (40, 40, 10), 4000, 1)
    rows = harness.sweep(cfg, t, [0.0, 0.9])
    composed = rows[1]["spss_subm_flops"] / (0.1 * rows[0]["spss_subm_flops"])

    ok = worst <= 0.10 and decreasing
    criterion(5, ok, f"SPSS layer FLOPs vs (1-r) x ratio-0 FLOPs: max deviation {worst:.1%} (<= 10%), "
                     f"strictly decreasing {decreasing}; [info] composed backbone at r=0.9: {composed:.3f}x")
    assert ok


@pytest.fixture(scope="module")
def baseline_stats(scene):
    t, _ = scene
    return harness.run_variant(load_config(RUN_CFG).backbone, t)


def test_c6_backbone_reduction(criterion, scene, baseline_stats):
    t, _ = scene
    cfg = load_config(RUN_CFG).backbone
    fb = harness.total_flops(baseline_stats)
    fracs = {}
    for r in (0.3, 0.5):
        pruned = harness.run_variant(replace(cfg, mode="pruned", subm_ratios=(r,) * 4, down_ratios=(0.5,) * 3), t)
        fracs[r] = harness.total_flops(pruned) / fb
    ok = all(f <= 0.60 for f in fracs.values())
    detail = ", ".join(f"subm {r}: {f:.1%} of baseline" for r, f in fracs.items())
    criterion(6, ok, f"{len(t)} voxels; {detail} (<= 60%)")
    assert ok


def test_c7_stage2_suppression(criterion, scene, baseline_stats):
    t, _ = scene
    cfg = load_config(RUN_CFG).backbone
    pruned = harness.run_variant(replace(cfg, mode="pruned", subm_ratios=(0.0,) * 4, down_ratios=(0.5,) * 3), t)
    frac = pruned[2].active_voxel_count / baseline_stats[2].active_voxel_count
    ok = frac <= 0.70
    criterion(7, ok, f"stage2 voxels {pruned[2].active_voxel_count} vs baseline "
                     f"{baseline_stats[2].active_voxel_count}: {frac:.1%} (<= 70%)")
    assert ok


def test_c8_foreground_ratio(criterion, tmp_path, capsys):
    pts = tmp_path / "scene.bin"
    assert main(["synth", "--config", str(SCENE_CFG), "--out", str(pts)]) == 0
    out = tmp_path / "stats.json"
    code = main(["stats", "--config", str(RUN_CFG), "--input", str(pts),
                 "--labels", str(tmp_path / "scene.labels"), "--out", str(out)])
    capsys.readouterr()
    frac = json.loads(out.read_text())["input"]["foreground_fraction"] if code == 0 else float("nan")
    ok = abs(frac - 0.05) <= 0.005
    criterion(8, ok, f"input-stage foreground fraction {frac:.4f} (0.05 +/- 0.005)")
    assert ok


def test_c9_strategy_retention(criterion, scene):
    t, fg = scene
    scores = magnitude_map(t.features)
    n_fg = int(fg.sum())

    def kept(strategy):
        return int(fg[partition(scores, 0.5, strategy).im].sum()) / n_fg

    mag = kept(SelectionStrategy("magnitude"))
    inv = kept(SelectionStrategy("inverse"))
    rnd = [kept(SelectionStrategy("random", seed)) for seed in range(20)]
    ok = mag >= 0.95 and inv <= 0.05 and all(abs(r - 0.5) <= 0.10 for r in rnd)
    criterion(9, ok, f"{n_fg} foreground voxels; magnitude {mag:.1%} (>= 95%), inverse {inv:.1%} (<= 5%), "
                     f"random over 20 seeds {min(rnd):.1%}..{max(rnd):.1%} (50% +/- 10%)")
    assert ok


def test_c10_cli_determinism(criterion, tmp_path, capsys):
    d = tmp_path / "work"
    d.mkdir()

    def invoke():
        # identical command lines both times, so any difference is nondeterminism
        pts = d / "scene.bin"
        main(["synth", "--config", str(SCENE_CFG), "--out", str(pts)])
        common = ["--config", str(RUN_CFG), "--input", str(pts)]
        main(["voxelize", *common, "--out", str(d / "voxels.txt")])
        main(["run", *common, "--out", str(d / "report.json")])
        main(["sweep", *common, "--ratios", "0.3,0.7", "--out", str(d / "sweep.csv")])
        main(["stats", *common, "--labels", str(d / "scene.labels"), "--out", str(d / "stats.json")])
        capsys.readouterr()
        snapshot = {p.name: p.read_bytes() for p in sorted(d.iterdir())}
        for p in d.iterdir():
            p.unlink()
        return snapshot

    a, b = invoke(), invoke()
    expected = {"scene.bin", "scene.labels", "voxels.txt", "report.json", "sweep.csv", "stats.json"}
    same = [name for name in sorted(a) if a[name] == b.get(name)]
    ok = set(a) == set(b) == expected and len(same) == len(expected)
    criterion(10, ok, f"{len(same)}/{len(expected)} output files byte-identical across two runs "
                      "(synth, voxelize, run, sweep, stats)")
    assert ok
