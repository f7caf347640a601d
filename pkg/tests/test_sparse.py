import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tensor
from spsconv.errors import ConfigError, ConsistencyError, InputError
from spsconv.sparse import (
    SparseTensor,
    VoxelGridSpec,
    build_index,
    canonicalize,
    read_points,
    voxelize,
    voxelize_points,
    write_points,
)

GRID = VoxelGridSpec((0, 0, 0), (1, 1, 1), (4, 4, 4))


def test_voxelize_single_point():
    t = voxelize(np.array([[0.5, 0.5, 0.5, 1.0]]), GRID)
    assert len(t) == 1
    np.testing.assert_array_equal(t.coords, [[0, 0, 0, 0]])
    np.testing.assert_array_equal(t.features, [[1.0]])
    assert t.stride_level == (1, 1, 1)


def test_voxelize_mean_pools_shared_cell():
    t = voxelize(np.array([[0.2, 0.2, 0.2, 1.0], [0.7, 0.9, 0.1, 3.0]]), GRID)
    assert len(t) == 1
    np.testing.assert_array_equal(t.features, [[2.0]])


@pytest.mark.parametrize("p", [[4.0, 0.5, 0.5], [-0.01, 0.5, 0.5], [0.5, 0.5, 9.0]])
def test_voxelize_drops_out_of_range(p):
    assert len(voxelize(np.array([[*p, 1.0]]), GRID)) == 0


def test_voxelize_upper_boundary_dropped():
    # floor((4.0 - 0) / 1) = 4 is outside [0, 4)
    pts = np.array([[3.999, 0, 0, 1.0], [4.0, 0, 0, 1.0]])
    t, rows = voxelize_points(pts, GRID)
    assert len(t) == 1
    np.testing.assert_array_equal(rows, [0, -1])


@pytest.mark.parametrize(
    "kw",
    [
        dict(origin=(0, 0, 0), voxel_size=(0, 1, 1), shape=(4, 4, 4)),
        dict(origin=(0, 0, 0), voxel_size=(1, 1, 1), shape=(0, 4, 4)),
        dict(origin=(0, 0), voxel_size=(1, 1, 1), shape=(4, 4, 4)),
    ],
)
def test_grid_spec_rejects_bad_config(kw):
    with pytest.raises(ConfigError):
        VoxelGridSpec(**kw)


def test_voxelize_canonical_order_and_range(rng):
    spec = VoxelGridSpec((-1.0, -2.0, 0.0), (0.5, 0.25, 1.0), (6, 5, 3))
    pts = np.column_stack([rng.uniform(-2, 3, (400, 3)), rng.uniform(0, 1, (400, 2))])
    t = voxelize(pts, spec)
    assert t.is_canonical()
    assert (t.coords[:, 1:] >= 0).all()
    assert (t.coords[:, 1:] < np.array(spec.shape)).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200))
def test_mean_pool_conserves_feature_mass(seed, n):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-0.5, 4.5, (n, 3)), rng.uniform(-3, 3, (n, 2))])
    t, rows = voxelize_points(pts, GRID)
    counts = np.bincount(rows[rows >= 0], minlength=len(t))
    kept = pts[rows >= 0, 3:].sum(axis=0)
    pooled = (t.features.astype(np.float64) * counts[:, None]).sum(axis=0)
    np.testing.assert_allclose(pooled, kept, rtol=1e-5, atol=1e-5)


def test_canonicalize_swaps_and_permutes_features():
    t = SparseTensor([(0, 1, 0, 0), (0, 0, 0, 0)], [[5.0], [7.0]], (4, 4, 4))
    c = canonicalize(t)
    np.testing.assert_array_equal(c.coords, [[0, 0, 0, 0], [0, 1, 0, 0]])
    np.testing.assert_array_equal(c.features, [[7.0], [5.0]])


def test_canonical_order_is_b_z_y_x():
    coords = [(1, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0), (0, 1, 0, 0)]
    c = canonicalize(SparseTensor(coords, np.zeros((4, 1)), (2, 2, 2)))
    np.testing.assert_array_equal(c.coords, [(0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1), (1, 0, 0, 0)])


def test_canonicalize_idempotent(rng):
    t = random_tensor(rng, channels=3)
    assert canonicalize(t) is t
    assert canonicalize(canonicalize(t)) is t


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_canonicalize_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    flat = rng.choice(2 * 10 * 10 * 10, size=100, replace=False)
    coords = np.stack([flat // 1000, flat % 10, (flat // 10) % 10, (flat // 100) % 10], 1)
    t = SparseTensor(coords, rng.standard_normal((100, 2)), (10, 10, 10))
    perm = rng.permutation(100)
    s = SparseTensor(coords[perm], t.features[perm], (10, 10, 10))
    a, b = canonicalize(t), canonicalize(s)
    assert a.coords.tobytes() == b.coords.tobytes()
    assert a.features.tobytes() == b.features.tobytes()


def test_index_maps_rows(backend):
    t = SparseTensor([(0, 0, 0, 0), (0, 1, 0, 0)], [[1.0], [2.0]], (4, 4, 4))
    idx = build_index(t)
    assert len(idx) == 2
    assert idx.get((0, 0, 0, 0)) == 0
    assert idx.get((0, 1, 0, 0)) == 1
    assert idx.get((0, 2, 0, 0)) is None
    assert (0, 3, 3, 3) not in idx


def test_index_empty(backend):
    idx = build_index(SparseTensor.empty(1, (4, 4, 4)))
    assert len(idx) == 0
    assert idx.get((0, 0, 0, 0)) is None


def test_index_rejects_duplicates():
    t = SparseTensor([(0, 1, 1, 1), (0, 1, 1, 1)], [[1.0], [2.0]], (4, 4, 4))
    with pytest.raises(ConsistencyError):
        build_index(t)


def test_index_bijective_on_random_tensor(rng, backend):
    t = random_tensor(rng, shape=(12, 9, 7), density=0.3, batch=2)
    idx = build_index(t)
    np.testing.assert_array_equal(idx.lookup(t.coords), np.arange(len(t)))
    # every absent cell misses, including ones outside the bounding box
    probe = np.array([(0, -1, 0, 0), (2, 0, 0, 0), (0, 12, 0, 0)])
    np.testing.assert_array_equal(idx.lookup(probe), -1)


def test_tensor_is_read_only(rng):
    t = random_tensor(rng)
    with pytest.raises(ValueError):
        t.features[0, 0] = 1.0


@pytest.mark.parametrize("ext", [".txt", ".bin"])
def test_point_file_round_trip(tmp_path, ext, rng):
    pts = np.column_stack([rng.uniform(0, 10, (20, 3)), rng.uniform(0, 1, 20)]).astype(np.float32)
    path = tmp_path / f"pts{ext}"
    write_points(path, pts)
    back = read_points(path)
    np.testing.assert_allclose(back, pts, atol=1e-6)


def test_text_points_allow_many_features(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0 0 0 1 2 3\n1 1 1 4 5 6\n")
    assert read_points(path).shape == (2, 6)


@pytest.mark.parametrize(
    "name,content",
    [("p.xyz", b""), ("p.txt", b"1 2 3\n"), ("p.txt", b"0 0 0 1\n0 0 0\n"), ("p.bin", b"\x00" * 10)],
)
def test_point_file_errors(tmp_path, name, content):
    path = tmp_path / name
    path.write_bytes(content)
    with pytest.raises(InputError):
        read_points(path)


def test_missing_point_file(tmp_path):
    with pytest.raises(InputError):
        read_points(tmp_path / "nope.bin")
