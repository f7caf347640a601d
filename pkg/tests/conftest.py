import numpy as np
import pytest

from spsconv import kernels
from spsconv.sparse import SparseTensor, canonicalize


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    """Run a test once per available kernel backend."""
    prev = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


def random_tensor(rng, shape=(8, 8, 8), density=0.5, channels=1, batch=1, scale=1.0):
    """Canonical tensor with each cell active independently with prob ``density``."""
    sx, sy, sz = shape
    cells = np.stack(
        np.meshgrid(np.arange(batch), np.arange(sx), np.arange(sy), np.arange(sz), indexing="ij"), -1
    ).reshape(-1, 4)
    cells = cells[rng.random(len(cells)) < density]
    feats = (rng.standard_normal((len(cells), channels)) * scale).astype(np.float32)
    return canonicalize(SparseTensor(cells, feats, shape))


def tensor(coords_xyz, feats, shape=(8, 8, 8)):
    coords = [(0, *c) for c in coords_xyz]
    return canonicalize(SparseTensor(coords, np.asarray(feats, np.float32).reshape(len(coords), -1), shape))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion; printed in the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
