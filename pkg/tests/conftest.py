import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.core.grid import FlowField  # noqa: E402
from src.generators import synthetic  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full coarse-to-fine runs on 64x64 synthetic pairs")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def translate_seq():
    return synthetic.translate(64, 64, shift=(1.25, 0.75), seed=0)


@pytest.fixture(scope="session")
def two_region_seq():
    return synthetic.two_region(64, 64, seed=0)


@pytest.fixture(scope="session")
def brightness_seq():
    return synthetic.brightness(64, 64, shift=(1.25, 0.75), offset=0.1, seed=0)


def random_flow(rng, h=8, w=8, scale=1.0) -> FlowField:
    return FlowField(scale * rng.standard_normal((h, w)), scale * rng.standard_normal((h, w)))


def dense_matrix(op, h, w):
    """Columns are op applied to the unit grids, flattened row-major."""
    n = h * w
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        cols.append(op(e.reshape(h, w)).ravel())
    return np.stack(cols, axis=1)
