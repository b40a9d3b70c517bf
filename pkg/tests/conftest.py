import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from innospace.core import BinaryMatrix, LayerId, RawMatrix, TimeWindow  # noqa: E402


def random_binary(rng, n_rows, n_cols, density=0.4, layer="S", year=2000, reducible=False):
    """Random binary matrix; by default with no empty or full line."""
    while True:
        A = rng.random((n_rows, n_cols)) < density
        d, u = A.sum(axis=1), A.sum(axis=0)
        if reducible or (d.min() > 0 and d.max() < n_cols and u.min() > 0 and u.max() < n_rows):
            return BinaryMatrix.from_dense(LayerId.parse(layer), TimeWindow(year), A)


def random_raw(rng, n_rows, n_cols, layer="S", year=2000, density=0.6, scale=10.0):
    W = np.where(rng.random((n_rows, n_cols)) < density, rng.gamma(1.0, scale, (n_rows, n_cols)), 0.0)
    W[0, 0] = max(W[0, 0], 1.0)
    return RawMatrix.from_dense(LayerId.parse(layer), TimeWindow(year), W)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
