import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slameval import kernels  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    mod = kernels.BACKENDS[request.param]
    for name in ("cross_covariance", "residual_norms", "relative_errors"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA
