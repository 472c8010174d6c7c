import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from supportbound.model import MeasurementSetup, SparseSignal, sample_gaussian_ensemble  # noqa: E402


@pytest.fixture
def instance():
    """Seeded (p=8, k=2, m=10) Gaussian instance with theta = (3, 3) on (1, 2)."""
    phi = sample_gaussian_ensemble(10, 8, seed=5)
    return MeasurementSetup(phi, 1.0, 2), SparseSignal.constant(8, 2, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
