import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from heatpinn.heat_model import PhysicalParams
from heatpinn.losses import Batch
from heatpinn.network import Scaler


@pytest.fixture
def table1() -> PhysicalParams:
    return PhysicalParams()


@pytest.fixture
def identity_scaler() -> Scaler:
    return Scaler.identity()


def random_input_rows(rng, n):
    """Physically plausible network inputs [T_a, x, t, T_o, P_K]."""
    return np.column_stack([
        rng.uniform(278.0, 300.0, n),
        rng.uniform(0.0, 1.0, n),
        rng.uniform(0.0, 360000.0, n),
        rng.uniform(285.0, 325.0, n),
        rng.uniform(0.0, 90000.0, n),
    ])


def random_batch(rng, n_boundary, n_collocation=0):
    bx = random_input_rows(rng, n_boundary)
    bu = rng.uniform(280.0, 325.0, n_boundary)
    cx = random_input_rows(rng, n_collocation) if n_collocation else np.zeros((0, 5))
    ck = rng.uniform(0.2, 1.2, n_collocation) if n_collocation else None
    return Batch(bx, bu, cx, ck, time_range=(0.0, 360000.0))
