import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparsoc.fnspace import GridFunction, GridSpec  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_gf(rng, spec, scale=1.0, zero_frac=0.0):
    vals = scale * rng.standard_normal(spec.shape)
    if zero_frac:
        vals[rng.random(spec.shape) < zero_frac] = 0.0
    return GridFunction(spec, vals)


@pytest.fixture
def unit_spec():
    return GridSpec.uniform(4, 5)
