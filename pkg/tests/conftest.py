import numpy as np
import pytest

from limset.criteria_engine.normalizers import NormalizerSeq
from limset.heavy_tail_models import GaussianModel, StarSet, build_example8
from limset.strassen_core import GridFn


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_walk(rng):
    def make(n_grid: int, dim: int = 1, scale: float = 1.0) -> GridFn:
        steps = rng.standard_normal((n_grid, dim)) * scale / np.sqrt(n_grid)
        return GridFn.from_values(np.vstack([np.zeros((1, dim)), np.cumsum(steps, axis=0)]))

    return make


@pytest.fixture
def hartman_wintner():
    return NormalizerSeq.sqrt_2n_loglog()


@pytest.fixture
def loglog_p1():
    return NormalizerSeq.sqrt_2n_loglog_pow(1.0)


@pytest.fixture
def gaussian_identity_2d():
    return GaussianModel(np.eye(2))


@pytest.fixture
def single_segment_star():
    return StarSet.from_segments([(1.0, [1.0, 0.0])])


@pytest.fixture
def example8_exact(single_segment_star):
    return build_example8(single_segment_star, mode="exact_log")
