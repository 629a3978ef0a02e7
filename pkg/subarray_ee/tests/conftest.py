import numpy as np
import pytest

from subarray_ee.channel_model import ClusterConfig, SystemDims, generate_channel, make_rng
from subarray_ee.config import ExperimentConfig
from subarray_ee.metrics import PowerModel


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_dims():
    """N_t = 16 split into 4 sub-arrays of 4 antennas."""
    return SystemDims(n_subarrays=4, antennas_per_subarray=4)


@pytest.fixture
def reference_dims():
    return SystemDims(n_subarrays=8, antennas_per_subarray=8)


@pytest.fixture
def cluster_cfg():
    return ClusterConfig()


@pytest.fixture
def power_model():
    return PowerModel()


@pytest.fixture
def small_channel(small_dims, cluster_cfg, rng):
    return generate_channel(small_dims, cluster_cfg, rng)


@pytest.fixture
def small_config():
    return ExperimentConfig(
        dims={"n_subarrays": 2, "antennas_per_subarray": 2},
        cluster={"n_clusters": 2, "rays_per_cluster": 3},
        power_grid_dbm=[0.0, 20.0],
        trials=3,
        base_seed=7,
    )
