import numpy as np
import pytest

from pointlk.pointnet import LAYER_DIMS, LayerParams, PointNetParams, random_params


def collapsed_bn_layer(weight, bias) -> LayerParams:
    """LayerParams whose BN-ReLU stage reduces to a plain ReLU."""
    weight = np.asarray(weight, dtype=np.float64)
    l = weight.shape[0]
    return LayerParams(
        weight=weight,
        bias=bias,
        bn_weight=np.ones(l),
        bn_bias=np.zeros(l),
        bn_mean=np.zeros(l),
        # var + epsilon == 1 exactly, so normalization is the identity.
        bn_var=np.full(l, 1.0 - 1e-5),
        epsilon=1e-5,
    )


def identity_like_params() -> PointNetParams:
    """Padded-identity weights with collapsed BN: the stack passes ReLU(p)
    through into the first three feature lanes."""
    layers = []
    for k, l in LAYER_DIMS:
        weight = np.zeros((l, k))
        np.fill_diagonal(weight, 1.0)
        layers.append(collapsed_bn_layer(weight, np.zeros(l)))
    return PointNetParams(layers=tuple(layers))


def random_cloud(rng: np.random.Generator, n: int = 32, scale: float = 1.0) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(n, 3))


def centroid_feature(cloud: np.ndarray) -> np.ndarray:
    """Three-dimensional stub feature: the cloud centroid."""
    return np.asarray(cloud, dtype=np.float64).mean(axis=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def shared_params() -> PointNetParams:
    return random_params(7)
