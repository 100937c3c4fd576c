"""Streaming PointNet feature extractor (inference only).

The extractor is a stack of five fully-connected layers, each fused with a
batch-norm + ReLU stage, followed by an element-wise running maximum that
aggregates per-point local features into one 1024-wide global descriptor.

Evaluation is point at a time: the only state carried across points is the
running maximum, so peak intermediate storage does not grow with cloud
size. A dense all-points-at-once reference (:func:`global_feature_batch`)
exists for cross-checking; the streaming path is the primary contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import Points, as_cloud

# Input/output widths of the five fully-connected layers, in order.
LAYER_DIMS: tuple[tuple[int, int], ...] = ((3, 64), (64, 64), (64, 64), (64, 128), (128, 1024))
FEATURE_WIDTH = 1024
DEFAULT_BN_EPSILON = 1e-5

Vector = NDArray[np.float64]
GlobalFeature = NDArray[np.float64]


def _frozen_array(value, shape: tuple[int, ...], name: str) -> np.ndarray:
    out = np.array(value, dtype=np.float64)
    if out.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LayerParams:
    """Parameters of one fully-connected layer and its fused BN-ReLU stage.

    ``weight`` has shape (out_features, in_features); ``bias`` and the four
    batch-norm vectors have length out_features. Batch norm uses baked-in
    running statistics (inference mode only).
    """

    weight: np.ndarray
    bias: np.ndarray
    bn_weight: np.ndarray
    bn_bias: np.ndarray
    bn_mean: np.ndarray
    bn_var: np.ndarray
    epsilon: float = DEFAULT_BN_EPSILON

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weight must be a matrix, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        out_features = w.shape[0]
        for name in ("bias", "bn_weight", "bn_bias", "bn_mean", "bn_var"):
            object.__setattr__(
                self, name, _frozen_array(getattr(self, name), (out_features,), name)
            )
        if np.any(self.bn_var < 0.0):
            raise ValueError("bn_var entries must be >= 0")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be > 0")
        arrays = (self.weight, self.bias, self.bn_weight, self.bn_bias, self.bn_mean, self.bn_var)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("layer parameters must be finite")

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def bn_affine(self) -> tuple[np.ndarray, np.ndarray]:
        """Fold batch norm into an equivalent per-channel (scale, shift)."""
        scale = self.bn_weight / np.sqrt(self.bn_var + self.epsilon)
        return scale, self.bn_bias - self.bn_mean * scale


@dataclass(frozen=True)
class PointNetParams:
    """The five-layer parameter set, dimension chain 3-64-64-64-128-1024."""

    layers: tuple[LayerParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        dims = tuple((lp.in_features, lp.out_features) for lp in self.layers)
        if dims != LAYER_DIMS:
            raise ValueError(f"layer dimension chain must be {LAYER_DIMS}, got {dims}")


@dataclass
class AllocationMeter:
    """Tracks live intermediate feature bytes during a streaming evaluation.

    ``peak_bytes`` is the high-water mark of per-point intermediate storage
    plus the persistent running maximum. It must not depend on cloud size.
    """

    persistent_bytes: int = 0
    point_bytes: int = 0
    peak_bytes: int = 0
    points_seen: int = 0

    def track_persistent(self, array: np.ndarray) -> None:
        self.persistent_bytes += array.nbytes
        self.peak_bytes = max(self.peak_bytes, self.persistent_bytes + self.point_bytes)

    def track(self, array: np.ndarray) -> None:
        self.point_bytes += array.nbytes
        self.peak_bytes = max(self.peak_bytes, self.persistent_bytes + self.point_bytes)

    def next_point(self) -> None:
        self.points_seen += 1
        self.point_bytes = 0


def fc_forward(params: LayerParams, x) -> Vector:
    """Fully-connected layer output ``W x + b``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.in_features,):
        raise ValueError(f"input must have shape ({params.in_features},), got {x.shape}")
    return params.weight @ x + params.bias


def bn_relu_forward(params: LayerParams, x) -> Vector:
    """Fused batch-norm + ReLU: ``max(0, (x - mean)/sqrt(var + eps) * w + b)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.out_features,):
        raise ValueError(f"input must have shape ({params.out_features},), got {x.shape}")
    normalized = (x - params.bn_mean) / np.sqrt(params.bn_var + params.epsilon) * params.bn_weight
    return np.maximum(0.0, normalized + params.bn_bias)


def maxpool_update(phi, psi) -> GlobalFeature:
    """Element-wise maximum of the running feature and one local feature."""
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if phi.shape != psi.shape:
        raise ValueError(f"shape mismatch: {phi.shape} vs {psi.shape}")
    return np.maximum(phi, psi)


def local_feature(params: PointNetParams, p, meter: AllocationMeter | None = None) -> Vector:
    """Per-point local feature: FC then BN-ReLU through all five layers."""
    x = np.asarray(p, dtype=np.float64).reshape(-1)
    for layer in params.layers:
        x = fc_forward(layer, x)
        if meter is not None:
            meter.track(x)
        x = bn_relu_forward(layer, x)
        if meter is not None:
            meter.track(x)
    return x


def global_feature(
    params: PointNetParams,
    cloud,
    *,
    neg_inf_init: bool = False,
    meter: AllocationMeter | None = None,
) -> GlobalFeature:
    """Global feature of a cloud: running maximum over per-point features.

    The running maximum starts at zero. Because every local feature is
    ReLU-nonnegative this is equivalent to a -inf start; the ``neg_inf_init``
    flag selects the -inf variant for experiments with non-ReLU stacks.
    Points are folded one at a time and the fold order over feature lanes is
    fixed, so the result is exactly permutation-invariant.
    """
    cloud = as_cloud(cloud)
    fill = -np.inf if neg_inf_init else 0.0
    phi = np.full(FEATURE_WIDTH, fill)
    if meter is not None:
        meter.track_persistent(phi)
    for p in cloud:
        if meter is not None:
            meter.next_point()
        psi = local_feature(params, p, meter)
        np.maximum(phi, psi, out=phi)
    return phi


def global_feature_batch(params: PointNetParams, cloud) -> GlobalFeature:
    """Dense reference: all points through the stack at once, then max.

    Allocates O(N) intermediate feature storage by construction; used to
    cross-check the streaming path, not as the primary implementation.
    """
    x = as_cloud(cloud)
    for layer in params.layers:
        x = x @ layer.weight.T + layer.bias
        scale, shift = layer.bn_affine()
        x = np.maximum(0.0, x * scale + shift)
    return np.maximum(x.max(axis=0), 0.0)


def feature_extractor(params: PointNetParams):
    """Bind parameters into a ``cloud -> global feature`` callable."""

    def extract(cloud) -> GlobalFeature:
        return global_feature(params, cloud)

    return extract


def random_params(seed: int | np.random.Generator = 0) -> PointNetParams:
    """Deterministic random parameter set for fixtures and benchmarks.

    Weights are scaled by 1/sqrt(in_features) so activations stay O(1)
    through the stack; batch-norm statistics are mild perturbations of the
    identity normalization.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for k, l in LAYER_DIMS:
        layers.append(
            LayerParams(
                weight=rng.uniform(-1.0, 1.0, size=(l, k)) / np.sqrt(k),
                bias=rng.uniform(-0.1, 0.1, size=l),
                bn_weight=rng.uniform(0.8, 1.2, size=l),
                bn_bias=rng.uniform(-0.1, 0.1, size=l),
                bn_mean=rng.uniform(-0.1, 0.1, size=l),
                bn_var=rng.uniform(0.5, 1.5, size=l),
            )
        )
    return PointNetParams(layers=tuple(layers))
