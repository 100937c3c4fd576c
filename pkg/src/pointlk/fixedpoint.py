"""Bit-accurate emulation of the accelerator's signed fixed-point arithmetic.

Word layout: a format with half-width parameter ``n`` is a ``2n``-bit two's
complement word holding one sign bit, ``n`` integer bits, and ``n - 1``
fraction bits, i.e. ``value = raw / 2**(n-1)`` with
``raw in [-2**(2n-1), 2**(2n-1) - 1]``.

Arithmetic contract:

* rounding is round-to-nearest, ties to even;
* out-of-range results saturate silently and bump a stats counter;
* fully-connected dot products keep every product at double width
  (``2(n-1)`` fraction bits), accumulate exactly, and requantize once per
  output element. A ``per_mac`` flag requantizes each product before
  accumulation instead, for sensitivity studies;
* batch norm is folded into a per-channel affine (scale, shift) before
  quantization, so no fixed-point division or square root is emulated.

All operations are pure functions of their inputs; identical inputs give
bitwise-identical raw words on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import as_cloud
from .pointnet import FEATURE_WIDTH, PointNetParams

# Largest half-width whose double-width products stay inside int64.
_MAX_N = 16


@dataclass(frozen=True)
class QFormat:
    """Signed fixed-point format parameterized by its half-width ``n``."""

    n: int

    def __post_init__(self):
        if not 2 <= self.n <= _MAX_N:
            raise ValueError(f"half-width n must be in [2, {_MAX_N}], got {self.n}")

    @property
    def total_bits(self) -> int:
        return 2 * self.n

    @property
    def integer_bits(self) -> int:
        return self.n

    @property
    def fraction_bits(self) -> int:
        return self.n - 1

    @property
    def scale(self) -> int:
        return 1 << self.fraction_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale


@dataclass
class SaturationStats:
    """Counts of range clamps performed while quantizing and computing.

    ``params`` counts clamps while quantizing weights/affines, ``activations``
    counts clamps on data-path values (inputs, accumulators, affine outputs).
    """

    params: int = 0
    activations: int = 0

    @property
    def total(self) -> int:
        return self.params + self.activations


@dataclass(frozen=True)
class QValue:
    """One fixed-point value: a raw integer plus its format."""

    raw: int
    fmt: QFormat

    def __post_init__(self):
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise ValueError(f"raw value {self.raw} outside range of {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw / self.fmt.scale


def _round_even_rshift(values, shift: int):
    """Right shift with round-to-nearest, ties to even.

    Works elementwise on int64 arrays and on Python ints (which never
    overflow). Uses the floor decomposition ``x = q * 2**shift + r`` with
    ``0 <= r < 2**shift``.
    """
    if shift == 0:
        return values
    q = values >> shift
    r = values & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    if isinstance(values, np.ndarray):
        bump = (r > half) | ((r == half) & ((q & 1) == 1))
        return q + bump
    return q + int(r > half or (r == half and q & 1 == 1))


def _saturate_int(raw: int, fmt: QFormat, stats: SaturationStats | None, bucket: str) -> int:
    if raw > fmt.raw_max:
        if stats is not None:
            setattr(stats, bucket, getattr(stats, bucket) + 1)
        return fmt.raw_max
    if raw < fmt.raw_min:
        if stats is not None:
            setattr(stats, bucket, getattr(stats, bucket) + 1)
        return fmt.raw_min
    return raw


def _saturate_array(
    raw: np.ndarray, fmt: QFormat, stats: SaturationStats | None, bucket: str
) -> np.ndarray:
    clipped = np.clip(raw, fmt.raw_min, fmt.raw_max)
    if stats is not None:
        clamps = int(np.count_nonzero(raw != clipped))
        setattr(stats, bucket, getattr(stats, bucket) + clamps)
    return clipped


def quantize(x: float, fmt: QFormat, stats: SaturationStats | None = None) -> QValue:
    """Round-to-nearest-even quantization of a real value, saturating.

    When ``x`` is in range, ``|quantize(x).value - x| <= resolution / 2``.
    NaN is rejected; infinities saturate like any out-of-range value.
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("cannot quantize NaN")
    scaled = x * fmt.scale
    if math.isinf(scaled) or scaled >= fmt.raw_max + 1 or scaled <= fmt.raw_min - 1:
        limit = fmt.raw_max if scaled > 0 else fmt.raw_min
        if stats is not None:
            stats.activations += 1
        return QValue(limit, fmt)
    raw = _saturate_int(round(scaled), fmt, stats, "activations")
    return QValue(raw, fmt)


def dequantize(q: QValue) -> float:
    return q.value


def q_add(a: QValue, b: QValue, stats: SaturationStats | None = None) -> QValue:
    """Exact integer addition followed by saturation."""
    if a.fmt != b.fmt:
        raise ValueError("operands must share a format")
    return QValue(_saturate_int(a.raw + b.raw, a.fmt, stats, "activations"), a.fmt)


def q_mul(a: QValue, b: QValue, stats: SaturationStats | None = None) -> QValue:
    """Exact integer multiply, round-to-nearest-even rescale, saturation."""
    if a.fmt != b.fmt:
        raise ValueError("operands must share a format")
    product = _round_even_rshift(a.raw * b.raw, a.fmt.fraction_bits)
    return QValue(_saturate_int(product, a.fmt, stats, "activations"), a.fmt)


def _quantize_array(
    x: np.ndarray, fmt: QFormat, stats: SaturationStats | None, bucket: str
) -> np.ndarray:
    """Vectorized quantize of a finite float array to raw int64 words."""
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    scaled = np.rint(x * fmt.scale)
    return _saturate_array(scaled, fmt, stats, bucket).astype(np.int64)


def _exact_matvec(weight_raw: np.ndarray, x_raw: np.ndarray) -> np.ndarray:
    """Integer matrix-vector product with exact accumulation.

    Uses int64 when a conservative magnitude bound shows no overflow is
    possible; otherwise falls back to Python's arbitrary-precision integers.
    """
    w_max = int(np.max(np.abs(weight_raw))) if weight_raw.size else 0
    x_max = int(np.max(np.abs(x_raw))) if x_raw.size else 0
    bound = w_max * x_max * x_raw.size
    if bound < 2**62:
        return weight_raw @ x_raw
    rows = [sum(int(w) * int(v) for w, v in zip(row, x_raw)) for row in weight_raw]
    return np.array(rows, dtype=object)


class QuantizedPointNet:
    """The five-layer feature extractor with all values held in one format.

    Weights, folded batch-norm affines, inputs, and every intermediate are
    quantized to ``fmt`` at construction or during evaluation. Reusable
    across clouds; the construction-time parameter clamps are folded into
    the stats returned by each evaluation.
    """

    def __init__(self, params: PointNetParams, fmt: QFormat, *, per_mac: bool = False):
        self.fmt = fmt
        self.per_mac = per_mac
        self._param_stats = SaturationStats()
        self._layers: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for layer in params.layers:
            scale, shift = layer.bn_affine()
            self._layers.append(
                (
                    _quantize_array(layer.weight, fmt, self._param_stats, "params"),
                    _quantize_array(layer.bias, fmt, self._param_stats, "params"),
                    _quantize_array(scale, fmt, self._param_stats, "params"),
                    _quantize_array(shift, fmt, self._param_stats, "params"),
                )
            )

    def local_feature_raw(self, point, stats: SaturationStats) -> np.ndarray:
        """Raw-word local feature of one 3-vector point."""
        frac = self.fmt.fraction_bits
        x = _quantize_array(np.asarray(point, dtype=np.float64).reshape(3), self.fmt, stats, "activations")
        for weight, bias, scale, shift in self._layers:
            if self.per_mac:
                w_max = int(np.max(np.abs(weight))) if weight.size else 0
                x_max = int(np.max(np.abs(x))) if x.size else 0
                raw_products = (
                    weight * x[np.newaxis, :]
                    if w_max * x_max < 2**62
                    else weight.astype(object) * x
                )
                products = _round_even_rshift(raw_products, frac)
                products = _saturate_array(products, self.fmt, stats, "activations")
                acc = products.sum(axis=1).astype(np.int64) << frac
            else:
                acc = _exact_matvec(weight, x)
            # Bias carries `frac` fraction bits; the accumulator carries 2*frac.
            acc = acc + (bias.astype(acc.dtype) << frac)
            y = _round_even_rshift(acc, frac)
            y = _saturate_array(y, self.fmt, stats, "activations").astype(np.int64)
            affine = scale * y + (shift << frac)
            y = _round_even_rshift(affine, frac)
            y = _saturate_array(y, self.fmt, stats, "activations").astype(np.int64)
            x = np.maximum(y, 0)
        return x

    def global_feature_raw(self, cloud, stats: SaturationStats) -> np.ndarray:
        cloud = as_cloud(cloud)
        phi = np.zeros(FEATURE_WIDTH, dtype=np.int64)
        for p in cloud:
            np.maximum(phi, self.local_feature_raw(p, stats), out=phi)
        return phi

    def global_feature(self, cloud) -> tuple[np.ndarray, SaturationStats]:
        """Dequantized global feature and the clamp counts for this call."""
        stats = SaturationStats(
            params=self._param_stats.params, activations=self._param_stats.activations
        )
        raw = self.global_feature_raw(cloud, stats)
        return raw.astype(np.float64) / self.fmt.scale, stats

    def extractor(self):
        """Bind into a ``cloud -> feature`` callable (stats discarded)."""

        def extract(cloud) -> np.ndarray:
            feature, _ = self.global_feature(cloud)
            return feature

        return extract


def quantized_global_feature(
    params: PointNetParams, cloud, fmt: QFormat, *, per_mac: bool = False
) -> tuple[np.ndarray, SaturationStats]:
    """Full forward pass with every value quantized to ``fmt``.

    Returns the dequantized 1024-wide feature and the saturation counts
    (parameter quantization clamps included).
    """
    return QuantizedPointNet(params, fmt, per_mac=per_mac).global_feature(cloud)
