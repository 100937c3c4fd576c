"""Analytic latency/resource model of the streaming feature-extraction core.

Two latency models are first class and every report labels which one
produced each number:

* ``formula``: the unpipelined iteration count of an unrolled module. For a
  fully-connected module this is ``L * (ceil(K/B) + ceil(log2 B))`` (the
  adder tree costs the log term); element-wise modules take ``ceil(K/B)``
  iterations. Used for design-space exploration and the naive baseline.
* ``calibrated``: ``cycles = trip_count * ii + depth`` with per-module
  ``ii``/``depth`` from a shipped calibration profile
  (``profiles/zcu104_100mhz.json``), reflecting that the realized design
  pipelines the inner loop.

The module also emulates the core's two-mode wire protocol (weight
initialization, then feature extraction) on top of the weight-blob format.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .data import parse_weight_blob
from .fixedpoint import QFormat, QuantizedPointNet, SaturationStats
from .pointnet import global_feature

DEFAULT_PROFILE = "zcu104_100mhz.json"


class ModuleKind(str, Enum):
    FC = "fc"
    BN_RELU = "bn_relu"
    MAX_POOL = "max_pool"


_KIND_LABELS = {ModuleKind.FC: "FC", ModuleKind.BN_RELU: "BN-ReLU", ModuleKind.MAX_POOL: "MaxPool"}


@dataclass(frozen=True)
class HwModuleSpec:
    """One hardware module: kind, shape, unroll factor, pipeline parameters.

    ``ii_cycles`` of ``None`` means the module has no calibration and its
    latency falls back to the formula model.
    """

    kind: ModuleKind
    k: int
    l: int | None = None
    b: int = 1
    ii_cycles: int | None = None
    depth_cycles: int = 0
    clock_mhz: float = 100.0

    def __post_init__(self):
        if self.kind == ModuleKind.FC and (self.l is None or self.l < 1):
            raise ValueError("FC modules need an output width l >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 1 <= self.b <= self.k:
            raise ValueError(f"unroll factor B must satisfy 1 <= B <= K, got B={self.b}, K={self.k}")
        if self.clock_mhz <= 0.0:
            raise ValueError("clock must be > 0")

    @property
    def label(self) -> str:
        if self.kind == ModuleKind.FC:
            return f"FC({self.k},{self.l})"
        return f"{_KIND_LABELS[self.kind]}({self.k})"

    @property
    def trip_count(self) -> int:
        if self.kind == ModuleKind.FC:
            return int(self.l)
        return math.ceil(self.k / self.b)

    @property
    def lanes(self) -> int:
        """Parallel multiply lanes the unroll factor implies (0 if none)."""
        return 0 if self.kind == ModuleKind.MAX_POOL else self.b


def unrolled_iteration_count(k: int, l: int, b: int) -> int:
    """Unpipelined iteration count of an unrolled dot-product module.

    ``L * (ceil(K/B) + ceil(log2 B))``; with B=1 the adder-tree term
    vanishes and the count is exactly K*L.
    """
    if b < 1:
        raise ValueError("B must be >= 1")
    if b > k:
        raise ValueError(f"B must not exceed K ({b} > {k})")
    if k < 1 or l < 1:
        raise ValueError("K and L must be >= 1")
    tree = math.ceil(math.log2(b)) if b > 1 else 0
    return l * (math.ceil(k / b) + tree)


def module_cycles(spec: HwModuleSpec) -> tuple[int, str]:
    """Cycle count of one module plus the label of the producing model."""
    if spec.ii_cycles is not None:
        return spec.trip_count * spec.ii_cycles + spec.depth_cycles, "calibrated"
    if spec.kind == ModuleKind.FC:
        return unrolled_iteration_count(spec.k, spec.l, spec.b) + spec.depth_cycles, "formula"
    return math.ceil(spec.k / spec.b) + spec.depth_cycles, "formula"


def module_latency(spec: HwModuleSpec) -> float:
    """Module latency in microseconds at its configured clock."""
    cycles, _ = module_cycles(spec)
    return cycles / spec.clock_mhz


@dataclass(frozen=True)
class ResourceEstimate:
    """Coarse absolute resource usage (counts, not fractions)."""

    dsp: float
    bram: float
    ff: float
    lut: float

    def utilization(self, board: dict[str, float]) -> dict[str, float]:
        return {
            "dsp": 100.0 * self.dsp / board["dsp"],
            "bram": 100.0 * self.bram / board["bram"],
            "ff": 100.0 * self.ff / board["ff"],
            "lut": 100.0 * self.lut / board["lut"],
        }

    def fits(self, budget: dict[str, float]) -> bool:
        return (
            self.dsp <= budget.get("dsp", math.inf)
            and self.bram <= budget.get("bram", math.inf)
            and self.ff <= budget.get("ff", math.inf)
            and self.lut <= budget.get("lut", math.inf)
        )


@dataclass(frozen=True)
class PipelineReport:
    """Timing of the inter-layer pipeline for one module chain."""

    module_labels: tuple[str, ...]
    module_latencies_us: tuple[float, ...]
    module_models: tuple[str, ...]
    bottleneck_index: int
    interval_us: float
    fill_us: float
    total_us: float
    n_points: int

    @property
    def bottleneck_label(self) -> str:
        return self.module_labels[self.bottleneck_index]


def pipeline_schedule(specs, n_points: int) -> PipelineReport:
    """Steady-state schedule of a module chain processing ``n_points``.

    The modules overlap on consecutive points, so the steady-state interval
    per point is the slowest module's latency; total time is the pipeline
    fill (sum of latencies) plus ``(n_points - 1)`` intervals. Bottleneck
    ties resolve to the earliest module.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one module")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    latencies = []
    models = []
    for spec in specs:
        cycles, model = module_cycles(spec)
        latencies.append(cycles / spec.clock_mhz)
        models.append(model)
    interval = max(latencies)
    bottleneck = latencies.index(interval)
    fill = float(sum(latencies))
    return PipelineReport(
        module_labels=tuple(s.label for s in specs),
        module_latencies_us=tuple(latencies),
        module_models=tuple(models),
        bottleneck_index=bottleneck,
        interval_us=interval,
        fill_us=fill,
        total_us=fill + (n_points - 1) * interval,
        n_points=n_points,
    )


# ---------------------------------------------------------------------------
# Calibration profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """Parsed calibration profile: per-module pipeline and resource constants."""

    clock_mhz: float
    modules: tuple[dict, ...]
    resources: dict
    boards: dict[str, dict[str, float]]

    def lookup(self, kind: ModuleKind, k: int, l: int | None) -> dict | None:
        for entry in self.modules:
            if entry["kind"] == kind.value and entry["k"] == k and entry.get("l") == l:
                return entry
        return None


def load_calibration(path=None) -> Calibration:
    """Load a calibration profile; defaults to the shipped one."""
    if path is None:
        text = resources.files("pointlk").joinpath("profiles", DEFAULT_PROFILE).read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    if raw.get("schema") != "accel-calibration-v1":
        raise ValueError(f"unsupported calibration schema: {raw.get('schema')!r}")
    return Calibration(
        clock_mhz=float(raw["clock_mhz"]),
        modules=tuple(raw["modules"]),
        resources=dict(raw["resources"]),
        boards={name: dict(caps) for name, caps in raw["boards"].items()},
    )


# The module chain of the five-layer network, in dataflow order. Repeated
# shapes (FC(64,64), BN-ReLU(64)) are distinct hardware instances that share
# one profile entry.
NETWORK_CHAIN: tuple[tuple[ModuleKind, int, int | None], ...] = (
    (ModuleKind.FC, 3, 64),
    (ModuleKind.BN_RELU, 64, None),
    (ModuleKind.FC, 64, 64),
    (ModuleKind.BN_RELU, 64, None),
    (ModuleKind.FC, 64, 64),
    (ModuleKind.BN_RELU, 64, None),
    (ModuleKind.FC, 64, 128),
    (ModuleKind.BN_RELU, 128, None),
    (ModuleKind.FC, 128, 1024),
    (ModuleKind.BN_RELU, 1024, None),
    (ModuleKind.MAX_POOL, 1024, None),
)


def distinct_shapes() -> tuple[tuple[ModuleKind, int, int | None], ...]:
    """The chain's distinct (kind, K, L) shapes in first-appearance order."""
    seen: list[tuple[ModuleKind, int, int | None]] = []
    for shape in NETWORK_CHAIN:
        if shape not in seen:
            seen.append(shape)
    return tuple(seen)


def network_schedule(
    calibration: Calibration | None = None,
    b_by_shape: dict[tuple[ModuleKind, int, int | None], int] | None = None,
    *,
    calibrated: bool = True,
) -> list[HwModuleSpec]:
    """Build the 11-module chain, calibrated or with explicit unroll factors."""
    calibration = calibration or load_calibration()
    specs = []
    for kind, k, l in NETWORK_CHAIN:
        entry = calibration.lookup(kind, k, l)
        b = b_by_shape[(kind, k, l)] if b_by_shape else (entry["b"] if entry else 1)
        use_entry = calibrated and entry is not None and entry["b"] == b
        specs.append(
            HwModuleSpec(
                kind=kind,
                k=k,
                l=l,
                b=b,
                ii_cycles=entry["ii"] if use_entry else None,
                depth_cycles=entry["depth"] if use_entry else 0,
                clock_mhz=calibration.clock_mhz,
            )
        )
    return specs


# ---------------------------------------------------------------------------
# Resource model
# ---------------------------------------------------------------------------

# Parameter words stored on chip: FC weights/biases plus four BN vectors and
# the folded affine's epsilon roll into the BN channel count.
_PARAM_WORDS = sum(k * l + l for k, l in ((3, 64), (64, 64), (64, 64), (64, 128), (128, 1024))) + 4 * (
    64 + 64 + 64 + 128 + 1024
)


def _dsp_per_lane(resources: dict, width_bits: int) -> float:
    table = {int(k): float(v) for k, v in resources["dsp_per_lane_by_width"].items()}
    widths = sorted(table)
    for width in widths:
        if width_bits <= width:
            return table[width]
    return table[widths[-1]]


def estimate_resources(specs, width_bits: int, calibration: Calibration | None = None) -> ResourceEstimate:
    """Additive resource estimate for a module chain at one word width.

    DSP/FF/LUT scale with total multiply lanes; BRAM holds the parameter
    store at the active width with a packing overhead. Deliberately coarse:
    a sanity model, not a synthesis result.
    """
    calibration = calibration or load_calibration()
    res = calibration.resources
    lanes = sum(spec.lanes for spec in specs)
    bram_bits = _PARAM_WORDS * width_bits * float(res["bram_overhead"])
    return ResourceEstimate(
        dsp=lanes * _dsp_per_lane(res, width_bits),
        bram=bram_bits / float(res["bram_bits_per_block"]),
        ff=lanes * float(res["ff_per_lane"]),
        lut=lanes * float(res["lut_per_lane"]),
    )


# ---------------------------------------------------------------------------
# Design comparison and exploration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignComparison:
    """Modeled totals for the three optimization stages, microseconds."""

    n_points: int
    naive_us: float
    intra_us: float
    pipelined_us: float

    @property
    def intra_speedup(self) -> float:
        return self.naive_us / self.intra_us

    @property
    def pipeline_speedup(self) -> float:
        return self.intra_us / self.pipelined_us

    @property
    def total_speedup(self) -> float:
        return self.naive_us / self.pipelined_us


def compare_designs(n_points: int, calibration: Calibration | None = None) -> DesignComparison:
    """Naive vs intra-layer vs intra+inter totals for ``n_points``.

    Naive: every module at B=1, formula model, strictly sequential. Intra:
    calibrated per-module latencies, still one point at a time. Pipelined:
    the calibrated chain overlapping across points.
    """
    calibration = calibration or load_calibration()
    naive_specs = network_schedule(calibration, {shape: 1 for shape in distinct_shapes()}, calibrated=False)
    naive_per_point = sum(module_latency(s) for s in naive_specs)
    intra_specs = network_schedule(calibration)
    intra_per_point = sum(module_latency(s) for s in intra_specs)
    pipelined = pipeline_schedule(intra_specs, n_points)
    return DesignComparison(
        n_points=n_points,
        naive_us=naive_per_point * n_points,
        intra_us=intra_per_point * n_points,
        pipelined_us=pipelined.total_us,
    )


@dataclass(frozen=True)
class DesignPoint:
    """One explored configuration with its schedule and resource estimate."""

    config_id: str
    assignment: tuple[int, ...]
    report: PipelineReport
    resources: ResourceEstimate
    feasible: bool


def power_of_two_choices(k: int, cap: int | None = None) -> tuple[int, ...]:
    """Valid unroll factors for a width-``k`` module: powers of two up to K."""
    out = []
    b = 1
    while b <= k and (cap is None or b <= cap):
        out.append(b)
        b *= 2
    return tuple(out)


def explore_design(
    space: dict[tuple[ModuleKind, int, int | None], tuple[int, ...]] | None = None,
    budget: dict[str, float] | None = None,
    n_points: int = 1024,
    *,
    width_bits: int = 32,
    calibration: Calibration | None = None,
    limit: int | None = None,
) -> list[DesignPoint]:
    """Enumerate unroll assignments, filter by a resource budget, rank by time.

    ``space`` maps each distinct module shape to candidate unroll factors
    (default: powers of two up to each K, capped at 8 choices per module).
    ``budget`` caps absolute resource counts (missing keys are unlimited);
    an empty feasible set returns an empty list. Ranking is by pipelined
    total latency for ``n_points``, ties broken by DSP count. Latencies use
    the formula model so arbitrary assignments are comparable.
    """
    calibration = calibration or load_calibration()
    shapes = distinct_shapes()
    if space is None:
        space = {shape: power_of_two_choices(shape[1], cap=128) for shape in shapes}
    for shape in shapes:
        if shape not in space or not space[shape]:
            raise ValueError(f"space is missing choices for {shape}")

    points = []
    for assignment in itertools.product(*(space[shape] for shape in shapes)):
        b_by_shape = dict(zip(shapes, assignment))
        specs = network_schedule(calibration, b_by_shape, calibrated=False)
        report = pipeline_schedule(specs, n_points)
        estimate = estimate_resources(specs, width_bits, calibration)
        feasible = budget is None or estimate.fits(budget)
        if not feasible:
            continue
        config_id = "|".join(
            f"{_KIND_LABELS[kind]}{k}x{l if l else ''}:B{b}"
            for (kind, k, l), b in zip(shapes, assignment)
        )
        points.append(
            DesignPoint(
                config_id=config_id,
                assignment=tuple(assignment),
                report=report,
                resources=estimate,
                feasible=True,
            )
        )
    points.sort(key=lambda p: (p.report.total_us, p.resources.dsp))
    return points[:limit] if limit is not None else points


# ---------------------------------------------------------------------------
# Wire protocol emulation
# ---------------------------------------------------------------------------

ACK_WORD = 0x00000001


class ProtocolError(RuntimeError):
    """Protocol violation: malformed weight stream or out-of-order request."""


class AcceleratorEmulator:
    """Behavioral model of the core's two-mode request protocol.

    Mode one streams the weight blob in; a well-formed blob is acknowledged
    with a nonzero 32-bit word and arms the extractor. Mode two streams
    points and returns the 1024-value global feature. The blob's declared
    Q-format selects the fixed-point pipeline; a zero descriptor selects
    float. The numeric behavior is exactly that of the in-process feature
    extractors; only the framing is emulated here.
    """

    def __init__(self):
        self._params = None
        self._network: QuantizedPointNet | None = None
        self._last_stats: SaturationStats | None = None

    @property
    def ready(self) -> bool:
        return self._params is not None

    @property
    def last_stats(self) -> SaturationStats | None:
        return self._last_stats

    def load_weights(self, blob: bytes) -> int:
        """Weight-initialization mode; returns the nonzero acknowledgement.

        A malformed blob raises :class:`ProtocolError` before any
        acknowledgement and leaves the core unarmed.
        """
        try:
            params, meta = parse_weight_blob(blob)
        except ValueError as exc:
            self._params = None
            self._network = None
            raise ProtocolError(f"weight stream rejected: {exc}") from exc
        self._params = params
        self._network = (
            QuantizedPointNet(params, QFormat(meta.qformat_n)) if meta.qformat_n else None
        )
        return ACK_WORD

    def extract(self, points) -> np.ndarray:
        """Feature-extraction mode over a stream of 3-vector points."""
        if not self.ready:
            raise ProtocolError("feature extraction requested before weight initialization")
        cloud = np.asarray(list(points), dtype=np.float64).reshape(-1, 3)
        if self._network is not None:
            feature, stats = self._network.global_feature(cloud)
            self._last_stats = stats
            return feature
        self._last_stats = None
        return global_feature(self._params, cloud)


def stream_protocol_emulate(blob: bytes, points) -> np.ndarray:
    """Drive the full two-phase protocol and return the global feature."""
    core = AcceleratorEmulator()
    ack = core.load_weights(blob)
    if not ack:
        raise ProtocolError("core did not acknowledge weight initialization")
    return core.extract(points)
