"""Dataset ingestion and synthesis plus the binary weight-blob format.

Covers ASCII OFF mesh loading (vertices only; faces are parsed for
validation and discarded), unit-cube normalization, seeded resampling,
benchmark pair generation, a few synthetic shapes for desk-scale corpora,
and the little-endian weight-blob container shared with the trainer and the
protocol emulator. The blob byte layout is documented in
docs/weight_blob.md; all randomized operations are pure functions of
(inputs, seed).
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .geometry import Mat4, Points
from .pointnet import LAYER_DIMS, LayerParams, PointNetParams

# ---------------------------------------------------------------------------
# OFF meshes
# ---------------------------------------------------------------------------


class OffParseError(ValueError):
    """Malformed OFF file; carries the 1-based offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_off(path) -> Points:
    """Parse an ASCII OFF mesh and return its vertices as a point cloud.

    Accepts the common header variants: counts on the line after ``OFF``,
    or glued to it (``OFF490 312 0``). Comment lines (``#``) and blank
    lines are skipped. Face records are not returned.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    cursor = 0

    def next_content() -> tuple[int, str]:
        nonlocal cursor
        while cursor < len(lines):
            cursor += 1
            stripped = lines[cursor - 1].split("#", 1)[0].strip()
            if stripped:
                return cursor, stripped
        raise OffParseError(len(lines) or 1, "unexpected end of file")

    line_no, header = next_content()
    if not header.startswith("OFF"):
        raise OffParseError(line_no, "missing OFF header")
    remainder = header[3:].strip()
    if remainder:
        counts_line, counts_text = line_no, remainder
    else:
        counts_line, counts_text = next_content()
    fields = counts_text.split()
    if len(fields) != 3:
        raise OffParseError(counts_line, f"expected 3 counts, got {len(fields)}")
    try:
        n_vertices, n_faces, _ = (int(f) for f in fields)
    except ValueError as exc:
        raise OffParseError(counts_line, f"bad count field: {exc}") from exc
    if n_vertices < 1:
        raise OffParseError(counts_line, "vertex count must be >= 1")

    vertices = np.empty((n_vertices, 3))
    for i in range(n_vertices):
        try:
            line_no, content = next_content()
        except OffParseError:
            raise OffParseError(len(lines), f"expected {n_vertices} vertices, found {i}") from None
        parts = content.split()
        if len(parts) < 3:
            raise OffParseError(line_no, f"vertex needs 3 coordinates, got {len(parts)}")
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError as exc:
            raise OffParseError(line_no, f"bad coordinate: {exc}") from exc
    if not np.all(np.isfinite(vertices)):
        raise OffParseError(counts_line, "non-finite vertex coordinates")
    # Faces are only length-checked so truncated files are rejected.
    for i in range(n_faces):
        try:
            next_content()
        except OffParseError:
            raise OffParseError(len(lines), f"expected {n_faces} faces, found {i}") from None
    return vertices


def write_off(path, cloud, faces=()) -> None:
    """Write a point cloud (and optional faces) as an ASCII OFF file."""
    cloud = geometry.as_cloud(cloud)
    with open(path, "w") as handle:
        handle.write("OFF\n")
        handle.write(f"{len(cloud)} {len(faces)} 0\n")
        for x, y, z in cloud:
            handle.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for face in faces:
            handle.write(" ".join(str(int(v)) for v in (len(face), *face)) + "\n")


# ---------------------------------------------------------------------------
# Cloud preparation
# ---------------------------------------------------------------------------


def normalize_unit_cube(cloud) -> Points:
    """Translate and uniformly scale a cloud to fit inside the unit cube.

    The longest bounding-box side maps exactly to 1 and starts at 0; axes
    with zero extent (and a fully degenerate single point) sit at 0.5.
    """
    cloud = geometry.as_cloud(cloud)
    lo = cloud.min(axis=0)
    extent = cloud.max(axis=0) - lo
    longest = float(extent.max())
    if longest == 0.0:
        return np.full_like(cloud, 0.5)
    out = (cloud - lo) / longest
    out[:, extent == 0.0] = 0.5
    return out


def resample(cloud, n_target: int, rng: np.random.Generator) -> Points:
    """Resample a cloud to exactly ``n_target`` points, seeded by ``rng``.

    Downsampling draws a uniform subset without replacement; upsampling
    keeps every original point and fills the remainder with replacement, so
    every output point is a member of the input set.
    """
    cloud = geometry.as_cloud(cloud)
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    n = len(cloud)
    if n == n_target:
        return cloud.copy()
    if n > n_target:
        return cloud[rng.choice(n, size=n_target, replace=False)]
    extra = rng.choice(n, size=n_target - n, replace=True)
    return np.concatenate([cloud, cloud[extra]])


@dataclass(frozen=True)
class PairSpec:
    """Recipe for one benchmark pair.

    The source is the template rotated by exactly ``initial_angle_deg``
    about a random axis and translated by a vector with components i.i.d.
    uniform on ``[0, translation_bound)``. Both clouds are resampled to
    ``n_points``; by default with independent index draws (set
    ``independent_resample=False`` to keep exact correspondence for
    oracle-style checks).
    """

    initial_angle_deg: float
    translation_bound: float = 0.3
    seed: int = 0
    n_points: int = 1024
    independent_resample: bool = True

    def __post_init__(self):
        if not 0.0 <= self.initial_angle_deg <= 90.0:
            raise ValueError("initial_angle_deg must be in [0, 90]")
        if self.translation_bound < 0.0:
            raise ValueError("translation_bound must be >= 0")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")


def random_axis(rng: np.random.Generator) -> np.ndarray:
    """Unit vector uniform on the sphere (normalized Gaussian draw)."""
    while True:
        v = rng.normal(size=3)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return v / norm


def make_pair(template, spec: PairSpec) -> tuple[Points, Points, Mat4]:
    """Generate (template', source, ground truth) from a template cloud.

    The ground-truth transform maps the source onto the template (the
    inverse of the perturbation that created the source), so estimates from
    any solver compare against it directly. The template is used as given;
    compose with :func:`normalize_unit_cube` beforehand for the standard
    protocol.
    """
    template = geometry.as_cloud(template)
    rng = np.random.default_rng(spec.seed)
    axis = random_axis(rng)
    angle = math.radians(spec.initial_angle_deg)
    translation = rng.uniform(0.0, spec.translation_bound, size=3) if spec.translation_bound else np.zeros(3)
    perturb = geometry.exp(np.concatenate([axis * angle, np.zeros(3)]))
    perturb[:3, 3] = translation
    source_full = geometry.apply(perturb, template)

    if spec.independent_resample:
        template_out = resample(template, spec.n_points, rng)
        source_out = resample(source_full, spec.n_points, rng)
    else:
        # Same-seeded fresh rngs so both clouds pick identical indices and
        # exact correspondence survives the resampling.
        template_out = resample(template, spec.n_points, np.random.default_rng(spec.seed + 1))
        source_out = resample(source_full, spec.n_points, np.random.default_rng(spec.seed + 1))
    return template_out, source_out, geometry.inverse(perturb)


# ---------------------------------------------------------------------------
# Synthetic shapes (desk-scale corpora)
# ---------------------------------------------------------------------------

SHAPE_KINDS = ("sphere", "box", "torus", "helix", "blob")


def synthetic_shape(kind: str, n: int, seed: int = 0) -> Points:
    """Vertices of a simple parametric shape, for tests and demo corpora."""
    rng = np.random.default_rng(seed)
    if kind == "sphere":
        points = rng.normal(size=(n, 3))
        return points / np.linalg.norm(points, axis=1, keepdims=True)
    if kind == "box":
        points = rng.uniform(-1.0, 1.0, size=(n, 3))
        axis = rng.integers(0, 3, size=n)
        points[np.arange(n), axis] = np.sign(points[np.arange(n), axis] + 1e-9)
        return points
    if kind == "torus":
        u = rng.uniform(0.0, 2.0 * np.pi, size=n)
        v = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r_major, r_minor = 1.0, 0.35
        return np.column_stack(
            [
                (r_major + r_minor * np.cos(v)) * np.cos(u),
                (r_major + r_minor * np.cos(v)) * np.sin(u),
                r_minor * np.sin(v),
            ]
        )
    if kind == "helix":
        t = rng.uniform(0.0, 6.0 * np.pi, size=n)
        return np.column_stack([np.cos(t), np.sin(t), t / (3.0 * np.pi) - 1.0])
    if kind == "blob":
        centers = rng.uniform(-1.0, 1.0, size=(4, 3))
        assign = rng.integers(0, 4, size=n)
        return centers[assign] + 0.25 * rng.normal(size=(n, 3))
    raise ValueError(f"unknown shape kind: {kind!r}; known: {SHAPE_KINDS}")


def write_synthetic_corpus(directory, count: int = 8, vertices: int = 512, seed: int = 0) -> list[Path]:
    """Write ``count`` synthetic OFF meshes into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        kind = SHAPE_KINDS[i % len(SHAPE_KINDS)]
        cloud = synthetic_shape(kind, vertices, seed=seed + i)
        path = directory / f"{kind}_{i:03d}.off"
        write_off(path, cloud)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Weight blob
# ---------------------------------------------------------------------------

BLOB_MAGIC = b"PNWB"
BLOB_VERSION = (1, 0)
_WIDTH_CODES = {32: 0, 64: 1}
_CODE_WIDTHS = {v: k for k, v in _WIDTH_CODES.items()}
_WIDTH_DTYPES = {32: "<f4", 64: "<f8"}


class WeightBlobError(ValueError):
    """Malformed weight blob (bad magic, truncation, garbage fields)."""


class WeightBlobChecksumError(WeightBlobError):
    """Trailing CRC-32 does not match the blob contents."""


class WeightBlobDimensionError(WeightBlobError):
    """Layer dimension chain does not match the expected network."""


class WeightBlobVersionError(WeightBlobError):
    """Blob written by an incompatible (newer major) format version."""


@dataclass(frozen=True)
class WeightBlobMeta:
    """Header fields of a parsed blob."""

    version: tuple[int, int]
    width_bits: int
    qformat_n: int


def build_weight_blob(params: PointNetParams, *, width_bits: int = 64, qformat_n: int = 0) -> bytes:
    """Serialize parameters into the little-endian blob layout.

    ``qformat_n`` declares the fixed-point half-width the consumer should
    run the network in; 0 means the float pipeline. Values are stored at
    ``width_bits`` (32 or 64) in network order: for each layer, FC weight
    row-major, FC bias, BN weight, BN bias, BN mean, BN variance, epsilon.
    A CRC-32 of everything preceding it closes the blob.
    """
    if width_bits not in _WIDTH_CODES:
        raise ValueError(f"width_bits must be one of {sorted(_WIDTH_CODES)}")
    if qformat_n < 0:
        raise ValueError("qformat_n must be >= 0")
    dtype = np.dtype(_WIDTH_DTYPES[width_bits])
    parts = [
        BLOB_MAGIC,
        struct.pack("<HHBBH", *BLOB_VERSION, _WIDTH_CODES[width_bits], qformat_n, len(params.layers)),
    ]
    for layer in params.layers:
        parts.append(struct.pack("<II", layer.in_features, layer.out_features))
        for array in (layer.weight, layer.bias, layer.bn_weight, layer.bn_bias, layer.bn_mean, layer.bn_var):
            parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
        parts.append(np.array([layer.epsilon], dtype=dtype).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def parse_weight_blob(blob: bytes) -> tuple[PointNetParams, WeightBlobMeta]:
    """Parse a blob back into parameters, validating structure and checksum."""
    if len(blob) < 16:
        raise WeightBlobError("blob too short for header and checksum")
    if blob[:4] != BLOB_MAGIC:
        raise WeightBlobError(f"bad magic {blob[:4]!r}")
    (declared_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != declared_crc:
        raise WeightBlobChecksumError("CRC-32 mismatch")
    major, minor, width_code, qformat_n, layer_count = struct.unpack("<HHBBH", blob[4:12])
    if major > BLOB_VERSION[0]:
        raise WeightBlobVersionError(f"cannot read major version {major}")
    if width_code not in _CODE_WIDTHS:
        raise WeightBlobError(f"unknown width code {width_code}")
    width_bits = _CODE_WIDTHS[width_code]
    dtype = np.dtype(_WIDTH_DTYPES[width_bits])
    if layer_count != len(LAYER_DIMS):
        raise WeightBlobDimensionError(f"expected {len(LAYER_DIMS)} layers, got {layer_count}")

    offset = 12
    end = len(blob) - 4

    def take(count: int) -> np.ndarray:
        nonlocal offset
        nbytes = count * dtype.itemsize
        if offset + nbytes > end:
            raise WeightBlobError("blob truncated inside a layer record")
        out = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).astype(np.float64)
        offset += nbytes
        return out

    layers = []
    for expected_k, expected_l in LAYER_DIMS:
        if offset + 8 > end:
            raise WeightBlobError("blob truncated at a layer header")
        k, l = struct.unpack_from("<II", blob, offset)
        offset += 8
        if (k, l) != (expected_k, expected_l):
            raise WeightBlobDimensionError(
                f"layer dims ({k}, {l}) do not match expected ({expected_k}, {expected_l})"
            )
        weight = take(k * l).reshape(l, k)
        bias, bn_weight, bn_bias, bn_mean, bn_var = (take(l) for _ in range(5))
        epsilon = float(take(1)[0])
        layers.append(
            LayerParams(
                weight=weight,
                bias=bias,
                bn_weight=bn_weight,
                bn_bias=bn_bias,
                bn_mean=bn_mean,
                bn_var=bn_var,
                epsilon=epsilon,
            )
        )
    if offset != end:
        raise WeightBlobError(f"{end - offset} trailing bytes after last layer")
    meta = WeightBlobMeta(version=(major, minor), width_bits=width_bits, qformat_n=qformat_n)
    return PointNetParams(layers=tuple(layers)), meta


def write_weights(path, params: PointNetParams, *, width_bits: int = 64, qformat_n: int = 0) -> None:
    Path(path).write_bytes(build_weight_blob(params, width_bits=width_bits, qformat_n=qformat_n))


def read_weights(path) -> tuple[PointNetParams, WeightBlobMeta]:
    return parse_weight_blob(Path(path).read_bytes())
