"""Minimal OFF ingestion plus cloud preparation for training.

Independent of the consumer package on purpose: the ASCII OFF format and
the documented preprocessing (unit-cube normalization, seeded resampling)
are the interface between the two components.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_off(path) -> np.ndarray:
    tokens: list[str] = []
    for line in Path(path).read_text().splitlines():
        content = line.split("#", 1)[0].strip()
        if content:
            tokens.extend(content.split())
    if not tokens or not tokens[0].startswith("OFF"):
        raise ValueError(f"{path}: missing OFF header")
    if tokens[0] != "OFF":  # counts glued to the header keyword
        tokens[0] = tokens[0][3:]
    else:
        tokens = tokens[1:]
    n_vertices = int(tokens[0])
    vertices = np.array(tokens[3 : 3 + 3 * n_vertices], dtype=np.float64)
    if vertices.size != 3 * n_vertices:
        raise ValueError(f"{path}: truncated vertex list")
    return vertices.reshape(n_vertices, 3)


def write_off(path, cloud: np.ndarray) -> None:
    cloud = np.asarray(cloud, dtype=np.float64)
    with open(path, "w") as handle:
        handle.write("OFF\n")
        handle.write(f"{len(cloud)} 0 0\n")
        for x, y, z in cloud:
            handle.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def normalize_unit_cube(cloud: np.ndarray) -> np.ndarray:
    cloud = np.asarray(cloud, dtype=np.float64)
    lo = cloud.min(axis=0)
    extent = cloud.max(axis=0) - lo
    longest = float(extent.max())
    if longest == 0.0:
        return np.full_like(cloud, 0.5)
    out = (cloud - lo) / longest
    out[:, extent == 0.0] = 0.5
    return out


def resample(cloud: np.ndarray, n_target: int, rng: np.random.Generator) -> np.ndarray:
    n = len(cloud)
    if n == n_target:
        return cloud.copy()
    if n > n_target:
        return cloud[rng.choice(n, size=n_target, replace=False)]
    extra = rng.choice(n, size=n_target - n, replace=True)
    return np.concatenate([cloud, cloud[extra]])


def load_corpus(directory) -> list[np.ndarray]:
    paths = sorted(Path(directory).glob("*.off"))
    if not paths:
        raise FileNotFoundError(f"no .off meshes in {directory}")
    return [read_off(p) for p in paths]


def make_toy_corpus(directory, count: int = 6, vertices: int = 256, seed: int = 0) -> list[Path]:
    """Small self-contained synthetic corpus for tests and demos."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        kind = i % 3
        if kind == 0:  # sphere shell
            cloud = rng.normal(size=(vertices, 3))
            cloud /= np.linalg.norm(cloud, axis=1, keepdims=True)
        elif kind == 1:  # box surface
            cloud = rng.uniform(-1.0, 1.0, size=(vertices, 3))
            axis = rng.integers(0, 3, size=vertices)
            cloud[np.arange(vertices), axis] = np.sign(cloud[np.arange(vertices), axis] + 1e-9)
        else:  # twisted band
            t = rng.uniform(0.0, 4.0 * np.pi, size=vertices)
            cloud = np.column_stack([np.cos(t), np.sin(t), 0.25 * np.sin(2.0 * t)])
            cloud += 0.05 * rng.normal(size=(vertices, 3))
        path = directory / f"toy_{i:02d}.off"
        write_off(path, cloud)
        paths.append(path)
    return paths
