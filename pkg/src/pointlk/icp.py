"""Point-to-point ICP baseline with brute-force correspondence search.

Correspondences are found by an exhaustive O(N^2) scan on purpose: this
baseline exists for complexity comparisons against the feature-space solver,
and a spatial index would change the claim under test. The per-pair rigid
fit is the classical centroid + covariance SVD solution with a reflection
guard.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Mat4

_NN_CHUNK = 256


class DegenerateGeometryError(ValueError):
    """Point pairs do not constrain a unique rigid transform."""


class IcpAbortError(RuntimeError):
    """Iteration hit a degenerate correspondence set."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class IcpConfig:
    """Iteration cap, MSE-change stop tolerance, and correspondence mode.

    The tolerance default is small enough that the iteration cap is
    normally the binding limit. Only brute-force correspondences are
    implemented; the field exists so configs are explicit about it.
    """

    max_iterations: int = 20
    mse_change_tol: float = 1e-8
    correspondence: str = "brute-force"

    def validate(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.correspondence != "brute-force":
            raise ValueError(f"unsupported correspondence mode: {self.correspondence!r}")


@dataclass(frozen=True)
class IcpResult:
    """Outcome of one ICP run; residuals are per-iteration MSE values."""

    transform: Mat4
    iterations_used: int
    residual_history: tuple[float, ...]
    converged: bool
    phase_seconds: dict[str, float]


def nearest_neighbors(source, template) -> tuple[np.ndarray, np.ndarray]:
    """Index of the closest template point for every source point.

    Exhaustive scan over all pairs; ties resolve to the lowest template
    index. Returns (indices, squared distances). Chunked over source rows
    to bound the size of the distance block held in memory.
    """
    source = geometry.as_cloud(source)
    template = geometry.as_cloud(template)
    template_sq = np.einsum("ij,ij->i", template, template)
    indices = np.empty(len(source), dtype=np.int64)
    sq_dists = np.empty(len(source), dtype=np.float64)
    for start in range(0, len(source), _NN_CHUNK):
        block = source[start : start + _NN_CHUNK]
        # ||s - t||^2 = ||s||^2 - 2 s.t + ||t||^2, one row per source point.
        d2 = (
            np.einsum("ij,ij->i", block, block)[:, None]
            - 2.0 * block @ template.T
            + template_sq[None, :]
        )
        best = np.argmin(d2, axis=1)
        indices[start : start + len(block)] = best
        sq_dists[start : start + len(block)] = np.maximum(d2[np.arange(len(block)), best], 0.0)
    return indices, sq_dists


def best_fit_transform(src, dst) -> Mat4:
    """Least-squares rigid transform mapping paired ``src`` onto ``dst``.

    Centroid subtraction, 3x3 covariance SVD, and a determinant correction
    so the result is always a proper rotation even when the pairing is a
    reflection. Collinear or near-collinear pairs leave a rotation
    direction unconstrained and raise :class:`DegenerateGeometryError`.
    """
    src = geometry.as_cloud(src)
    dst = geometry.as_cloud(dst)
    if src.shape != dst.shape:
        raise ValueError(f"paired clouds must match in shape: {src.shape} vs {dst.shape}")
    if len(src) < 3:
        raise DegenerateGeometryError("need at least 3 point pairs")
    # Canonical pair order makes the floating-point accumulation, and hence
    # the result, exactly invariant to a common permutation of the pairs.
    order = np.lexsort((dst[:, 2], dst[:, 1], dst[:, 0], src[:, 2], src[:, 1], src[:, 0]))
    src = src[order]
    dst = dst[order]
    src_centroid = src.mean(axis=0)
    dst_centroid = dst.mean(axis=0)
    covariance = (src - src_centroid).T @ (dst - dst_centroid)
    u, sigma, vt = np.linalg.svd(covariance)
    if sigma[1] <= 1e-10 * max(sigma[0], 1e-300):
        raise DegenerateGeometryError("point pairs are collinear or coincident")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    out = np.eye(4)
    out[:3, :3] = rotation
    out[:3, 3] = dst_centroid - rotation @ src_centroid
    return out


def icp_register(template, source, cfg: IcpConfig | None = None) -> IcpResult:
    """Classical ICP loop: correspondences, closed-form fit, apply, repeat.

    Each iteration records the post-fit MSE against the correspondences it
    used; that sequence is non-increasing. The loop stops when one
    iteration improves the MSE by less than the tolerance, or at the cap.
    """
    cfg = cfg or IcpConfig()
    cfg.validate()
    template = geometry.as_cloud(template)
    source = geometry.as_cloud(source)

    phase = {"nn_search": 0.0, "fit": 0.0, "transform": 0.0}
    transform = np.eye(4)
    current = source
    history: list[float] = []
    converged = False
    iterations = 0
    for iteration in range(1, cfg.max_iterations + 1):
        iterations = iteration
        t0 = time.perf_counter()
        indices, sq_dists = nearest_neighbors(current, template)
        phase["nn_search"] += time.perf_counter() - t0
        mse_before = float(sq_dists.mean())

        t0 = time.perf_counter()
        try:
            increment = best_fit_transform(current, template[indices])
        except DegenerateGeometryError as exc:
            raise IcpAbortError(iteration, str(exc)) from exc
        phase["fit"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        current = geometry.apply(increment, current)
        transform = geometry.compose(increment, transform)
        phase["transform"] += time.perf_counter() - t0

        gap = current - template[indices]
        mse_after = float(np.einsum("ij,ij->i", gap, gap).mean())
        history.append(mse_after)
        if mse_before - mse_after < cfg.mse_change_tol:
            converged = True
            break

    return IcpResult(
        transform=transform,
        iterations_used=iterations,
        residual_history=tuple(history),
        converged=converged,
        phase_seconds=phase,
    )
