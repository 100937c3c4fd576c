"""Feature-space Lucas-Kanade rigid registration.

The solver aligns a source cloud onto a template by driving the difference
between their global features to zero. The feature Jacobian with respect to
the six twist directions is built once per registration by forward
differences on the template; each iteration then needs a single feature
evaluation of the current source, a pseudo-inverse twist solve, and a rigid
update. Iterations are sequential; separate registrations are independent.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry
from .geometry import Mat4, Points, Twist

FeatureFn = Callable[[Points], np.ndarray]


class FeatureDivergenceError(RuntimeError):
    """Feature extractor produced non-finite values mid-iteration."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class LkConfig:
    """Solver configuration.

    ``step`` is the finite-difference perturbation applied along each twist
    basis direction; a scalar applies uniformly, a 6-vector sets each
    direction individually. ``central_differences`` switches the Jacobian to
    central differences (two evaluations per direction) and is off by
    default.
    """

    feature_fn: FeatureFn
    max_iterations: int = 20
    step: float | np.ndarray = 1e-2
    convergence_tol: float = 1e-7
    central_differences: bool = False

    def steps(self) -> np.ndarray:
        out = np.broadcast_to(np.asarray(self.step, dtype=np.float64), (6,)).copy()
        if not np.all(out > 0.0):
            raise ValueError("perturbation steps must be > 0")
        return out

    def validate(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tol > 0.0:
            raise ValueError("convergence_tol must be > 0")
        self.steps()


@dataclass(frozen=True)
class JacobianResult:
    """Feature Jacobian plus the template feature it was built around."""

    matrix: np.ndarray
    template_feature: np.ndarray
    degenerate_template: bool


@dataclass(frozen=True)
class TwistSolution:
    """Minimum-norm least-squares twist with rank diagnostics."""

    xi: Twist
    rank: int
    rank_deficient: bool


@dataclass(frozen=True)
class LkResult:
    """Outcome of one registration run."""

    transform: Mat4
    iterations_used: int
    residual_history: tuple[float, ...]
    converged: bool
    phase_seconds: dict[str, float]
    feature_evaluations: int


def compute_jacobian(feature_fn: FeatureFn, template, cfg: LkConfig) -> JacobianResult:
    """Forward-difference feature Jacobian of the template, one column per
    twist direction.

    Column i is ``(phi(exp(-t_i e_i) . T) - phi(T)) / t_i``. An identically
    zero template feature cannot constrain any direction; it triggers a
    warning and a ``degenerate_template`` flag but the Jacobian is still
    returned.
    """
    template = geometry.as_cloud(template)
    steps = cfg.steps()
    base = np.asarray(feature_fn(template), dtype=np.float64)
    if not np.all(np.isfinite(base)):
        raise ValueError("template feature is not finite")
    degenerate = not np.any(base)
    if degenerate:
        warnings.warn("template feature is identically zero; Jacobian may be uninformative")
    columns = []
    for i in range(6):
        basis = np.zeros(6)
        basis[i] = steps[i]
        minus = np.asarray(feature_fn(geometry.apply(geometry.exp(-basis), template)))
        if cfg.central_differences:
            plus = np.asarray(feature_fn(geometry.apply(geometry.exp(basis), template)))
            columns.append((minus - plus) / (2.0 * steps[i]))
        else:
            columns.append((minus - base) / steps[i])
    return JacobianResult(
        matrix=np.column_stack(columns), template_feature=base, degenerate_template=degenerate
    )


def solve_twist(jacobian, residual, *, rcond: float = 1e-10) -> TwistSolution:
    """Minimum-norm least-squares solve ``xi = J^+ r`` via SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero; a rank
    below 6 (including the all-zero Jacobian, rank 0) sets the
    ``rank_deficient`` flag and the solution stays minimum-norm.
    """
    jacobian = np.asarray(jacobian, dtype=np.float64)
    residual = np.asarray(residual, dtype=np.float64)
    if not np.all(np.isfinite(jacobian)):
        raise ValueError("Jacobian must be finite")
    if jacobian.ndim != 2 or jacobian.shape[1] != 6:
        raise ValueError(f"Jacobian must have shape (K, 6), got {jacobian.shape}")
    u, sigma, vt = np.linalg.svd(jacobian, full_matrices=False)
    cutoff = rcond * (sigma[0] if sigma.size else 0.0)
    keep = sigma > cutoff
    rank = int(np.count_nonzero(keep))
    inv_sigma = np.where(keep, 1.0 / np.where(keep, sigma, 1.0), 0.0)
    xi = vt.T @ (inv_sigma * (u.T @ residual))
    return TwistSolution(xi=xi, rank=rank, rank_deficient=rank < 6)


def register(template, source, cfg: LkConfig) -> LkResult:
    """Iteratively align ``source`` onto ``template``.

    The Jacobian is computed once from the template (seven feature
    evaluations). Each iteration evaluates the current source feature,
    solves for a twist, applies the incremental transform to the source,
    and accumulates it into the result. Stops when the twist norm drops
    below the tolerance or the iteration cap is reached; not converging is
    an outcome, not an error.

    Phase timings are recorded for ``feature`` (all extractor calls,
    wherever they occur), ``jacobian`` (assembly excluding its feature
    calls), ``solve``, and ``transform``.
    """
    template = geometry.as_cloud(template)
    source = geometry.as_cloud(source)
    cfg.validate()

    phase = {"feature": 0.0, "jacobian": 0.0, "solve": 0.0, "transform": 0.0}
    evaluations = 0

    def timed_feature(cloud) -> np.ndarray:
        nonlocal evaluations
        t0 = time.perf_counter()
        out = np.asarray(cfg.feature_fn(cloud), dtype=np.float64)
        phase["feature"] += time.perf_counter() - t0
        evaluations += 1
        return out

    t0 = time.perf_counter()
    jac = compute_jacobian(timed_feature, template, cfg)
    phase["jacobian"] = (time.perf_counter() - t0) - phase["feature"]

    transform = np.eye(4)
    current = source
    residuals: list[float] = []
    converged = False
    iterations = 0
    for iteration in range(1, cfg.max_iterations + 1):
        iterations = iteration
        feature = timed_feature(current)
        if not np.all(np.isfinite(feature)):
            raise FeatureDivergenceError(iteration, "source feature is not finite")
        residual = feature - jac.template_feature
        residuals.append(float(np.linalg.norm(residual)))

        t0 = time.perf_counter()
        solution = solve_twist(jac.matrix, residual)
        phase["solve"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        increment = geometry.exp(solution.xi)
        current = geometry.apply(increment, current)
        transform = geometry.compose(increment, transform)
        phase["transform"] += time.perf_counter() - t0

        if float(np.linalg.norm(solution.xi)) < cfg.convergence_tol:
            converged = True
            break

    return LkResult(
        transform=transform,
        iterations_used=iterations,
        residual_history=tuple(residuals),
        converged=converged,
        phase_seconds=phase,
        feature_evaluations=evaluations,
    )
