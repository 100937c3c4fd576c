"""SE(3) twists, rigid transforms, and registration error metrics.

Conventions (see docs/conventions.md):

* twists are 6-vectors ordered ``[wx, wy, wz, tx, ty, tz]`` with the
  rotation components first (radians) and the translation last
  (point-cloud units);
* rigid transforms are 4x4 homogeneous matrices acting on column vectors;
* point clouds are ``(N, 3)`` float64 arrays.

All functions are pure and never mutate their inputs, so they are safe to
call concurrently.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

Mat3 = NDArray[np.float64]
Mat4 = NDArray[np.float64]
Vec3 = NDArray[np.float64]
Twist = NDArray[np.float64]
Points = NDArray[np.float64]

# Drift tolerance for the orthonormality / determinant invariants of a
# rigid transform's rotation block.
ORTHONORMALITY_TOL = 1e-9

# Below this rotation angle the closed-form coefficients switch to their
# Taylor expansions to avoid 0/0.
_SMALL_ANGLE = 1e-8

# log() refuses rotations closer than this (radians) to the pi singularity,
# where the axis extraction is ill-conditioned. 179.9999 degrees is inside
# the margin.
_PI_MARGIN = 1e-5


class IllConditionedRotationError(ValueError):
    """Rotation angle too close to pi for a well-conditioned log map."""


def as_twist(xi) -> Twist:
    """Validate and return ``xi`` as a float64 6-vector."""
    out = np.asarray(xi, dtype=np.float64).reshape(-1)
    if out.shape != (6,):
        raise ValueError(f"twist must have 6 components, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("twist components must be finite")
    return out


def as_cloud(points) -> Points:
    """Validate and return ``points`` as an (N, 3) float64 array, N >= 1."""
    out = np.asarray(points, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != 3 or out.shape[0] < 1:
        raise ValueError(f"point cloud must have shape (N, 3) with N >= 1, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("point coordinates must be finite")
    return out


def require_rigid(g, tol: float = ORTHONORMALITY_TOL) -> Mat4:
    """Validate a 4x4 homogeneous rigid transform.

    Checks the exact ``[0, 0, 0, 1]`` bottom row, orthonormality of the
    rotation block, and ``det(R) = +1``, each within ``tol``.
    """
    out = np.asarray(g, dtype=np.float64)
    if out.shape != (4, 4):
        raise ValueError(f"rigid transform must be 4x4, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("rigid transform entries must be finite")
    if not np.array_equal(out[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError("rigid transform bottom row must be exactly [0, 0, 0, 1]")
    r = out[:3, :3]
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        raise ValueError("rotation block is not orthonormal within tolerance")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("rotation block determinant must be +1")
    return out


def skew(w) -> Mat3:
    """Skew-symmetric matrix ``[w]x`` such that ``[w]x p = w x p``."""
    x, y, z = (float(v) for v in np.asarray(w, dtype=np.float64).reshape(3))
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def wedge(xi) -> Mat4:
    """Map a 6-vector twist to its 4x4 Lie-algebra matrix.

    The rotation components fill the top-left block as a skew-symmetric
    matrix, the translation components fill the top-right column, and the
    bottom row is zero.
    """
    xi = as_twist(xi)
    out = np.zeros((4, 4))
    out[:3, :3] = skew(xi[:3])
    out[:3, 3] = xi[3:]
    return out


def _rotation_coefficients(theta: float) -> tuple[float, float, float]:
    """Coefficients (a, b, c) with R = I + aK + bK^2 and V = I + bK + cK^2."""
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    t2 = theta * theta
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / t2
    c = (theta - math.sin(theta)) / (t2 * theta)
    return a, b, c


def exp(xi) -> Mat4:
    """Exponential map from a twist to a rigid transform (closed form)."""
    xi = as_twist(xi)
    w, v = xi[:3], xi[3:]
    theta = float(np.linalg.norm(w))
    k = skew(w)
    k2 = k @ k
    a, b, c = _rotation_coefficients(theta)
    out = np.eye(4)
    out[:3, :3] = np.eye(3) + a * k + b * k2
    out[:3, 3] = (np.eye(3) + b * k + c * k2) @ v
    return out


def log(g) -> Twist:
    """Inverse of :func:`exp`; valid for rotation angles below pi.

    Raises :class:`IllConditionedRotationError` within ``1e-6`` of the pi
    singularity, where the rotation axis is not recoverable stably.
    """
    g = require_rigid(g)
    r = g[:3, :3]
    cos_theta = min(1.0, max(-1.0, (np.trace(r) - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if math.pi - theta < _PI_MARGIN:
        raise IllConditionedRotationError(
            f"rotation angle {math.degrees(theta):.4f} deg is within the pi singularity margin"
        )
    axis_times_two_sin = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < _SMALL_ANGLE:
        w = 0.5 * axis_times_two_sin
    else:
        w = (theta / (2.0 * math.sin(theta))) * axis_times_two_sin
    k = skew(w)
    k2 = k @ k
    if theta < _SMALL_ANGLE:
        v_inv = np.eye(3) - 0.5 * k + k2 / 12.0
    else:
        a, b, _ = _rotation_coefficients(theta)
        v_inv = np.eye(3) - 0.5 * k + ((1.0 - a / (2.0 * b)) / (theta * theta)) * k2
    out = np.empty(6)
    out[:3] = w
    out[3:] = v_inv @ g[:3, 3]
    return out


def apply(g, cloud) -> Points:
    """Apply a rigid transform to every point: ``p -> R p + t``."""
    g = require_rigid(g)
    cloud = as_cloud(cloud)
    return cloud @ g[:3, :3].T + g[:3, 3]


def compose(a, b) -> Mat4:
    """Matrix product ``a @ b``, re-orthonormalized if drift exceeds tolerance.

    Long products accumulate floating-point drift in the rotation block;
    when the orthonormality error exceeds ``ORTHONORMALITY_TOL`` the block
    is projected back to the nearest rotation via SVD.
    """
    a = require_rigid(a)
    b = require_rigid(b)
    out = a @ b
    r = out[:3, :3]
    if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHONORMALITY_TOL:
        u, _, vt = np.linalg.svd(r)
        d = np.sign(np.linalg.det(u @ vt))
        out[:3, :3] = u @ np.diag([1.0, 1.0, d]) @ vt
    out[3] = [0.0, 0.0, 0.0, 1.0]
    return out


def inverse(g) -> Mat4:
    """Inverse of a rigid transform, computed from the (R, t) structure."""
    g = require_rigid(g)
    out = np.eye(4)
    rt = g[:3, :3].T
    out[:3, :3] = rt
    out[:3, 3] = -rt @ g[:3, 3]
    return out


def rotation_angle_deg(r: Mat3) -> float:
    """Angle of a rotation matrix in degrees, from its trace."""
    cos_theta = min(1.0, max(-1.0, (float(np.trace(r)) - 1.0) / 2.0))
    return math.degrees(math.acos(cos_theta))


def registration_error(gt, est, rotation_metric: str = "relative-angle") -> tuple[float, float]:
    """Rotational (degrees) and translational error between two transforms.

    The default rotation metric is the angle of the relative rotation
    ``R_gt^T R_est``; ``"chordal"`` instead derives the angle from the
    Frobenius distance between the rotation blocks (equivalent for exact
    rotations, less sensitive to clipping near 0 and 180 degrees). The
    translational error is ``||t_est - t_gt||``. Both are >= 0 and invariant
    to pre-composing the same transform onto both arguments.
    """
    gt = require_rigid(gt)
    est = require_rigid(est)
    if rotation_metric == "relative-angle":
        rot_err = rotation_angle_deg(gt[:3, :3].T @ est[:3, :3])
    elif rotation_metric == "chordal":
        fro = float(np.linalg.norm(gt[:3, :3] - est[:3, :3]))
        rot_err = math.degrees(2.0 * math.asin(min(1.0, fro / (2.0 * math.sqrt(2.0)))))
    else:
        raise ValueError(f"unknown rotation metric: {rotation_metric!r}")
    trans_err = float(np.linalg.norm(est[:3, 3] - gt[:3, 3]))
    return rot_err, trans_err
