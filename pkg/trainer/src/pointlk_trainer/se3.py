"""Differentiable SE(3) exponential map and small numpy helpers.

Twists follow the toolkit convention documented in the main package
(docs/conventions.md): ``[wx, wy, wz, tx, ty, tz]``, rotation first.
"""

from __future__ import annotations

import numpy as np
import torch

_SMALL = 1e-6


def skew(w: torch.Tensor) -> torch.Tensor:
    zero = torch.zeros((), dtype=w.dtype, device=w.device)
    rows = [
        torch.stack([zero, -w[2], w[1]]),
        torch.stack([w[2], zero, -w[0]]),
        torch.stack([-w[1], w[0], zero]),
    ]
    return torch.stack(rows)


def exp(xi: torch.Tensor) -> torch.Tensor:
    """Closed-form exponential of one 6-vector twist, autograd safe.

    Near zero rotation the Rodrigues coefficients switch to Taylor
    expansions computed on a clamped angle so no branch produces NaN
    gradients.
    """
    w, v = xi[:3], xi[3:]
    theta_sq = (w * w).sum()
    theta = torch.sqrt(theta_sq.clamp(min=1e-30))
    small = theta < _SMALL

    safe = theta.clamp(min=_SMALL)
    a = torch.where(small, 1.0 - theta_sq / 6.0, torch.sin(safe) / safe)
    b = torch.where(small, 0.5 - theta_sq / 24.0, (1.0 - torch.cos(safe)) / (safe * safe))
    c = torch.where(
        small, 1.0 / 6.0 - theta_sq / 120.0, (safe - torch.sin(safe)) / (safe * safe * safe)
    )

    k = skew(w)
    k2 = k @ k
    eye = torch.eye(3, dtype=xi.dtype, device=xi.device)
    rotation = eye + a * k + b * k2
    translation = (eye + b * k + c * k2) @ v

    out = torch.eye(4, dtype=xi.dtype, device=xi.device)
    out = torch.cat(
        [
            torch.cat([rotation, translation.unsqueeze(1)], dim=1),
            out[3:4],
        ],
        dim=0,
    )
    return out


def transform_points(g: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """Apply a 4x4 transform to an (N, 3) point tensor."""
    return points @ g[:3, :3].T + g[:3, 3]


# Numpy-side helpers for pair synthesis (no gradients involved).


def exp_np(xi: np.ndarray) -> np.ndarray:
    return exp(torch.from_numpy(np.asarray(xi, dtype=np.float64))).numpy()


def inverse_np(g: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    rt = g[:3, :3].T
    out[:3, :3] = rt
    out[:3, 3] = -rt @ g[:3, 3]
    return out


def apply_np(g: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ g[:3, :3].T + g[:3, 3]


def rotation_error_deg(a: np.ndarray, b: np.ndarray) -> float:
    relative = a[:3, :3].T @ b[:3, :3]
    cos = min(1.0, max(-1.0, (float(np.trace(relative)) - 1.0) / 2.0))
    return float(np.degrees(np.arccos(cos)))
