"""The five-layer point feature network in PyTorch.

Matches the consumer's architecture exactly: Linear + BatchNorm1d + ReLU
per layer over the 3-64-64-64-128-1024 chain, element-wise max over points,
zero-initialized running maximum (equivalent to clamping the max at zero
since activations are ReLU outputs).
"""

from __future__ import annotations

import torch
from torch import nn

LAYER_DIMS = ((3, 64), (64, 64), (64, 64), (64, 128), (128, 1024))


class PointFeatureNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.linears = nn.ModuleList(nn.Linear(k, l) for k, l in LAYER_DIMS)
        self.norms = nn.ModuleList(nn.BatchNorm1d(l) for _, l in LAYER_DIMS)

    def pointwise(self, points: torch.Tensor) -> torch.Tensor:
        """Per-point local features, (N, 3) -> (N, 1024)."""
        x = points
        for linear, norm in zip(self.linears, self.norms):
            x = torch.relu(norm(linear(x)))
        return x

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        """Global feature of one cloud, (N, 3) -> (1024,)."""
        return self.pointwise(points).max(dim=0).values.clamp(min=0.0)
