"""Toy-scale training of the point feature network inside the
registration loop, from scratch (no transfer from a classifier).

Each training pair is a normalized mesh resampled to a fixed point count
and a source created by a random rigid perturbation whose twist norm stays
below the configured bound. The forward pass runs a small number of
feature-space alignment iterations (finite-difference Jacobian,
pseudo-inverse twist solve, incremental transform); the loss is the
Frobenius distance between the estimated and ground-truth transforms, and
gradients flow through the whole estimate.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import blob, offio, se3
from .model import PointFeatureNet


@dataclass
class TrainConfig:
    corpus_dir: str
    epochs: int = 50
    pairs_per_epoch: int = 16
    n_points: int = 96
    twist_bound: float = 0.8
    seed: int = 0
    learning_rate: float = 1e-3
    lk_iterations: int = 2
    jacobian_step: float = 1e-2
    export_path: str = "toy_weights.blob"
    metrics_path: str | None = None
    width_bits: int = 32
    qformat_n: int = 0
    eval_pairs: int = 8

    def validate(self) -> None:
        if self.twist_bound <= 0.0:
            raise ValueError("twist_bound must be > 0")
        if self.epochs < 1 or self.pairs_per_epoch < 1:
            raise ValueError("epochs and pairs_per_epoch must be >= 1")


@dataclass
class TrainResult:
    blob_path: Path
    # Mean loss of the (randomly drawn) training pairs per epoch; noisy.
    train_losses: list[float] = field(default_factory=list)
    # Mean loss on one fixed held-out pair set per epoch; comparable across
    # epochs, so this is the curve that shows learning.
    eval_losses: list[float] = field(default_factory=list)


def sample_pair(cloud: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """One training pair with exact correspondence and bounded twist."""
    template = offio.resample(offio.normalize_unit_cube(cloud), cfg.n_points, rng)
    direction = rng.normal(size=6)
    direction /= np.linalg.norm(direction)
    xi = direction * rng.uniform(0.0, cfg.twist_bound)
    perturb = se3.exp_np(xi)
    source = se3.apply_np(perturb, template)
    return template, source, se3.inverse_np(perturb)


def estimate_transform(
    model: PointFeatureNet,
    template: torch.Tensor,
    source: torch.Tensor,
    *,
    step: float,
    iterations: int,
    pinv_rtol: float = 1e-6,
    twist_cap: float = 1.5,
) -> torch.Tensor:
    """Differentiable alignment estimate mapping source onto template.

    The solved twist is norm-clamped before the exponential: with untrained
    features the pseudo-inverse can blow up, and unbounded increments both
    explode the loss and drag points far outside the data distribution.
    The clamp is a training aid only; the consumer's solver has none.
    """
    phi_template = model(template)
    columns = []
    for i in range(6):
        xi = torch.zeros(6, dtype=template.dtype)
        xi[i] = -step
        warped = se3.transform_points(se3.exp(xi), template)
        columns.append((model(warped) - phi_template) / step)
    jacobian = torch.stack(columns, dim=1)
    pinv = torch.linalg.pinv(jacobian, rtol=pinv_rtol)

    transform = torch.eye(4, dtype=template.dtype)
    current = source
    for _ in range(iterations):
        residual = model(current) - phi_template
        twist = pinv @ residual
        norm = torch.linalg.norm(twist)
        twist = twist * (twist_cap / norm).clamp(max=1.0)
        increment = se3.exp(twist)
        current = se3.transform_points(increment, current)
        transform = increment @ transform
    return transform


def train(cfg: TrainConfig) -> TrainResult:
    """Run the training loop and export the weight blob plus a metrics log."""
    cfg.validate()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    clouds = offio.load_corpus(cfg.corpus_dir)

    model = PointFeatureNet()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    eval_rng = np.random.default_rng(cfg.seed + 104729)
    held_out = [
        sample_pair(clouds[eval_rng.integers(len(clouds))], cfg, eval_rng)
        for _ in range(cfg.eval_pairs)
    ]

    def eval_loss() -> float:
        model.eval()
        with torch.no_grad():
            total = 0.0
            for template_np, source_np, gt_np in held_out:
                estimate = estimate_transform(
                    model,
                    torch.from_numpy(template_np).float(),
                    torch.from_numpy(source_np).float(),
                    step=cfg.jacobian_step,
                    iterations=cfg.lk_iterations,
                )
                total += float(((estimate - torch.from_numpy(gt_np).float()) ** 2).sum())
        model.train()
        return total / len(held_out)

    train_losses = []
    eval_losses = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        model.train()
        losses = []
        for _ in range(cfg.pairs_per_epoch):
            template_np, source_np, gt_np = sample_pair(
                clouds[rng.integers(len(clouds))], cfg, rng
            )
            template = torch.from_numpy(template_np).float()
            source = torch.from_numpy(source_np).float()
            gt = torch.from_numpy(gt_np).float()

            estimate = estimate_transform(
                model, template, source, step=cfg.jacobian_step, iterations=cfg.lk_iterations
            )
            loss = ((estimate - gt) ** 2).sum()
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            optimizer.step()
            losses.append(float(loss.detach()))
        train_losses.append(float(np.mean(losses)))
        eval_losses.append(eval_loss())

    model.eval()
    export = Path(cfg.export_path)
    export.parent.mkdir(parents=True, exist_ok=True)
    blob.write_blob(export, model, width_bits=cfg.width_bits, qformat_n=cfg.qformat_n)

    metrics_path = Path(cfg.metrics_path) if cfg.metrics_path else export.with_suffix(".metrics.json")
    metrics_path.write_text(
        json.dumps(
            {
                "epochs": cfg.epochs,
                "pairs_per_epoch": cfg.pairs_per_epoch,
                "seed": cfg.seed,
                "twist_bound": cfg.twist_bound,
                "train_losses": train_losses,
                "eval_losses": eval_losses,
                "wall_seconds": time.perf_counter() - t0,
            },
            indent=2,
        )
        + "\n"
    )
    return TrainResult(blob_path=export, train_losses=train_losses, eval_losses=eval_losses)
