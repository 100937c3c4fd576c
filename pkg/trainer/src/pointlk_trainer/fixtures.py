"""Golden-vector export: cloud, feature, Jacobian, and one-step twist.

The fixture bundle lets the consumer package verify, through files alone,
that its float pipeline reproduces the trainer's reference values: the
global feature of a fixture cloud, the finite-difference Jacobian of that
cloud as a template (shared step), and the first twist solved for a fixture
pair. All reference values are computed in float64 from the exported
(width-rounded) parameters.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
import torch

from . import se3
from .model import PointFeatureNet

FIXTURE_SCHEMA = "pnlk-fixtures-v1"


def _double_eval_copy(model: PointFeatureNet) -> PointFeatureNet:
    clone = copy.deepcopy(model).double()
    clone.eval()
    return clone


def _jacobian(model: PointFeatureNet, template: torch.Tensor, step: float) -> torch.Tensor:
    phi = model(template)
    columns = []
    for i in range(6):
        xi = torch.zeros(6, dtype=template.dtype)
        xi[i] = -step
        warped = se3.transform_points(se3.exp(xi), template)
        columns.append((model(warped) - phi) / step)
    return torch.stack(columns, dim=1)


def export_fixtures(
    model: PointFeatureNet,
    template: np.ndarray,
    source: np.ndarray,
    out_dir,
    *,
    blob_name: str,
    jacobian_step: float = 1e-2,
) -> Path:
    """Write the fixture bundle next to a manifest and return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reference = _double_eval_copy(model)
    template_t = torch.from_numpy(np.asarray(template, dtype=np.float64))
    source_t = torch.from_numpy(np.asarray(source, dtype=np.float64))

    with torch.no_grad():
        feature = reference(template_t)
        jacobian = _jacobian(reference, template_t, jacobian_step)
        residual = reference(source_t) - feature
        # Tight cutoff to mirror a rank-revealing least-squares solve.
        twist = torch.linalg.pinv(jacobian, rtol=1e-10) @ residual

    np.savetxt(out_dir / "template.csv", template, delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / "source.csv", source, delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / "feature.csv", feature.numpy(), delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / "jacobian.csv", jacobian.numpy(), delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / "twist.csv", twist.numpy(), delimiter=",", fmt="%.17g")

    manifest = {
        "schema": FIXTURE_SCHEMA,
        "blob": blob_name,
        "jacobian_step": jacobian_step,
        "files": {
            "template": "template.csv",
            "source": "source.csv",
            "feature": "feature.csv",
            "jacobian": "jacobian.csv",
            "twist": "twist.csv",
        },
        "tolerances": {"feature": 1e-5, "jacobian": 1e-4, "twist": 1e-4},
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path
