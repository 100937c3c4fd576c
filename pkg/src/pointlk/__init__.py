"""Point cloud registration toolkit.

A feature-space Lucas-Kanade solver over a streaming PointNet extractor, a
brute-force ICP baseline, bit-accurate fixed-point emulation of the
accelerator arithmetic, an analytic pipeline latency/resource model, and a
benchmark CLI (``pointlk-bench``).
"""

from .geometry import (
    IllConditionedRotationError,
    apply,
    compose,
    exp,
    inverse,
    log,
    registration_error,
    wedge,
)
from .icp import IcpConfig, IcpResult, icp_register
from .lk import LkConfig, LkResult, register
from .pointnet import LayerParams, PointNetParams, global_feature, random_params
from .fixedpoint import QFormat, quantized_global_feature

__version__ = "0.1.0"

__all__ = [
    "IllConditionedRotationError",
    "IcpConfig",
    "IcpResult",
    "LayerParams",
    "LkConfig",
    "LkResult",
    "PointNetParams",
    "QFormat",
    "apply",
    "compose",
    "exp",
    "global_feature",
    "icp_register",
    "inverse",
    "log",
    "quantized_global_feature",
    "random_params",
    "register",
    "registration_error",
    "wedge",
]
