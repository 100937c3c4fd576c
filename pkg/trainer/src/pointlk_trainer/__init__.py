"""Toy-scale trainer for the pointlk registration toolkit.

Trains the five-layer point feature network inside the alignment loop and
exports weight blobs plus golden fixtures through the documented file
formats.
"""

from .model import PointFeatureNet
from .train import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = ["PointFeatureNet", "TrainConfig", "TrainResult", "train"]
