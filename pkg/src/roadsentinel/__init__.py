"""Roadside speed enforcement: tracking, homography speed estimation, plate identity and SMS tickets."""

from .config import EngineConfig, load_config
from .engine import Engine, run_stream
from .geometry import BBox, Homography, Quad, anchor_of, estimate_homography, iou, transform_point
from .speed import Calibration, SpeedParams, SpeedPolicy, assign_speed

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Calibration",
    "Engine",
    "EngineConfig",
    "Homography",
    "Quad",
    "SpeedParams",
    "SpeedPolicy",
    "anchor_of",
    "assign_speed",
    "estimate_homography",
    "iou",
    "load_config",
    "run_stream",
    "transform_point",
]
