"""Trajectory evaluation and experiment harness for SLAM robustness studies."""

__version__ = "0.1.0"

from .alignment import Alignment, apply_alignment, umeyama_align
from .datasets import load_manifest, load_trajectory, load_windows
from .errors import SlamEvalError
from .geometry import (AssociationPolicy, MatchedPairs, PoseSE3, Trajectory, associate, compose,
                       interpolate_pose, inverse, trajectory_length)
from .metrics import (AlignMode, CrtMode, MetricSeries, RpeDelta, aggregate_runs, ate,
                      continuous_monitor, crt, normalized_ate_rmse, rpe)

__all__ = [
    "Alignment", "AlignMode", "AssociationPolicy", "CrtMode", "MatchedPairs", "MetricSeries",
    "PoseSE3", "RpeDelta", "SlamEvalError", "Trajectory", "aggregate_runs", "apply_alignment",
    "associate", "ate", "compose", "continuous_monitor", "crt", "interpolate_pose", "inverse",
    "load_manifest", "load_trajectory", "load_windows", "normalized_ate_rmse", "rpe", "trajectory_length", "umeyama_align",
]
