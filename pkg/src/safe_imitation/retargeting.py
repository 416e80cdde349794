"""Affine joint-space retargeting with joint-limit clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pose_estimation import PoseAngles

# Same index order as the pose angles: torso roll/pitch drive the waist.
JOINT_NAMES = (
    "waist_roll",
    "waist_pitch",
    "l_sh_pitch",
    "l_sh_roll",
    "l_el",
    "r_sh_pitch",
    "r_sh_roll",
    "r_el",
)
N_JOINTS = len(JOINT_NAMES)

DEFAULT_Q_MIN = np.array([-0.6, -0.5, -1.5, -1.5, 0.0, -1.5, -1.5, 0.0])
DEFAULT_Q_MAX = np.array([0.6, 0.9, 3.0, 2.8, 2.5, 3.0, 2.8, 2.5])


class CalibrationError(ValueError):
    pass


def joint_vector(values=None, **named) -> np.ndarray:
    """Build an 8-vector in joint order, either positionally or by joint name."""
    q = np.zeros(N_JOINTS) if values is None else np.array(values, dtype=float).copy()
    if q.shape != (N_JOINTS,):
        raise ValueError(f"joint vector must have {N_JOINTS} entries, got shape {q.shape}")
    for name, value in named.items():
        q[JOINT_NAMES.index(name)] = value
    if not np.all(np.isfinite(q)):
        raise ValueError("joint vector entries must be finite")
    return q


def _vec(default):
    return field(default_factory=lambda: np.array(default, dtype=float))


@dataclass
class RetargetConfig:
    scale: np.ndarray = _vec(np.ones(N_JOINTS))
    offset: np.ndarray = _vec(np.zeros(N_JOINTS))
    q_home: np.ndarray = _vec(np.zeros(N_JOINTS))
    q_min: np.ndarray = _vec(DEFAULT_Q_MIN)
    q_max: np.ndarray = _vec(DEFAULT_Q_MAX)
    theta_home: PoseAngles = field(default_factory=PoseAngles)

    def __post_init__(self):
        for name in ("scale", "offset", "q_home", "q_min", "q_max"):
            setattr(self, name, joint_vector(getattr(self, name)))
        if np.any(self.q_min > self.q_home) or np.any(self.q_home > self.q_max):
            raise ValueError("joint limits must satisfy q_min <= q_home <= q_max")


def calibrate_home(frames: Sequence[PoseAngles]) -> PoseAngles:
    """Componentwise mean of a neutral-pose segment."""
    if len(frames) == 0:
        raise CalibrationError("cannot calibrate from an empty sequence")
    data = np.array([f.as_array() for f in frames])
    # mean of deviations from the first sample is exact for identical frames
    return PoseAngles.from_array(data[0] + (data - data[0]).mean(axis=0))


def retarget(theta: PoseAngles, cfg: RetargetConfig) -> np.ndarray:
    raw = cfg.q_home + cfg.scale * (theta.as_array() - cfg.theta_home.as_array()) + cfg.offset
    return np.clip(raw, cfg.q_min, cfg.q_max)
