"""Synthetic demonstrator streams.

The demonstrator is a kinematic body with the same joint structure as the
robot, driven through scripted joint-angle profiles and expressed in the
camera frame: pelvis at ``PELVIS_HEIGHT`` above the floor, facing +y, with
its right side toward +x and +z up. Every scenario starts with at least one
second of neutral pose for calibration.
"""

from __future__ import annotations

import numpy as np

from .robot_model import RigidTransform, RobotGeometry, RobotKinematics
from .skeleton_stream import KEYPOINTS, SkeletonFrame

PELVIS_HEIGHT = 0.95
HUMAN_GEOMETRY = RobotGeometry(hip_offset=0.09)

# Body model coordinates are x forward, y left; the camera convention is x right, y forward.
_BODY_TO_CAMERA = RigidTransform.from_yaw(np.pi / 2, (0.0, 0.0, PELVIS_HEIGHT))


def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def _ramp(t, start, end):
    return _smootherstep((t - start) / (end - start))


def _joints(l_sh_pitch=0.0, l_sh_roll=0.0, l_el=0.0, r_sh_pitch=0.0, r_sh_roll=0.0, r_el=0.0,
            torso_roll=0.0, torso_pitch=0.0):
    return np.array([torso_roll, torso_pitch, l_sh_pitch, l_sh_roll, l_el, r_sh_pitch, r_sh_roll, r_el])


NEUTRAL = _joints()
CROSS_TARGET = _joints(l_sh_pitch=0.95, l_sh_roll=-0.7, l_el=1.1,
                       r_sh_pitch=0.75, r_sh_roll=-0.7, r_el=1.1)
RAISE_TARGET = _joints(r_sh_roll=1.45)


def _neutral_hold(t):
    return NEUTRAL


def _cross_arm_reach(t):
    """Reach both forearms across the chest, hold, then return."""
    w = _ramp(t, 1.0, 2.6) - _ramp(t, 3.6, 5.0)
    return NEUTRAL + w * (CROSS_TARGET - NEUTRAL)


def _side_by_side_arm_raise(t):
    """Lateral raise of the right arm, the side facing the robot, then hold."""
    return NEUTRAL + _ramp(t, 1.0, 2.5) * (RAISE_TARGET - NEUTRAL)


SCENARIOS = {
    "neutral-hold": _neutral_hold,
    "cross-arm-reach": _cross_arm_reach,
    "side-by-side-arm-raise": _side_by_side_arm_raise,
}

# Where each demonstrator stands in the robot frame: yaw and translation of
# the camera -> robot transform. Cross-arm and neutral: 2 m in front, facing
# the robot. Side-by-side: to the robot's right, facing the other way, so the
# raised right arm points at the robot.
DEFAULT_PLACEMENT = {
    "neutral-hold": (np.pi / 2, (2.0, 0.0, -PELVIS_HEIGHT)),
    "cross-arm-reach": (np.pi / 2, (2.0, 0.0, -PELVIS_HEIGHT)),
    "side-by-side-arm-raise": (np.pi / 2, (0.0, -1.25, 0.08 - PELVIS_HEIGHT)),
}


def default_transform(name: str) -> RigidTransform:
    yaw, translation = DEFAULT_PLACEMENT[name]
    return RigidTransform.from_yaw(yaw, translation)


def skeleton_from_joints(t: float, q) -> SkeletonFrame:
    caps = RobotKinematics(q, HUMAN_GEOMETRY).capsules()
    points = {
        "pelvis": caps["torso"].a,
        "l_shoulder": caps["l_upper_arm"].a,
        "r_shoulder": caps["r_upper_arm"].a,
        "l_elbow": caps["l_upper_arm"].b,
        "r_elbow": caps["r_upper_arm"].b,
        "l_wrist": caps["l_forearm"].b,
        "r_wrist": caps["r_forearm"].b,
        "l_hip": caps["l_thigh"].a,
        "r_hip": caps["r_thigh"].a,
        "l_knee": caps["l_thigh"].b,
        "r_knee": caps["r_thigh"].b,
    }
    body = np.array([points[name] for name in KEYPOINTS])
    return SkeletonFrame(t, _BODY_TO_CAMERA.apply(body))


def generate(name: str, duration: float, rate: float, noise: float = 0.0,
             outlier_rate: float = 0.0, seed: int | None = None) -> list[SkeletonFrame]:
    """Sample a scenario at ``rate`` Hz for ``duration`` seconds.

    ``noise`` adds isotropic Gaussian jitter (meters) to every keypoint and
    ``outlier_rate`` replaces that fraction of keypoints with 1 m glitches;
    both draw from a generator seeded with ``seed``.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; valid names: {', '.join(sorted(SCENARIOS))}")
    if not duration > 0 or not rate > 0:
        raise ValueError("duration and rate must be positive")
    profile = SCENARIOS[name]
    n = int(round(duration * rate))
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        t = i / rate
        frame = skeleton_from_joints(t, profile(t))
        if noise > 0 or outlier_rate > 0:
            pos = frame.positions.copy()
            if noise > 0:
                pos += rng.normal(scale=noise, size=pos.shape)
            if outlier_rate > 0:
                hit = rng.random(len(pos)) < outlier_rate
                glitch = rng.normal(size=(len(pos), 3))
                glitch /= np.linalg.norm(glitch, axis=1, keepdims=True)
                pos[hit] += glitch[hit]
            frame = SkeletonFrame(t, pos)
        frames.append(frame)
    return frames
