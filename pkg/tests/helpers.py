"""Random inputs shared by the test modules."""

import numpy as np

from safe_imitation.skeleton_stream import KEYPOINTS, SkeletonFrame


def rotation_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def _unit(v):
    return v / np.linalg.norm(v)


def random_skeleton(rng, t=0.0):
    """A plausible but randomized skeleton: tilted torso, arbitrary arm directions."""
    pelvis = rng.uniform(-2, 2, size=3) + np.array([0, 0, 1.0])
    up = _unit(np.array([0, 0, 1.0]) + rng.normal(scale=0.3, size=3))
    lateral = rng.normal(size=3)
    lateral = _unit(lateral - (lateral @ up) * up)
    torso_len = rng.uniform(0.3, 0.6)
    half_width = rng.uniform(0.1, 0.25)
    center = pelvis + torso_len * up
    # a small skew so the shoulder line is not exactly perpendicular to the torso axis
    skew = rng.normal(scale=0.05) * up
    l_sh = center - half_width * lateral - skew
    r_sh = center + half_width * lateral + skew
    pts = {"pelvis": pelvis, "l_shoulder": l_sh, "r_shoulder": r_sh}
    for side, sh in (("l", l_sh), ("r", r_sh)):
        elbow = sh + rng.uniform(0.2, 0.35) * _unit(rng.normal(size=3))
        pts[f"{side}_elbow"] = elbow
        pts[f"{side}_wrist"] = elbow + rng.uniform(0.2, 0.3) * _unit(rng.normal(size=3))
        sign = -1 if side == "l" else 1
        hip = pelvis + sign * rng.uniform(0.05, 0.12) * lateral
        pts[f"{side}_hip"] = hip
        pts[f"{side}_knee"] = hip - rng.uniform(0.3, 0.5) * _unit(up + rng.normal(scale=0.2, size=3))
    return SkeletonFrame(t, np.array([pts[k] for k in KEYPOINTS]))


def wrap(a):
    """Map angles to (-pi, pi] so branch-cut neighbours compare equal."""
    return np.angle(np.exp(1j * np.asarray(a)))
