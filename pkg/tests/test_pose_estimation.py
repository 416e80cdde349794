import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_skeleton, rotation_z, wrap
from safe_imitation.pose_estimation import (
    ANGLE_NAMES,
    DegenerateLimbError,
    FrameConstructionError,
    PoseAngles,
    build_torso_frame,
    estimate_pose,
    write_angles_csv,
)
from safe_imitation.scenarios import skeleton_from_joints
from safe_imitation.skeleton_stream import KEYPOINTS, SkeletonFrame


def _upright(**overrides):
    pts = {
        "pelvis": [0, 0, 0], "l_shoulder": [-0.2, 0, 0.5], "r_shoulder": [0.2, 0, 0.5],
        "l_elbow": [-0.2, 0, 0.2], "r_elbow": [0.2, 0, 0.2], "l_wrist": [-0.2, 0, -0.05],
        "r_wrist": [0.2, 0, -0.05], "l_hip": [-0.1, 0, 0], "r_hip": [0.1, 0, 0],
        "l_knee": [-0.1, 0, -0.4], "r_knee": [0.1, 0, -0.4],
    }
    pts.update(overrides)
    return SkeletonFrame(0.0, np.array([pts[k] for k in KEYPOINTS], dtype=float))


def oracle_pose(frame):
    """Independent evaluation of the angle formulas from raw keypoints."""
    P = {k: frame[k] for k in KEYPOINTS}
    z = P["l_shoulder"] + P["r_shoulder"] - 2 * P["pelvis"]
    z = z / np.sqrt(z @ z)
    # Gram-Schmidt through a QR factorization of [z, shoulder line]
    Q, R = np.linalg.qr(np.column_stack([z, P["r_shoulder"] - P["l_shoulder"]]))
    x = Q[:, 1] * np.sign(R[1, 1])
    y = np.array([z[1] * x[2] - z[2] * x[1], z[2] * x[0] - z[0] * x[2], z[0] * x[1] - z[1] * x[0]])
    k = np.array([0.0, 0.0, 1.0])
    tilt = np.array([-z[1], z[0], 0.0])  # k x z
    out = [np.arctan2(-(y @ tilt), k @ z), np.arctan2(-(x @ tilt), k @ z)]
    for side, roll_sign in (("l", -1.0), ("r", 1.0)):
        u = P[f"{side}_elbow"] - P[f"{side}_shoulder"]
        f = P[f"{side}_wrist"] - P[f"{side}_elbow"]
        ux, uy, uz = u @ x, u @ y, u @ z
        c = (u @ f) / np.sqrt((u @ u) * (f @ f))
        out += [np.arctan2(uy, -uz), np.arctan2(roll_sign * ux, -uz), np.arccos(min(1.0, max(-1.0, c)))]
    return np.array(out)


def test_upright_frame_axes():
    T = build_torso_frame(_upright())
    np.testing.assert_allclose(T.e_z, [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(T.e_x, [1, 0, 0], atol=1e-15)
    R = T.rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.cross(T.e_x, T.e_y), T.e_z, atol=1e-12)


def test_yawed_frame_rotates_lateral_axis():
    Rz = rotation_z(np.pi / 2)
    frame = _upright()
    T = build_torso_frame(SkeletonFrame(0.0, frame.positions @ Rz.T))
    np.testing.assert_allclose(T.e_z, [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(T.e_x, Rz @ [1, 0, 0], atol=1e-15)


def test_degenerate_torso():
    with pytest.raises(FrameConstructionError):
        build_torso_frame(_upright(pelvis=[0, 0, 0.5]))
    # shoulder line along the torso axis
    with pytest.raises(FrameConstructionError):
        build_torso_frame(_upright(l_shoulder=[0, 0, 0.3], r_shoulder=[0, 0, 0.7]))


def test_degenerate_limb_named():
    with pytest.raises(DegenerateLimbError) as err:
        estimate_pose(_upright(r_wrist=[0.2, 0, 0.2]))
    assert err.value.limb == "r_forearm"


def test_neutral_pose_is_zero():
    theta = estimate_pose(_upright())
    np.testing.assert_allclose(theta.as_array(), 0.0, atol=1e-15)


def test_random_poses_match_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        frame = random_skeleton(rng)
        got = estimate_pose(frame).as_array()
        np.testing.assert_allclose(wrap(got - oracle_pose(frame)), 0.0, atol=1e-9)


@pytest.mark.parametrize("index,value", [
    (0, 0.3), (0, -0.25), (1, 0.4), (1, -0.3),
    (2, 0.8), (3, 0.6), (4, 1.2), (5, -0.7), (6, 1.1), (7, 0.5),
])
def test_single_joint_motion_recovered(index, value):
    # the synthetic demonstrator is built with the robot's kinematic conventions
    q = np.zeros(8)
    q[index] = value
    theta = estimate_pose(skeleton_from_joints(0.0, q)).as_array()
    np.testing.assert_allclose(theta, q, atol=1e-12)


def test_sign_conventions():
    # forward is e_y = e_z x e_x, i.e. +y of the camera for the upright fixture
    fwd = _upright(l_elbow=[-0.2, 0.3, 0.5], l_wrist=[-0.2, 0.55, 0.5])
    assert estimate_pose(fwd).l_sh_pitch == pytest.approx(np.pi / 2)
    out_l = _upright(l_elbow=[-0.5, 0, 0.5], l_wrist=[-0.75, 0, 0.5])
    out_r = _upright(r_elbow=[0.5, 0, 0.5], r_wrist=[0.75, 0, 0.5])
    assert estimate_pose(out_l).l_sh_roll == pytest.approx(np.pi / 2)
    assert estimate_pose(out_r).r_sh_roll == pytest.approx(np.pi / 2)
    # leaning forward tips e_z toward +y: positive pitch; leaning left (toward -x): positive roll
    lean_fwd = _upright(l_shoulder=[-0.2, 0.2, 0.45], r_shoulder=[0.2, 0.2, 0.45])
    lean_left = _upright(l_shoulder=[-0.4, 0, 0.45], r_shoulder=[0.0, 0, 0.45])
    assert estimate_pose(lean_fwd).torso_pitch > 0.3
    assert estimate_pose(lean_left).torso_roll > 0.3


def _scaled(frame, s):
    p = frame["pelvis"]
    return SkeletonFrame(frame.t, p + s * (frame.positions - p))


def _mirrored(frame):
    T = build_torso_frame(frame)
    rel = frame.positions - T.origin
    ref = frame.positions - 2.0 * np.outer(rel @ T.e_x, T.e_x)
    swap = [KEYPOINTS.index(k.replace("l_", "#").replace("r_", "l_").replace("#", "r_")) for k in KEYPOINTS]
    return SkeletonFrame(frame.t, ref[swap])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 20.0))
def test_scale_invariance(seed, s):
    frame = random_skeleton(np.random.default_rng(seed))
    a = estimate_pose(frame).as_array()
    b = estimate_pose(_scaled(frame, s)).as_array()
    np.testing.assert_allclose(wrap(a - b), 0.0, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi))
def test_yaw_invariance(seed, yaw):
    frame = random_skeleton(np.random.default_rng(seed))
    rotated = SkeletonFrame(frame.t, frame.positions @ rotation_z(yaw).T)
    a = estimate_pose(frame).as_array()
    b = estimate_pose(rotated).as_array()
    np.testing.assert_allclose(wrap(a - b), 0.0, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mirror_swaps_sides(seed):
    frame = random_skeleton(np.random.default_rng(seed))
    a = estimate_pose(frame)
    b = estimate_pose(_mirrored(frame))
    expected = np.array([a.torso_roll, a.torso_pitch, a.r_sh_pitch, a.r_sh_roll, a.r_el,
                         a.l_sh_pitch, a.l_sh_roll, a.l_el])
    np.testing.assert_allclose(wrap(b.as_array() - expected), 0.0, atol=1e-9)


def test_elbow_rigid_invariance():
    from helpers import random_rotation
    rng = np.random.default_rng(5)
    for _ in range(100):
        frame = random_skeleton(rng)
        R = random_rotation(rng)
        moved = SkeletonFrame(0.0, frame.positions @ R.T + rng.normal(size=3))
        a, b = estimate_pose(frame), estimate_pose(moved)
        assert abs(a.l_el - b.l_el) < 1e-9 and abs(a.r_el - b.r_el) < 1e-9
        assert 0.0 <= a.l_el <= np.pi and 0.0 <= a.r_el <= np.pi


def test_angles_csv(tmp_path):
    path = tmp_path / "angles.csv"
    write_angles_csv(path, [(0.0, PoseAngles()), (0.1, PoseAngles(l_el=0.5))])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", *ANGLE_NAMES]
    assert len(rows) == 3 and float(rows[2][1 + ANGLE_NAMES.index("l_el")]) == 0.5
