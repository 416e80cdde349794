import numpy as np
import pytest

from helpers import random_skeleton
from safe_imitation.retargeting import DEFAULT_Q_MAX, DEFAULT_Q_MIN
from safe_imitation.robot_model import (
    BODY_NAMES,
    CapsuleSet,
    DegenerateCapsuleError,
    RigidTransform,
    RobotGeometry,
    RobotKinematics,
    human_capsules,
    robot_endpoint_jacobians,
    robot_fk,
)
from safe_imitation.scenarios import skeleton_from_joints
from safe_imitation.skeleton_stream import SkeletonFrame

GEO = RobotGeometry()
RADII = GEO.radii


def random_q(rng):
    return rng.uniform(DEFAULT_Q_MIN, DEFAULT_Q_MAX)


def test_home_endpoints_by_hand():
    caps = robot_fk(np.zeros(8), GEO)
    g = GEO
    np.testing.assert_allclose(caps["torso"].b, [0, 0, g.torso_height])
    np.testing.assert_allclose(caps["l_forearm"].b, [0, g.shoulder_offset, g.torso_height - g.upper_arm - g.forearm])
    np.testing.assert_allclose(caps["r_forearm"].b, [0, -g.shoulder_offset, g.torso_height - g.upper_arm - g.forearm])
    np.testing.assert_allclose(caps["l_thigh"].b, [0, g.hip_offset, -g.thigh])


def test_elbow_right_angle():
    q = np.zeros(8)
    q[4] = np.pi / 2
    caps = robot_fk(q, GEO)
    g = GEO
    elbow = np.array([0, g.shoulder_offset, g.torso_height - g.upper_arm])
    np.testing.assert_allclose(caps["l_forearm"].a, elbow, atol=1e-15)
    # elbow flexion swings the forearm forward (+x)
    np.testing.assert_allclose(caps["l_forearm"].b, elbow + [g.forearm, 0, 0], atol=1e-15)
    up = caps["l_upper_arm"].b - caps["l_upper_arm"].a
    fore = caps["l_forearm"].b - caps["l_forearm"].a
    assert abs(up @ fore) < 1e-15


def test_joint_directions():
    def tip(idx, value, body):
        q = np.zeros(8)
        q[idx] = value
        return robot_fk(q, GEO)[body].b

    assert tip(2, 0.5, "l_upper_arm")[0] > 0  # shoulder pitch raises forward
    assert tip(5, 0.5, "r_upper_arm")[0] > 0
    assert tip(3, 0.5, "l_upper_arm")[1] > GEO.shoulder_offset  # roll abducts outward
    assert tip(6, 0.5, "r_upper_arm")[1] < -GEO.shoulder_offset
    assert tip(1, 0.3, "torso")[0] > 0  # waist pitch leans forward
    assert tip(0, 0.3, "torso")[1] > 0  # waist roll leans left


def _torso_points(caps):
    bodies = ("l_upper_arm", "r_upper_arm", "l_forearm", "r_forearm")
    return np.array([caps["torso"].b] + [getattr(caps[b], e) for b in bodies for e in "ab"])


def test_waist_roll_is_rigid():
    delta = 0.37
    q = np.zeros(8)
    q[0] = delta
    before = _torso_points(robot_fk(np.zeros(8), GEO))
    after = _torso_points(robot_fk(q, GEO))
    # roll axis is -x through the pelvis
    c, s = np.cos(delta), np.sin(delta)
    R = np.array([[1, 0, 0], [0, c, s], [0, -s, c]])
    np.testing.assert_allclose(after, before @ R.T, atol=1e-12)
    d0 = np.linalg.norm(before[:, None] - before[None], axis=-1)
    d1 = np.linalg.norm(after[:, None] - after[None], axis=-1)
    np.testing.assert_allclose(d0, d1, atol=1e-12)


def test_segment_lengths_and_shared_elbow():
    rng = np.random.default_rng(1)
    for _ in range(200):
        caps = robot_fk(random_q(rng), GEO)
        for body in BODY_NAMES:
            assert caps[body].length == pytest.approx(GEO.link_length(body), abs=1e-9)
        for side in "lr":
            assert np.linalg.norm(caps[f"{side}_forearm"].a - caps[f"{side}_upper_arm"].b) < 1e-9


def test_jacobian_sparsity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        jac = {(j.body, j.end): j.matrix for j in robot_endpoint_jacobians(random_q(rng), GEO)}
        for end in "ab":
            assert np.all(jac[("torso", end)][:, 2:] == 0)
            assert np.all(jac[("l_thigh", end)] == 0) and np.all(jac[("r_thigh", end)] == 0)
            assert np.all(jac[("l_forearm", end)][:, 5:] == 0)
            assert np.all(jac[("r_upper_arm", end)][:, 2:5] == 0)


def fd_endpoint_jacobians(q, eps=1e-6):
    out = {}
    for i in range(8):
        dq = np.zeros(8)
        dq[i] = eps
        plus, minus = robot_fk(q + dq, GEO), robot_fk(q - dq, GEO)
        for body in BODY_NAMES:
            for end in "ab":
                col = (getattr(plus[body], end) - getattr(minus[body], end)) / (2 * eps)
                out.setdefault((body, end), np.zeros((3, 8)))[:, i] = col
    return out


def test_jacobians_match_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = random_q(rng)
        analytic = RobotKinematics(q, GEO).endpoint_jacobians()
        numeric = fd_endpoint_jacobians(q)
        for key, J in analytic.items():
            err = np.linalg.norm(J - numeric[key])
            assert err <= 1e-5 * max(np.linalg.norm(J), 1e-3), key


def test_left_joints_do_not_move_right_side():
    rng = np.random.default_rng(4)
    q = random_q(rng)
    q2 = q.copy()
    q2[2:5] += 0.3
    a, b = robot_fk(q, GEO), robot_fk(q2, GEO)
    for body in ("torso", "r_upper_arm", "r_forearm", "r_thigh", "l_thigh"):
        assert np.array_equal(a[body].a, b[body].a) and np.array_equal(a[body].b, b[body].b)


def test_geometry_validation():
    with pytest.raises(ValueError):
        RobotGeometry(upper_arm=0.0)
    with pytest.raises(ValueError):
        RobotGeometry(radii={"torso": 0.1})
    with pytest.raises(ValueError):
        RobotKinematics(np.zeros(7), GEO)


def test_capsule_set_requires_all_bodies():
    caps = robot_fk(np.zeros(8), GEO).capsules
    with pytest.raises(ValueError):
        CapsuleSet({k: v for k, v in caps.items() if k != "torso"}, "robot")


# --- human capsules ----------------------------------------------------------

def test_identity_transform_uses_raw_keypoints():
    frame = skeleton_from_joints(0.0, np.zeros(8))
    caps = human_capsules(frame, RADII)
    assert caps.body_tag == "human"
    np.testing.assert_array_equal(caps["l_forearm"].a, frame["l_elbow"])
    np.testing.assert_array_equal(caps["r_thigh"].b, frame["r_knee"])
    np.testing.assert_allclose(caps["torso"].b, 0.5 * (frame["l_shoulder"] + frame["r_shoulder"]))


def _all_points(caps):
    return np.array([p for _, c in caps for p in (c.a, c.b)])


def test_translation_and_yaw_are_isometries():
    rng = np.random.default_rng(6)
    frame = random_skeleton(rng)
    base = _all_points(human_capsules(frame, RADII))
    shifted = _all_points(human_capsules(frame, RADII, RigidTransform(translation=[1.0, -2.0, 0.5])))
    np.testing.assert_allclose(shifted - base, np.tile([1.0, -2.0, 0.5], (len(base), 1)), atol=1e-12)
    yawed = human_capsules(frame, RADII, RigidTransform.from_yaw(np.pi / 2))
    orig = human_capsules(frame, RADII)
    for body in BODY_NAMES:
        assert yawed[body].length == pytest.approx(orig[body].length, abs=1e-12)


def test_degenerate_human_segment():
    frame = skeleton_from_joints(0.0, np.zeros(8))
    pos = frame.positions.copy()
    pos[5] = pos[3]  # l_elbow onto l_shoulder
    with pytest.raises(DegenerateCapsuleError):
        human_capsules(SkeletonFrame(0.0, pos), RADII)


def test_rigid_transform_rejects_reflection():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))
