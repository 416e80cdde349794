"""Upper-body humanoid kinematics and the seven-capsule body models.

Robot frame: origin at the (fixed) pelvis, x forward, y left, z up. Joint
axes are chosen so that a positive joint value moves the body the same way a
positive pose angle of the same name does (see ``pose_estimation``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision_geometry import Capsule
from .retargeting import N_JOINTS
from .skeleton_stream import SkeletonFrame

BODY_NAMES = ("torso", "l_upper_arm", "r_upper_arm", "l_forearm", "r_forearm", "l_thigh", "r_thigh")

# Bodies sharing a joint point always overlap; they are never paired.
ADJACENT_BODIES = frozenset(
    frozenset(p)
    for p in [
        ("l_upper_arm", "l_forearm"),
        ("r_upper_arm", "r_forearm"),
        ("torso", "l_upper_arm"),
        ("torso", "r_upper_arm"),
        ("torso", "l_thigh"),
        ("torso", "r_thigh"),
    ]
)


class DegenerateCapsuleError(ValueError):
    def __init__(self, body: str):
        super().__init__(f"degenerate capsule segment: {body}")
        self.body = body


def _default_radii():
    return {
        "torso": 0.12,
        "l_upper_arm": 0.05,
        "r_upper_arm": 0.05,
        "l_forearm": 0.05,
        "r_forearm": 0.05,
        "l_thigh": 0.08,
        "r_thigh": 0.08,
    }


@dataclass(frozen=True)
class RobotGeometry:
    torso_height: float = 0.45
    upper_arm: float = 0.28
    forearm: float = 0.25
    thigh: float = 0.40
    shoulder_offset: float = 0.20  # lateral, at the top of the torso
    hip_offset: float = 0.04  # lateral, at the pelvis
    radii: dict = field(default_factory=_default_radii)

    def __post_init__(self):
        for name in ("torso_height", "upper_arm", "forearm", "thigh", "shoulder_offset"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.hip_offset < 0:
            raise ValueError("hip_offset must be non-negative")
        missing = set(BODY_NAMES) - set(self.radii)
        if missing:
            raise ValueError(f"missing capsule radii for {sorted(missing)}")
        if any(not self.radii[b] > 0 for b in BODY_NAMES):
            raise ValueError("capsule radii must be positive")

    def link_length(self, body: str) -> float:
        return {
            "torso": self.torso_height,
            "upper_arm": self.upper_arm,
            "forearm": self.forearm,
            "thigh": self.thigh,
        }[body.split("_", 1)[-1] if body != "torso" else "torso"]


@dataclass(frozen=True)
class CapsuleSet:
    capsules: dict
    body_tag: str

    def __post_init__(self):
        if tuple(self.capsules) != BODY_NAMES:
            raise ValueError(f"capsule set must contain exactly {BODY_NAMES}")
        if self.body_tag not in ("robot", "human"):
            raise ValueError("body_tag must be 'robot' or 'human'")

    def __getitem__(self, name: str) -> Capsule:
        return self.capsules[name]

    def __iter__(self):
        return iter(self.capsules.items())


@dataclass(frozen=True)
class EndpointJacobian:
    body: str
    end: str  # "a" (proximal) or "b" (distal)
    matrix: np.ndarray  # (3, 8)


def _rot(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


_X, _Y = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])

# (joint index, link it moves, axis in the parent frame); consecutive joints on
# one link share an origin.
_CHAINS = {
    "torso": [(0, -_X), (1, _Y)],
    "l_upper": [(2, -_Y), (3, _X)],
    "l_fore": [(4, -_Y)],
    "r_upper": [(5, -_Y), (6, -_X)],
    "r_fore": [(7, -_Y)],
}
_PARENT = {"torso": "pelvis", "l_upper": "torso", "l_fore": "l_upper",
           "r_upper": "torso", "r_fore": "r_upper"}

BODY_LINK = {
    "torso": "torso",
    "l_upper_arm": "l_upper",
    "r_upper_arm": "r_upper",
    "l_forearm": "l_fore",
    "r_forearm": "r_fore",
    "l_thigh": "pelvis",
    "r_thigh": "pelvis",
}


class RobotKinematics:
    """Link frames, joint axes and point Jacobians at one configuration."""

    def __init__(self, q, geo: RobotGeometry):
        q = np.asarray(q, dtype=float)
        if q.shape != (N_JOINTS,) or not np.all(np.isfinite(q)):
            raise ValueError("q must be a finite 8-vector")
        self.q = q
        self.geo = geo
        g = geo
        offsets = {
            "torso": np.zeros(3),
            "l_upper": np.array([0.0, g.shoulder_offset, g.torso_height]),
            "r_upper": np.array([0.0, -g.shoulder_offset, g.torso_height]),
            "l_fore": np.array([0.0, 0.0, -g.upper_arm]),
            "r_fore": np.array([0.0, 0.0, -g.upper_arm]),
        }
        self.R = {"pelvis": np.eye(3)}
        self.origin = {"pelvis": np.zeros(3)}
        self.joint_axis = np.zeros((N_JOINTS, 3))
        self.joint_origin = np.zeros((N_JOINTS, 3))
        self.chain = {"pelvis": []}
        for link in ("torso", "l_upper", "l_fore", "r_upper", "r_fore"):
            parent = _PARENT[link]
            R = self.R[parent]
            o = self.origin[parent] + R @ offsets[link]
            joints = list(self.chain[parent])
            for idx, axis in _CHAINS[link]:
                self.joint_axis[idx] = R @ axis
                self.joint_origin[idx] = o
                R = R @ _rot(axis, q[idx])
                joints.append(idx)
            self.R[link] = R
            self.origin[link] = o
            self.chain[link] = joints

    def to_world(self, link: str, local) -> np.ndarray:
        return self.origin[link] + self.R[link] @ np.asarray(local, dtype=float)

    def point_jacobian(self, link: str, p) -> np.ndarray:
        """Position Jacobian (3, 8) of a point rigidly attached to ``link``."""
        J = np.zeros((3, N_JOINTS))
        for idx in self.chain[link]:
            J[:, idx] = np.cross(self.joint_axis[idx], p - self.joint_origin[idx])
        return J

    def local_endpoints(self, body: str) -> tuple[np.ndarray, np.ndarray]:
        g = self.geo
        if body == "torso":
            return np.zeros(3), np.array([0.0, 0.0, g.torso_height])
        if body.endswith("upper_arm"):
            return np.zeros(3), np.array([0.0, 0.0, -g.upper_arm])
        if body.endswith("forearm"):
            return np.zeros(3), np.array([0.0, 0.0, -g.forearm])
        side = 1.0 if body == "l_thigh" else -1.0
        hip = np.array([0.0, side * g.hip_offset, 0.0])
        return hip, hip + np.array([0.0, 0.0, -g.thigh])

    def capsules(self) -> CapsuleSet:
        caps = {}
        for body in BODY_NAMES:
            link = BODY_LINK[body]
            a, b = self.local_endpoints(body)
            caps[body] = Capsule(self.to_world(link, a), self.to_world(link, b), self.geo.radii[body])
        return CapsuleSet(caps, "robot")

    def endpoint_jacobians(self, caps: CapsuleSet | None = None) -> dict:
        """Map ``(body, "a" | "b")`` to the 3x8 endpoint Jacobian."""
        caps = caps or self.capsules()
        out = {}
        for body in BODY_NAMES:
            link = BODY_LINK[body]
            out[(body, "a")] = self.point_jacobian(link, caps[body].a)
            out[(body, "b")] = self.point_jacobian(link, caps[body].b)
        return out

    def body_rotation(self, body: str) -> np.ndarray:
        """Orientation whose third column is the capsule axis (a -> b)."""
        R = self.R[BODY_LINK[body]]
        if body == "torso":
            return R
        # arm and thigh capsules run along local -z
        return R @ np.diag([1.0, -1.0, -1.0])


def robot_fk(q, geo: RobotGeometry) -> CapsuleSet:
    return RobotKinematics(q, geo).capsules()


def robot_endpoint_jacobians(q, geo: RobotGeometry) -> list[EndpointJacobian]:
    jac = RobotKinematics(q, geo).endpoint_jacobians()
    return [EndpointJacobian(body, end, J) for (body, end), J in jac.items()]


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9) \
                or not np.isclose(np.linalg.det(R), 1.0, atol=1e-9):
            raise ValueError("rotation must be a proper rotation matrix")
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(yaw), np.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.asarray(translation, float))

    def apply(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float) @ self.rotation.T + self.translation


_HUMAN_SEGMENTS = {
    "l_upper_arm": ("l_shoulder", "l_elbow"),
    "r_upper_arm": ("r_shoulder", "r_elbow"),
    "l_forearm": ("l_elbow", "l_wrist"),
    "r_forearm": ("r_elbow", "r_wrist"),
    "l_thigh": ("l_hip", "l_knee"),
    "r_thigh": ("r_hip", "r_knee"),
}


def human_capsules(frame: SkeletonFrame, radii: dict, T: RigidTransform | None = None) -> CapsuleSet:
    """Seven capsules from a (filtered) skeleton, mapped into the robot frame by ``T``."""
    T = T or RigidTransform()
    ends = {"torso": (frame["pelvis"], 0.5 * (frame["l_shoulder"] + frame["r_shoulder"]))}
    for body, (p, d) in _HUMAN_SEGMENTS.items():
        ends[body] = (frame[p], frame[d])
    caps = {}
    for body in BODY_NAMES:
        a, b = ends[body]
        if np.linalg.norm(b - a) <= 1e-9:
            raise DegenerateCapsuleError(body)
        caps[body] = Capsule(T.apply(a), T.apply(b), radii[body])
    return CapsuleSet(caps, "human")
