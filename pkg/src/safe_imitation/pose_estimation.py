"""Torso frame construction and the eight closed-form pose angles.

Axis convention, used artifact-wide for the human body:

* ``e_z``: torso up, pelvis -> shoulder center
* ``e_x``: lateral, left shoulder -> right shoulder, orthogonalized against ``e_z``
* ``e_y``: forward, ``e_z x e_x`` so that ``e_x x e_y = e_z``

With this convention positive shoulder pitch raises the arm forward, positive
shoulder roll abducts either arm away from the body, positive torso pitch
leans forward and positive torso roll leans to the left.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from typing import Iterable

import numpy as np

from .skeleton_stream import SkeletonFrame

DEGENERATE_LENGTH = 1e-6
UP = np.array([0.0, 0.0, 1.0])

ANGLE_NAMES = (
    "torso_roll",
    "torso_pitch",
    "l_sh_pitch",
    "l_sh_roll",
    "l_el",
    "r_sh_pitch",
    "r_sh_roll",
    "r_el",
)


class FrameConstructionError(ValueError):
    pass


class DegenerateLimbError(ValueError):
    def __init__(self, limb: str):
        super().__init__(f"degenerate limb vector: {limb}")
        self.limb = limb


@dataclass(frozen=True)
class TorsoFrame:
    origin: np.ndarray
    e_x: np.ndarray
    e_y: np.ndarray
    e_z: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        """Columns are the torso axes expressed in the camera frame."""
        return np.column_stack([self.e_x, self.e_y, self.e_z])

    def to_local(self, v: np.ndarray) -> np.ndarray:
        return self.rotation.T @ v


@dataclass(frozen=True)
class LimbVectors:
    u_l: np.ndarray
    u_r: np.ndarray
    f_l: np.ndarray
    f_r: np.ndarray


@dataclass(frozen=True)
class PoseAngles:
    torso_roll: float = 0.0
    torso_pitch: float = 0.0
    l_sh_pitch: float = 0.0
    l_sh_roll: float = 0.0
    l_el: float = 0.0
    r_sh_pitch: float = 0.0
    r_sh_roll: float = 0.0
    r_el: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "PoseAngles":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(ANGLE_NAMES),):
            raise ValueError(f"expected {len(ANGLE_NAMES)} angles, got shape {values.shape}")
        return cls(*(float(v) for v in values))


assert tuple(f.name for f in fields(PoseAngles)) == ANGLE_NAMES


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = np.linalg.norm(v)
    if n <= DEGENERATE_LENGTH:
        raise FrameConstructionError(f"degenerate torso geometry: {what}")
    return v / n


def build_torso_frame(frame: SkeletonFrame) -> TorsoFrame:
    pelvis = frame["pelvis"]
    left, right = frame["l_shoulder"], frame["r_shoulder"]
    e_z = _unit(0.5 * (left + right) - pelvis, "pelvis coincides with shoulder center")
    line = right - left
    e_x = _unit(line - (line @ e_z) * e_z, "shoulder line parallel to torso axis")
    e_y = np.cross(e_z, e_x)
    return TorsoFrame(pelvis.copy(), e_x, e_y, e_z)


def limb_vectors(frame: SkeletonFrame) -> LimbVectors:
    limbs = LimbVectors(
        u_l=frame["l_elbow"] - frame["l_shoulder"],
        u_r=frame["r_elbow"] - frame["r_shoulder"],
        f_l=frame["l_wrist"] - frame["l_elbow"],
        f_r=frame["r_wrist"] - frame["r_elbow"],
    )
    for name, v in (("l_upper_arm", limbs.u_l), ("r_upper_arm", limbs.u_r),
                    ("l_forearm", limbs.f_l), ("r_forearm", limbs.f_r)):
        if np.linalg.norm(v) <= DEGENERATE_LENGTH:
            raise DegenerateLimbError(name)
    return limbs


def _elbow(u: np.ndarray, f: np.ndarray) -> float:
    c = (u @ f) / (np.linalg.norm(u) * np.linalg.norm(f))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def estimate_pose(frame: SkeletonFrame, torso: TorsoFrame | None = None) -> PoseAngles:
    if torso is None:
        torso = build_torso_frame(frame)
    limbs = limb_vectors(frame)

    tilt = np.cross(UP, torso.e_z)
    cos_tilt = UP @ torso.e_z
    torso_roll = np.arctan2(-(torso.e_y @ tilt), cos_tilt)
    torso_pitch = np.arctan2(-(torso.e_x @ tilt), cos_tilt)

    ul = torso.to_local(limbs.u_l)
    ur = torso.to_local(limbs.u_r)
    # the left roll takes -x, the right roll +x: abduction is positive on both sides
    return PoseAngles(
        torso_roll=float(torso_roll),
        torso_pitch=float(torso_pitch),
        l_sh_pitch=float(np.arctan2(ul[1], -ul[2])),
        l_sh_roll=float(np.arctan2(-ul[0], -ul[2])),
        l_el=_elbow(limbs.u_l, limbs.f_l),
        r_sh_pitch=float(np.arctan2(ur[1], -ur[2])),
        r_sh_roll=float(np.arctan2(ur[0], -ur[2])),
        r_el=_elbow(limbs.u_r, limbs.f_r),
    )


def write_angles_csv(path, rows: Iterable[tuple[float, PoseAngles]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t",) + ANGLE_NAMES)
        for t, angles in rows:
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in angles.as_array()])
