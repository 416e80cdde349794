"""Run configuration: one YAML file holding every tunable of a run.

All sections are optional; omitted keys keep their defaults. Example::

    scenario: cross-arm-reach
    duration: 5.0
    seed: 0
    safety: true
    point_filter: {ema_alpha: 0.3, jump_threshold: 0.5}
    retarget:
      scale: [1, 1, 1, 1, 1, 1, 1, 1]
      q_min: [-0.6, -0.5, -1.5, -1.5, 0.0, -1.5, -1.5, 0.0]
    robot: {upper_arm: 0.28, radii: {torso: 0.12}}
    barrier: {phi: 0.02, gamma: 5.0, K: 5.0, dt: 0.01, activation_distance: 0.15}
    qp: {max_iter: 100, tol: 0.001}
    human: {yaw: 1.5708, translation: [2.0, 0.0, -0.95]}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from .cbf_filter import BarrierConfig
from .pose_estimation import ANGLE_NAMES, PoseAngles
from .retargeting import JOINT_NAMES, RetargetConfig
from .robot_model import BODY_NAMES, RigidTransform, RobotGeometry
from .scenarios import SCENARIOS, default_transform
from .skeleton_stream import PointFilterConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str | None = "cross-arm-reach"
    input_path: str | None = None
    duration: float = 5.0
    point_filter: PointFilterConfig = field(default_factory=PointFilterConfig)
    retarget: RetargetConfig = field(default_factory=RetargetConfig)
    robot: RobotGeometry = field(default_factory=RobotGeometry)
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    qp_max_iter: int = 100
    qp_tol: float = 1e-3
    human_transform: RigidTransform | None = None
    human_radii: dict | None = None
    safety: bool = True
    calibrate: bool = True
    calibration_time: float = 1.0
    noise: float = 0.0
    outlier_rate: float = 0.0
    seed: int = 0
    steps: int | None = None
    geometry: str = "capsules"

    def __post_init__(self):
        if self.scenario is None and self.input_path is None:
            raise ConfigError("either a scenario or an input path is required")
        if self.scenario is not None and self.input_path is None and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; valid: {', '.join(sorted(SCENARIOS))}")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1")
        # the safe target obeys the same joint limits as retargeting
        self.barrier = replace(self.barrier, q_min=self.retarget.q_min, q_max=self.retarget.q_max)

    @property
    def transform(self) -> RigidTransform:
        if self.human_transform is not None:
            return self.human_transform
        if self.input_path is None and self.scenario in SCENARIOS:
            return default_transform(self.scenario)
        return RigidTransform()

    @property
    def radii(self) -> dict:
        return dict(self.human_radii) if self.human_radii else dict(self.robot.radii)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def _vector(value, names, what):
    if isinstance(value, dict):
        unknown = set(value) - set(names)
        if unknown:
            raise ConfigError(f"{what}: unknown names {sorted(unknown)}")
        return value
    arr = np.asarray(value, dtype=float)
    if arr.shape != (len(names),):
        raise ConfigError(f"{what}: expected {len(names)} values")
    return arr


def _known(section: dict, allowed, what):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")


def _joint_array(value, default, what):
    v = _vector(value, JOINT_NAMES, what)
    if isinstance(v, dict):
        arr = np.array(default, dtype=float)
        for k, x in v.items():
            arr[JOINT_NAMES.index(k)] = float(x)
        return arr
    return v


def _retarget(section: dict) -> RetargetConfig:
    base = RetargetConfig()
    _known(section, [f.name for f in fields(RetargetConfig)], "retarget")
    kwargs = {}
    for key in ("scale", "offset", "q_home", "q_min", "q_max"):
        if key in section:
            kwargs[key] = _joint_array(section[key], getattr(base, key), f"retarget.{key}")
    if "theta_home" in section:
        v = _vector(section["theta_home"], ANGLE_NAMES, "retarget.theta_home")
        kwargs["theta_home"] = PoseAngles(**v) if isinstance(v, dict) else PoseAngles.from_array(v)
    return RetargetConfig(**kwargs)


def _robot(section: dict) -> RobotGeometry:
    _known(section, [f.name for f in fields(RobotGeometry)], "robot")
    kwargs = dict(section)
    if "radii" in kwargs:
        radii = RobotGeometry().radii
        _known(kwargs["radii"], BODY_NAMES, "robot.radii")
        radii.update({k: float(v) for k, v in kwargs["radii"].items()})
        kwargs["radii"] = radii
    return RobotGeometry(**kwargs)


def _barrier(section: dict) -> BarrierConfig:
    _known(section, [f.name for f in fields(BarrierConfig)], "barrier")
    kwargs = dict(section)
    if kwargs.get("activation_distance") in ("inf", "infinity"):
        kwargs["activation_distance"] = math.inf
    for key in ("u_min", "u_max", "weights"):
        if key in kwargs:
            value = kwargs[key]
            if isinstance(value, (int, float)):
                value = [value] * len(JOINT_NAMES)
            kwargs[key] = _joint_array(value, getattr(BarrierConfig(), key), f"barrier.{key}")
    for key in ("q_min", "q_max"):
        if key in kwargs:
            raise ConfigError(f"barrier.{key}: joint limits are set in the retarget section")
    for key in ("self_pairs", "human_pairs"):
        if key in kwargs:
            kwargs[key] = tuple(tuple(p) for p in kwargs[key])
    return BarrierConfig(**kwargs)


_TOP_LEVEL = {
    "scenario", "input", "duration", "seed", "safety", "calibrate", "calibration_time", "noise",
    "outlier_rate", "steps", "geometry", "point_filter", "retarget", "robot", "barrier", "qp", "human",
}


def config_from_dict(data: dict | None) -> RunConfig:
    data = dict(data or {})
    _known(data, _TOP_LEVEL, "config")
    kwargs = {}
    try:
        if "input" in data:
            kwargs["input_path"] = data["input"]
            kwargs["scenario"] = data.get("scenario")
        elif "scenario" in data:
            kwargs["scenario"] = data["scenario"]
        for key in ("duration", "calibration_time", "noise", "outlier_rate"):
            if key in data:
                kwargs[key] = float(data[key])
        for key in ("seed", "steps"):
            if key in data:
                kwargs[key] = None if data[key] is None else int(data[key])
        for key in ("safety", "calibrate"):
            if key in data:
                kwargs[key] = bool(data[key])
        if "geometry" in data:
            kwargs["geometry"] = str(data["geometry"])
        if "point_filter" in data:
            _known(data["point_filter"], ["ema_alpha", "jump_threshold"], "point_filter")
            kwargs["point_filter"] = PointFilterConfig(**data["point_filter"])
        if "retarget" in data:
            kwargs["retarget"] = _retarget(data["retarget"])
        if "robot" in data:
            kwargs["robot"] = _robot(data["robot"])
        if "barrier" in data:
            kwargs["barrier"] = _barrier(data["barrier"])
        if "qp" in data:
            _known(data["qp"], ["max_iter", "tol"], "qp")
            kwargs["qp_max_iter"] = int(data["qp"].get("max_iter", 100))
            kwargs["qp_tol"] = float(data["qp"].get("tol", 1e-3))
        if "human" in data:
            human = data["human"]
            _known(human, ["yaw", "translation", "radii"], "human")
            if "yaw" in human or "translation" in human:
                kwargs["human_transform"] = RigidTransform.from_yaw(
                    float(human.get("yaw", 0.0)), human.get("translation", (0.0, 0.0, 0.0)))
            if "radii" in human:
                _known(human["radii"], BODY_NAMES, "human.radii")
                radii = RobotGeometry().radii
                radii.update({k: float(v) for k, v in human["radii"].items()})
                kwargs["human_radii"] = radii
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    return config_from_dict(data)
