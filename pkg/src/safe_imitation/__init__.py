"""Safety-filtered motion imitation for a dual-arm humanoid upper body."""

from .cbf_filter import BarrierConfig, SafetyFilter, SafetyReport, make_collider
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .pipeline import Pipeline, RunResult, run_pipeline, write_logs
from .qp_solver import QpProblem, QpSolution, QpSolver
from .retargeting import JOINT_NAMES, RetargetConfig, retarget
from .robot_model import RobotGeometry, RobotKinematics
from .skeleton_stream import KEYPOINTS, SkeletonFrame

__version__ = "0.1.0"

__all__ = [
    "BarrierConfig", "ConfigError", "JOINT_NAMES", "KEYPOINTS", "Pipeline", "QpProblem",
    "QpSolution", "QpSolver", "RetargetConfig", "RobotGeometry", "RobotKinematics", "RunConfig",
    "RunResult", "SafetyFilter", "SafetyReport", "SkeletonFrame", "config_from_dict",
    "load_config", "make_collider", "retarget", "run_pipeline", "write_logs",
]
