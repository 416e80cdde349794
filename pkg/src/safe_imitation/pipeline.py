"""Closed-loop kinematic simulation: stream -> filter -> pose -> retarget -> CBF-QP.

The plant tracks the commanded position perfectly within one control period.
Input frames are consumed on the control clock with a zero-order hold.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .cbf_filter import SafetyFilter, SafetyReport, make_collider
from .config import RunConfig
from .pose_estimation import DegenerateLimbError, FrameConstructionError, PoseAngles, estimate_pose
from .qp_solver import QpSolver
from .retargeting import JOINT_NAMES, calibrate_home, retarget
from .robot_model import CapsuleSet, DegenerateCapsuleError, RobotKinematics, human_capsules
from .scenarios import generate
from .skeleton_stream import FilterState, SkeletonFrame, filter_frame, read_stream

log = logging.getLogger(__name__)

TIME_EPS = 1e-9


@dataclass
class StepRecord:
    step: int
    t: float
    q_nom: np.ndarray
    q_cbf: np.ndarray | None  # safe target before this step's update; None with safety off
    command: np.ndarray
    report: SafetyReport
    human: CapsuleSet
    step_time: float


@dataclass
class RunResult:
    config: RunConfig
    records: list
    theta_home: PoseAngles

    @property
    def labels(self) -> list:
        return self.records[0].report.labels if self.records else []

    @property
    def min_h(self) -> float:
        return min(r.report.min_h for r in self.records)

    def summary(self) -> dict:
        statuses = {}
        for r in self.records:
            statuses[r.report.status] = statuses.get(r.report.status, 0) + 1
        step_times = np.array([r.step_time for r in self.records])
        solve_times = np.array([r.report.solve_time for r in self.records])
        worst = min(self.records, key=lambda r: r.report.min_h)
        return {
            "scenario": self.config.scenario,
            "input": self.config.input_path,
            "safety": self.config.safety,
            "steps": len(self.records),
            "dt": self.config.barrier.dt,
            "min_h": float(self.min_h),
            "min_h_step": worst.step,
            "min_h_pair": worst.report.labels[int(np.argmin(worst.report.h))],
            "violation_steps": int(sum(r.report.min_h < 0 for r in self.records)),
            "max_active": int(max(r.report.n_active for r in self.records)),
            "qp_status": statuses,
            "mean_rate_hz": float(1.0 / step_times.mean()) if step_times.mean() > 0 else None,
            "mean_solve_s": float(solve_times.mean()),
        }


def load_frames(cfg: RunConfig) -> list[SkeletonFrame]:
    if cfg.input_path is not None:
        return read_stream(cfg.input_path)
    return generate(cfg.scenario, cfg.duration, 1.0 / cfg.barrier.dt, noise=cfg.noise,
                    outlier_rate=cfg.outlier_rate, seed=cfg.seed)


class Pipeline:
    def __init__(self, cfg: RunConfig, frames: list[SkeletonFrame] | None = None, collider=None):
        self.cfg = cfg
        self.frames = frames if frames is not None else load_frames(cfg)
        if not self.frames:
            raise ValueError("input stream is empty")
        self.collider = collider or make_collider(cfg.geometry)
        self.T = cfg.transform
        self.radii = cfg.radii

    def calibrate(self) -> PoseAngles:
        cfg = self.cfg
        if not cfg.calibrate:
            return cfg.retarget.theta_home
        t_end = self.frames[0].t + cfg.calibration_time
        state = FilterState()
        poses = []
        for frame in self.frames:
            if frame.t >= t_end - TIME_EPS and poses:
                break
            state, filtered = filter_frame(state, frame, cfg.point_filter)
            try:
                poses.append(estimate_pose(filtered))
            except (FrameConstructionError, DegenerateLimbError) as exc:
                log.warning("calibration frame t=%.3f skipped: %s", frame.t, exc)
        return calibrate_home(poses)

    def n_steps(self) -> int:
        if self.cfg.steps is not None:
            return self.cfg.steps
        span = self.frames[-1].t - self.frames[0].t
        return int(np.floor(span / self.cfg.barrier.dt + TIME_EPS)) + 1

    def iter_steps(self, theta_home: PoseAngles | None = None) -> Iterator[StepRecord]:
        cfg = self.cfg
        if theta_home is None:
            theta_home = self.calibrate()
        retarget_cfg = cfg.retarget
        retarget_cfg = type(retarget_cfg)(
            scale=retarget_cfg.scale, offset=retarget_cfg.offset, q_home=retarget_cfg.q_home,
            q_min=retarget_cfg.q_min, q_max=retarget_cfg.q_max, theta_home=theta_home)

        safety = SafetyFilter(cfg.barrier, cfg.robot, QpSolver(cfg.qp_max_iter, cfg.qp_tol),
                              self.collider)
        fstate = FilterState()
        theta = None
        human = None
        state = None
        idx = 0
        t0 = self.frames[0].t
        for k in range(self.n_steps()):
            tic = time.perf_counter()
            t = t0 + k * cfg.barrier.dt
            while idx < len(self.frames) and self.frames[idx].t <= t + TIME_EPS:
                fstate, filtered = filter_frame(fstate, self.frames[idx], cfg.point_filter)
                idx += 1
                try:
                    theta = estimate_pose(filtered)
                except (FrameConstructionError, DegenerateLimbError) as exc:
                    log.warning("frame t=%.3f: %s; holding previous pose", filtered.t, exc)
                try:
                    human = human_capsules(filtered, self.radii, self.T)
                except DegenerateCapsuleError as exc:
                    log.warning("frame t=%.3f: %s; holding previous human capsules", filtered.t, exc)
            if theta is None or human is None:
                raise RuntimeError("no valid frame available at the first control step")
            q_nom = retarget(theta, retarget_cfg)

            if cfg.safety:
                if state is None:
                    state = safety.initial_state(q_nom)
                q_before = state.q_cbf
                state, command, report = safety.step(state, q_nom, human)
            else:
                q_before = None
                command = q_nom
                report = _passive_report(safety, q_nom, human)
            yield StepRecord(k, t, q_nom, q_before, command, report, human,
                             time.perf_counter() - tic)

    def run(self) -> RunResult:
        theta_home = self.calibrate()
        return RunResult(self.cfg, list(self.iter_steps(theta_home)), theta_home)


def _passive_report(safety: SafetyFilter, q, human) -> SafetyReport:
    tic = time.perf_counter()
    ev = safety.collider.evaluate(RobotKinematics(q, safety.geo), human, safety.cfg)
    return SafetyReport(ev.labels, ev.h, ev.d, np.array([], dtype=int), "off", np.zeros(len(q)),
                        np.zeros(len(q)), 0, time.perf_counter() - tic, 0.0)


def run_pipeline(cfg: RunConfig, out_dir=None) -> RunResult:
    result = Pipeline(cfg).run()
    if out_dir is not None:
        write_logs(result, out_dir)
    return result


# --- logs --------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_logs(result: RunResult, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    safety_on = result.config.safety
    paths = {
        "trajectory": os.path.join(out_dir, "trajectory.csv"),
        "safety": os.path.join(out_dir, "safety.csv"),
        "timing": os.path.join(out_dir, "timing.csv"),
        "summary": os.path.join(out_dir, "summary.json"),
    }
    with open(paths["trajectory"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["step", "t"] + [f"q_nom_{j}" for j in JOINT_NAMES]
        if safety_on:
            header += [f"q_cbf_{j}" for j in JOINT_NAMES]
        header += [f"command_{j}" for j in JOINT_NAMES]
        w.writerow(header)
        for r in result.records:
            row = [r.step, _fmt(r.t)] + [_fmt(v) for v in r.q_nom]
            if safety_on:
                row += [_fmt(v) for v in r.q_cbf]
            row += [_fmt(v) for v in r.command]
            w.writerow(row)
    with open(paths["safety"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t"] + [f"h:{label}" for label in result.labels]
                   + ["min_h", "n_active", "qp_status", "qp_iterations"])
        for r in result.records:
            rep = r.report
            w.writerow([r.step, _fmt(r.t)] + [_fmt(v) for v in rep.h]
                       + [_fmt(rep.min_h), rep.n_active, rep.status, rep.iterations])
    with open(paths["timing"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "eval_s", "solve_s", "step_s"])
        for r in result.records:
            w.writerow([r.step, f"{r.report.eval_time:.6e}", f"{r.report.solve_time:.6e}",
                        f"{r.step_time:.6e}"])
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def emit_plot_data(run_dir, out_dir=None) -> dict:
    """Plot-ready CSVs: joints over time and per-pair margins with the global minimum.

The joint file carries the nominal target and, for safety-on runs, the safe
target after each step's update.
"""
    out_dir = out_dir or run_dir
    traj_path = os.path.join(run_dir, "trajectory.csv")
    safety_path = os.path.join(run_dir, "safety.csv")
    for p in (traj_path, safety_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"missing run artifact: {p}")
    with open(traj_path, newline="", encoding="utf-8") as fh:
        traj = list(csv.DictReader(fh))
    with open(safety_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        h_cols = [c for c in reader.fieldnames if c.startswith("h:")]
        margins = list(reader)
    safe = bool(traj) and "q_cbf_waist_roll" in traj[0]

    os.makedirs(out_dir, exist_ok=True)
    joints_out = os.path.join(out_dir, "joints_plot.csv")
    margins_out = os.path.join(out_dir, "margins_plot.csv")
    with open(joints_out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["t"] + [f"q_nom_{j}" for j in JOINT_NAMES]
        if safe:
            header += [f"q_cbf_{j}" for j in JOINT_NAMES]
        w.writerow(header)
        for row in traj:
            out = [row["t"]] + [row[f"q_nom_{j}"] for j in JOINT_NAMES]
            if safe:
                out += [row[f"command_{j}"] for j in JOINT_NAMES]
            w.writerow(out)
    with open(margins_out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [c[2:] for c in h_cols] + ["global_min"])
        for row in margins:
            values = [float(row[c]) for c in h_cols]
            w.writerow([row["t"]] + [row[c] for c in h_cols] + [_fmt(min(values))])
    return {"joints": joints_out, "margins": margins_out}
