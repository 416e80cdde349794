"""Capsule CBF-QP safety layer.

Each monitored body pair contributes a barrier ``h = d - (r_A + r_B + phi)``.
Pairs whose surface clearance is below the activation distance become rows
``A_i u >= -gamma h_i`` of a QP that minimally modifies the proportional
reference velocity ``K (q_nom - q_cbf)``; the internal safe target is then
integrated with the filtered velocity.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .collision_geometry import (
    GRADIENT_EPS,
    Capsule,
    ClosestPair,
    DegenerateGradientError,
    Obb,
    ProximityError,
    capsule_distance,
    capsule_to_spheres,
    distance_gradient,
    hull_distance,
)
from .qp_solver import QpProblem, QpSolver
from .retargeting import DEFAULT_Q_MAX, DEFAULT_Q_MIN, N_JOINTS
from .robot_model import (
    ADJACENT_BODIES,
    BODY_LINK,
    BODY_NAMES,
    CapsuleSet,
    RobotGeometry,
    RobotKinematics,
)

log = logging.getLogger(__name__)

ARM_BODIES = ("l_upper_arm", "r_upper_arm", "l_forearm", "r_forearm")

DEFAULT_SELF_PAIRS = (
    ("l_forearm", "r_forearm"),
    ("l_forearm", "r_upper_arm"),
    ("r_forearm", "l_upper_arm"),
    ("l_forearm", "torso"),
    ("r_forearm", "torso"),
    ("l_forearm", "r_thigh"),
    ("r_forearm", "l_thigh"),
    ("l_forearm", "l_thigh"),
    ("r_forearm", "r_thigh"),
)
DEFAULT_HUMAN_PAIRS = tuple((r, h) for r in ARM_BODIES for h in BODY_NAMES)


@dataclass(frozen=True)
class PairId:
    body_a: str
    body_b: str
    kind: str  # "self" | "human"

    @property
    def label(self) -> str:
        prefix = "self" if self.kind == "self" else "human"
        return f"{prefix}:{self.body_a}-{self.body_b}"


@dataclass(frozen=True)
class BarrierConfig:
    phi: float = 0.02
    gamma: float = 5.0
    K: float = 5.0
    dt: float = 0.01
    activation_distance: float = 0.15
    self_pairs: tuple = DEFAULT_SELF_PAIRS
    human_pairs: tuple = DEFAULT_HUMAN_PAIRS
    u_min: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, -3.0))
    u_max: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, 3.0))
    weights: np.ndarray = field(default_factory=lambda: np.ones(N_JOINTS))
    q_min: np.ndarray = field(default_factory=lambda: DEFAULT_Q_MIN.copy())
    q_max: np.ndarray = field(default_factory=lambda: DEFAULT_Q_MAX.copy())

    def __post_init__(self):
        for name in ("phi", "gamma", "K", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.activation_distance > 0:
            raise ValueError("activation_distance must be positive")
        for name in ("u_min", "u_max", "weights", "q_min", "q_max"):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != (N_JOINTS,):
                raise ValueError(f"{name} must have {N_JOINTS} entries")
            object.__setattr__(self, name, value)
        if np.any(self.weights <= 0):
            raise ValueError("QP weights must be positive")
        if np.any(self.u_min > 0) or np.any(self.u_max < 0):
            raise ValueError("velocity box must contain zero")
        object.__setattr__(self, "self_pairs", tuple(tuple(p) for p in self.self_pairs))
        object.__setattr__(self, "human_pairs", tuple(tuple(p) for p in self.human_pairs))
        for a, b in self.self_pairs:
            if a not in BODY_NAMES or b not in BODY_NAMES or a == b:
                raise ValueError(f"bad self pair {(a, b)}")
            if frozenset((a, b)) in ADJACENT_BODIES:
                raise ValueError(f"self pair {(a, b)} is kinematically adjacent")
        for a, b in self.human_pairs:
            if a not in BODY_NAMES or b not in BODY_NAMES:
                raise ValueError(f"bad human pair {(a, b)}")

    def pairs(self) -> list[PairId]:
        return [PairId(a, b, "self") for a, b in self.self_pairs] + [
            PairId(a, b, "human") for a, b in self.human_pairs
        ]


@dataclass(frozen=True)
class ConstraintRow:
    pair: PairId
    A: np.ndarray
    h: float
    d: float


def barrier_value(A: Capsule, B: Capsule, phi: float) -> tuple[float, ClosestPair]:
    d, pair = capsule_distance(A, B)
    return d - (A.r + B.r + phi), pair


def assemble_row(pair: PairId, robot_caps: CapsuleSet, human_caps: CapsuleSet | None,
                 jacobians: dict, cfg: BarrierConfig) -> ConstraintRow | None:
    """Chain rule through the closest-point gradient and endpoint Jacobians.

    Human capsules are held fixed, so human pairs only use robot-side kinematics.
    Returns ``None`` (and logs) when the closest points coincide.
    """
    cap_a = robot_caps[pair.body_a]
    cap_b = robot_caps[pair.body_b] if pair.kind == "self" else human_caps[pair.body_b]
    h, cp = barrier_value(cap_a, cap_b, cfg.phi)
    try:
        grad = distance_gradient(cp)
    except DegenerateGradientError:
        log.warning("skipping %s: degenerate closest points", pair.label)
        return None
    row = grad[0] @ jacobians[(pair.body_a, "a")] + grad[1] @ jacobians[(pair.body_a, "b")]
    if pair.kind == "self":
        row = row + grad[2] @ jacobians[(pair.body_b, "a")] + grad[3] @ jacobians[(pair.body_b, "b")]
    return ConstraintRow(pair, row, float(h), float(cp.d))


@dataclass
class Evaluation:
    """All monitored barriers at one configuration.

    ``gap`` is the surface clearance used for activation; ``A`` rows are NaN
    where no gradient exists.
    """

    labels: list
    h: np.ndarray
    d: np.ndarray
    gap: np.ndarray
    A: np.ndarray


class CapsuleCollider:
    kind = "capsules"

    def evaluate(self, kin: RobotKinematics, human_caps, cfg: BarrierConfig) -> Evaluation:
        robot_caps = kin.capsules()
        jac = kin.endpoint_jacobians(robot_caps)
        pairs = cfg.pairs()
        n = len(pairs)
        h, d, gap = np.empty(n), np.empty(n), np.empty(n)
        A = np.full((n, N_JOINTS), np.nan)
        for i, pair in enumerate(pairs):
            ca = robot_caps[pair.body_a]
            cb = robot_caps[pair.body_b] if pair.kind == "self" else human_caps[pair.body_b]
            row = assemble_row(pair, robot_caps, human_caps, jac, cfg)
            if row is None:
                h[i], cp = barrier_value(ca, cb, cfg.phi)
                d[i] = cp.d
            else:
                h[i], d[i], A[i] = row.h, row.d, row.A
            gap[i] = d[i] - (ca.r + cb.r)
        return Evaluation([p.label for p in pairs], h, d, gap, A)


class SphereCollider:
    """Each capsule replaced by a chain of spheres; one barrier per sphere pair."""

    def __init__(self, k: int):
        self.k = k
        self.kind = f"spheres-k{k}"

    def _chain(self, kin, caps, body, robot_side):
        chain = capsule_to_spheres(caps[body], self.k)
        if not robot_side:
            return chain.centers, None
        ja = kin.point_jacobian(BODY_LINK[body], caps[body].a)
        jb = kin.point_jacobian(BODY_LINK[body], caps[body].b)
        tau = chain.params[:, None, None]
        return chain.centers, (1.0 - tau) * ja + tau * jb

    def evaluate(self, kin, human_caps, cfg):
        robot_caps = kin.capsules()
        labels, hs, ds, gaps, rows = [], [], [], [], []
        for pair in cfg.pairs():
            other = robot_caps if pair.kind == "self" else human_caps
            ca, cb = robot_caps[pair.body_a], other[pair.body_b]
            PA, JA = self._chain(kin, robot_caps, pair.body_a, True)
            PB, JB = self._chain(kin, other, pair.body_b, pair.kind == "self")
            diff = PA[:, None, :] - PB[None, :, :]
            d = np.sqrt((diff * diff).sum(-1))
            safe = np.where(d > GRADIENT_EPS, d, np.nan)
            nrm = diff / safe[..., None]
            A = np.einsum("ijk,ikl->ijl", nrm, JA)
            if JB is not None:
                A = A - np.einsum("ijk,jkl->ijl", nrm, JB)
            na, nb = d.shape
            labels.extend(f"{pair.label}[{i},{j}]" for i in range(na) for j in range(nb))
            ds.append(d.ravel())
            hs.append(d.ravel() - (ca.r + cb.r + cfg.phi))
            gaps.append(d.ravel() - (ca.r + cb.r))
            rows.append(A.reshape(-1, N_JOINTS))
        return Evaluation(labels, np.concatenate(hs), np.concatenate(ds),
                          np.concatenate(gaps), np.vstack(rows))


def _human_box_rotation(C: Capsule) -> np.ndarray:
    axis = C.b - C.a
    z = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


class BoxCollider:
    """One oriented box per capsule, half-extents (r, r, L/2 + r); GJK proximity."""

    kind = "boxes"

    def evaluate(self, kin, human_caps, cfg):
        robot_caps = kin.capsules()
        robot_boxes = {b: Obb.around_capsule(robot_caps[b], kin.body_rotation(b)) for b in BODY_NAMES}
        human_boxes = {}
        pairs = cfg.pairs()
        n = len(pairs)
        h, d = np.empty(n), np.empty(n)
        A = np.full((n, N_JOINTS), np.nan)
        for i, pair in enumerate(pairs):
            box_a = robot_boxes[pair.body_a]
            if pair.kind == "self":
                box_b = robot_boxes[pair.body_b]
            else:
                if pair.body_b not in human_boxes:
                    cap = human_caps[pair.body_b]
                    human_boxes[pair.body_b] = Obb.around_capsule(cap, _human_box_rotation(cap))
                box_b = human_boxes[pair.body_b]
            try:
                prox = hull_distance(box_a.vertices(), box_b.vertices())
            except ProximityError as exc:
                log.warning("box proximity failed for %s: %s", pair.label, exc)
                prox = None
            if prox is None or prox.overlap:
                d[i] = 0.0
            else:
                d[i] = prox.d
                n_ab = prox.direction  # A -> B; d grows as A moves against it
                row = -n_ab @ kin.point_jacobian(BODY_LINK[pair.body_a], prox.p_a)
                if pair.kind == "self":
                    row = row + n_ab @ kin.point_jacobian(BODY_LINK[pair.body_b], prox.p_b)
                A[i] = row
            h[i] = d[i] - cfg.phi
        return Evaluation([p.label for p in pairs], h, d, d.copy(), A)


def make_collider(kind: str):
    if kind == "capsules":
        return CapsuleCollider()
    if kind == "boxes":
        return BoxCollider()
    if kind.startswith("spheres-k"):
        return SphereCollider(int(kind.removeprefix("spheres-k")))
    raise ValueError(f"unknown collision geometry {kind!r}; expected capsules, boxes or spheres-k<N>")


@dataclass(frozen=True)
class FilterLoopState:
    q_cbf: np.ndarray
    last_u: np.ndarray | None = None
    step: int = 0


@dataclass(frozen=True)
class SafetyReport:
    labels: list
    h: np.ndarray
    d: np.ndarray
    active: np.ndarray  # indices into labels
    status: str
    u_star: np.ndarray
    u_ref: np.ndarray
    iterations: int
    eval_time: float = 0.0
    solve_time: float = 0.0
    min_h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "min_h", float(np.min(self.h)) if len(self.h) else np.inf)

    @property
    def n_active(self) -> int:
        return len(self.active)


class SafetyFilter:
    """Stateful wrapper around one robot's filter loop."""

    def __init__(self, cfg: BarrierConfig, geo: RobotGeometry, solver: QpSolver | None = None,
                 collider=None):
        self.cfg = cfg
        self.geo = geo
        self.solver = solver or QpSolver()
        self.collider = collider or CapsuleCollider()

    def initial_state(self, q0) -> FilterLoopState:
        q0 = np.clip(np.asarray(q0, dtype=float), self.cfg.q_min, self.cfg.q_max)
        self.solver.reset()
        return FilterLoopState(q0)

    def evaluate(self, q, human_caps) -> Evaluation:
        return self.collider.evaluate(RobotKinematics(q, self.geo), human_caps, self.cfg)

    def step(self, state: FilterLoopState, q_nom, human_caps: CapsuleSet | None):
        cfg = self.cfg
        q = state.q_cbf
        t0 = time.perf_counter()
        ev = self.evaluate(q, human_caps)
        t1 = time.perf_counter()
        active = np.flatnonzero((ev.gap < cfg.activation_distance) & np.all(np.isfinite(ev.A), axis=1))

        u_ref = cfg.K * (np.asarray(q_nom, dtype=float) - q)
        # joint limits enter as velocity bounds so the integrated target never needs clipping
        u_lo = np.maximum(cfg.u_min, (cfg.q_min - q) / cfg.dt)
        u_hi = np.minimum(cfg.u_max, (cfg.q_max - q) / cfg.dt)
        problem = QpProblem(cfg.weights, u_ref, ev.A[active], -cfg.gamma * ev.h[active], u_lo, u_hi)
        t2 = time.perf_counter()
        sol = self.solver.solve(problem)
        t3 = time.perf_counter()

        q_next = np.clip(q + cfg.dt * sol.u_star, cfg.q_min, cfg.q_max)
        report = SafetyReport(ev.labels, ev.h, ev.d, active, sol.status, sol.u_star, u_ref,
                              sol.iterations, t1 - t0, t3 - t2)
        new_state = replace(state, q_cbf=q_next, last_u=sol.u_star, step=state.step + 1)
        return new_state, q_next.copy(), report


def filter_step(state: FilterLoopState, q_nom, human_caps, cfg: BarrierConfig, geo: RobotGeometry,
                solver: QpSolver):
    return SafetyFilter(cfg, geo, solver).step(state, q_nom, human_caps)
