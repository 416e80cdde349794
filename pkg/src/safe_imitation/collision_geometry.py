"""Collision primitives: capsules, sphere chains and oriented boxes.

Distances are center-line (capsules, spheres) or hull-to-hull (boxes); radii
and barrier margins are subtracted by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PARALLEL_EPS = 1e-12
GRADIENT_EPS = 1e-9
GJK_MAX_ITER = 64
GJK_TOL = 1e-6


class DegenerateGradientError(ValueError):
    pass


class ProximityError(RuntimeError):
    """Box proximity iteration did not converge."""

    def __init__(self, message, iterations, gap, direction):
        super().__init__(f"{message} (iterations={iterations}, gap={gap:.3e})")
        self.iterations = iterations
        self.gap = gap
        self.direction = direction


@dataclass(frozen=True)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if not self.r > 0:
            raise ValueError(f"capsule radius must be positive, got {self.r}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("capsule endpoints must be finite")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


@dataclass(frozen=True)
class ClosestPair:
    p_a: np.ndarray
    p_b: np.ndarray
    s: float
    t: float
    d: float


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _closest_params(a1, b1, a2, b2) -> tuple[float, float]:
    u = b1 - a1
    v = b2 - a2
    r = a1 - a2
    a = u @ u
    e = v @ v
    f = v @ r
    if a <= PARALLEL_EPS and e <= PARALLEL_EPS:
        return 0.0, 0.0
    if a <= PARALLEL_EPS:
        return 0.0, _clamp01(f / e)
    c = u @ r
    if e <= PARALLEL_EPS:
        return _clamp01(-c / a), 0.0
    b = u @ v
    denom = a * e - b * b
    if denom > PARALLEL_EPS * a * e:
        s = _clamp01((b * f - c * e) / denom)
        t = (b * s + f) / e
        if t < 0.0:
            return _clamp01(-c / a), 0.0
        if t > 1.0:
            return _clamp01((b - c) / a), 1.0
        return s, t

    # Parallel: the offset depends on w = s - k t only, with v = k u.
    # Clamp the optimal w into its reachable range, then pick the smallest s
    # (and the t it implies) on the line of minimizers.
    k = b / a
    w = min(max(-c / a, -max(k, 0.0)), 1.0 - min(k, 0.0))
    if k > 0:
        t = max(0.0, -w / k)
    else:
        t = min(1.0, w / -k)
    return _clamp01(w + k * t), _clamp01(t)


def _is_parallel(a1, b1, a2, b2) -> bool:
    u = b1 - a1
    v = b2 - a2
    a, e, b = u @ u, v @ v, u @ v
    return a > PARALLEL_EPS and e > PARALLEL_EPS and a * e - b * b <= PARALLEL_EPS * a * e


def segment_closest(a1, b1, a2, b2) -> ClosestPair:
    """Closest points between segments [a1, b1] and [a2, b2].

    Minimizes over the full parameter square. For parallel segments the
    minimizer with the smallest ``s``, then smallest ``t``, is returned.
    """
    a1, b1, a2, b2 = (np.asarray(x, dtype=float) for x in (a1, b1, a2, b2))
    # evaluate in a canonical order so d is symmetric bit for bit
    swap = tuple(np.concatenate([a2, b2])) < tuple(np.concatenate([a1, b1]))
    if _is_parallel(a1, b1, a2, b2):
        # the tie-break depends on argument order; only the distance is canonical
        s, t = _closest_params(a1, b1, a2, b2)
        p1 = a1 + s * (b1 - a1)
        p2 = a2 + t * (b2 - a2)
        if swap:
            t2, s2 = _closest_params(a2, b2, a1, b1)
            d = float(np.linalg.norm((a2 + t2 * (b2 - a2)) - (a1 + s2 * (b1 - a1))))
        else:
            d = float(np.linalg.norm(p1 - p2))
        return ClosestPair(p1, p2, float(s), float(t), d)
    if swap:
        t, s = _closest_params(a2, b2, a1, b1)
    else:
        s, t = _closest_params(a1, b1, a2, b2)
    p1 = a1 + s * (b1 - a1)
    p2 = a2 + t * (b2 - a2)
    d = float(np.linalg.norm(p2 - p1) if swap else np.linalg.norm(p1 - p2))
    return ClosestPair(p1, p2, float(s), float(t), d)


def capsule_distance(A: Capsule, B: Capsule) -> tuple[float, ClosestPair]:
    """Center-line distance; surface clearance is ``d - (A.r + B.r)``."""
    pair = segment_closest(A.a, A.b, B.a, B.b)
    return pair.d, pair


def distance_gradient(pair: ClosestPair) -> np.ndarray:
    """Gradient of the center-line distance w.r.t. (a_A, b_A, a_B, b_B), shape (4, 3).

    Envelope form: the closest-point parameters are held fixed.
    """
    if pair.d <= GRADIENT_EPS:
        raise DegenerateGradientError(f"closest points coincide (d={pair.d:.3e})")
    n = (pair.p_a - pair.p_b) / pair.d
    return np.array([(1.0 - pair.s) * n, pair.s * n, -(1.0 - pair.t) * n, -pair.t * n])


@dataclass(frozen=True)
class SphereChain:
    centers: np.ndarray
    r: float
    k: int
    params: np.ndarray  # position of each center along the capsule axis, in [0, 1]


def chain_size(length: float, r: float, k: int) -> int:
    n0 = max(math.ceil(length / (2.0 * r) - 1e-9) + 1, 2)
    return 2**k * (n0 - 1) + 1


def capsule_to_spheres(C: Capsule, k: int) -> SphereChain:
    if k < 0:
        raise ValueError("subsampling degree must be >= 0")
    n = chain_size(C.length, C.r, k)
    params = np.linspace(0.0, 1.0, n)
    centers = C.a + params[:, None] * (C.b - C.a)
    return SphereChain(centers, C.r, k, params)


def sphere_distance(c1, r1, c2, r2) -> float:
    # radii are subtracted at the barrier; kept in the signature for symmetry with capsules
    diff = np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float)
    return float(np.sqrt(diff @ diff))


@dataclass(frozen=True)
class Obb:
    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray  # columns are the box axes

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        if np.any(self.half_extents <= 0):
            raise ValueError("box half-extents must be positive")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("box orientation must be orthonormal")

    def vertices(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        return self.center + (signs * self.half_extents) @ self.rotation.T

    @classmethod
    def around_capsule(cls, C: Capsule, rotation: np.ndarray) -> "Obb":
        """Box enclosing a capsule whose axis is the third column of ``rotation``."""
        return cls(0.5 * (C.a + C.b), np.array([C.r, C.r, 0.5 * C.length + C.r]), rotation)


def point_obb_distance(p, box: Obb) -> float:
    local = box.rotation.T @ (np.asarray(p, dtype=float) - box.center)
    excess = np.maximum(np.abs(local) - box.half_extents, 0.0)
    return float(np.linalg.norm(excess))


# --- GJK ---------------------------------------------------------------------

def _closest_on_segment(P):
    a, b = P
    ab = b - a
    denom = ab @ ab
    if denom <= 1e-30:
        return a.copy(), np.array([1.0, 0.0])
    t = _clamp01(-(a @ ab) / denom)
    return a + t * ab, np.array([1.0 - t, t])


def _closest_on_triangle(P):
    # Ericson, Real-Time Collision Detection, 5.1.5, with the query at the origin
    a, b, c = P
    ab, ac = b - a, c - a
    ap = -a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return a.copy(), np.array([1.0, 0.0, 0.0])
    bp = -b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return b.copy(), np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return a + v * ab, np.array([1.0 - v, v, 0.0])
    cp = -c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return c.copy(), np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return a + w * ac, np.array([1.0 - w, 0.0, w])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), np.array([0.0, 1.0 - w, w])
    denom = va + vb + vc
    if abs(denom) <= 1e-30:
        return _best_of_faces(P, 2)
    v, w = vb / denom, vc / denom
    return a + v * ab + w * ac, np.array([1.0 - v - w, v, w])


def _best_of_faces(P, size):
    """Closest point over all sub-simplices with ``size`` vertices."""
    best = None
    n = len(P)
    for drop in range(n):
        idx = [i for i in range(n) if i != drop]
        sub = P[idx]
        point, w = _closest_on_segment(sub) if size == 2 else _closest_on_triangle(sub)
        dist = point @ point
        if best is None or dist < best[0]:
            full = np.zeros(n)
            full[idx] = w
            best = (dist, point, full)
    return best[1], best[2]


def _closest_on_tetrahedron(P):
    a, b, c, d = P
    vol = np.dot(b - a, np.cross(c - a, d - a))
    if abs(vol) > 1e-18:
        # barycentric coordinates of the origin
        M = np.column_stack([b - a, c - a, d - a])
        lam = np.linalg.solve(M, -a)
        w = np.array([1.0 - lam.sum(), *lam])
        if np.all(w >= 0):
            return np.zeros(3), w
    return _best_of_faces(P, 3)


def _closest_on_simplex(P):
    n = len(P)
    if n == 1:
        return P[0].copy(), np.array([1.0])
    if n == 2:
        return _closest_on_segment(P)
    if n == 3:
        return _closest_on_triangle(P)
    return _closest_on_tetrahedron(P)


@dataclass(frozen=True)
class HullProximity:
    d: float
    direction: np.ndarray  # unit, from A toward B
    p_a: np.ndarray
    p_b: np.ndarray
    iterations: int
    overlap: bool


def hull_distance(verts_a: np.ndarray, verts_b: np.ndarray,
                  max_iter: int = GJK_MAX_ITER, tol: float = GJK_TOL) -> HullProximity:
    """GJK distance between the convex hulls of two vertex sets."""
    verts_a = np.asarray(verts_a, dtype=float)
    verts_b = np.asarray(verts_b, dtype=float)

    def support(direction):
        ia = int(np.argmax(verts_a @ -direction))
        ib = int(np.argmax(verts_b @ direction))
        return verts_b[ib] - verts_a[ia], ia, ib

    v = verts_b.mean(axis=0) - verts_a.mean(axis=0)
    if v @ v <= 1e-30:
        v = np.array([1.0, 0.0, 0.0])
    w, ia, ib = support(-v)
    simplex = [w]
    ids = [(ia, ib)]
    weights = np.array([1.0])
    v = w.copy()
    last_dir = v / max(np.linalg.norm(v), 1e-300)

    for it in range(1, max_iter + 1):
        vv = v @ v
        if vv <= 1e-24:
            return _overlap(last_dir, it)
        last_dir = v / np.sqrt(vv)
        w, ia, ib = support(-v)
        gap = (vv - v @ w) / np.sqrt(vv)
        if gap <= tol or (ia, ib) in ids:
            return _witness(verts_a, verts_b, ids, weights, v, it)
        simplex.append(w)
        ids.append((ia, ib))
        P = np.array(simplex)
        v, full = _closest_on_simplex(P)
        keep = full > 1e-14
        if len(simplex) == 4 and np.all(keep):
            return _overlap(last_dir, it)
        simplex = [s for s, k in zip(simplex, keep) if k]
        ids = [s for s, k in zip(ids, keep) if k]
        weights = full[keep]
    raise ProximityError("box proximity did not converge", max_iter, float(gap), last_dir)


def _overlap(direction, iterations):
    zero = np.zeros(3)
    return HullProximity(0.0, direction, zero, zero, iterations, True)


def _witness(verts_a, verts_b, ids, weights, v, iterations):
    weights = weights / weights.sum()
    p_a = sum(w * verts_a[i] for w, (i, _) in zip(weights, ids))
    p_b = sum(w * verts_b[j] for w, (_, j) in zip(weights, ids))
    d = float(np.linalg.norm(v))
    return HullProximity(d, v / d, p_a, p_b, iterations, False)


def obb_distance(A: Obb, B: Obb) -> tuple[float, np.ndarray]:
    """Separation distance between two boxes and the unit direction from A to B."""
    prox = hull_distance(A.vertices(), B.vertices())
    return prox.d, prox.direction
