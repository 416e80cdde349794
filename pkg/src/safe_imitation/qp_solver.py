"""Dense QP solver for problems of the form

    minimize    1/2 (u - u_ref)' W (u - u_ref)
    subject to  A u >= l
                u_min <= u <= u_max

with diagonal ``W > 0``. Operator splitting (ADMM) over the stacked
constraint set, followed by an active-set polishing step. Inequality systems
with no solution inside the box are handled by a heavily penalized slack
relaxation; the box is never relaxed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE_RELAXED = "infeasible-relaxed"


@dataclass(frozen=True)
class QpProblem:
    W: np.ndarray
    u_ref: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        n = len(self.u_ref)
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        object.__setattr__(self, "A", A)
        for name in ("W", "u_ref", "l", "u_min", "u_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.W.shape != (n,) or np.any(self.W <= 0):
            raise ValueError("W must be a vector of positive diagonal weights")
        if self.l.shape != (A.shape[0],):
            raise ValueError("l must have one entry per constraint row")
        if np.any(self.u_min > self.u_max):
            raise ValueError("box bounds must satisfy u_min <= u_max")

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def objective(self, u) -> float:
        e = np.asarray(u) - self.u_ref
        return 0.5 * float(e @ (self.W * e))


@dataclass(frozen=True)
class QpSolution:
    u_star: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    multipliers: np.ndarray | None = None  # for the rows A u >= l, nonnegative

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class _Result:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    r_prim: float
    r_dual: float
    converged: bool
    infeasible: bool = False


def _residuals(P, q, C, lo, hi, x, y):
    Cx = C @ x
    r_prim = float(np.max(np.maximum(lo - Cx, 0.0) + np.maximum(Cx - hi, 0.0), initial=0.0))
    r_dual = float(np.max(np.abs(P * x + q + C.T @ y), initial=0.0))
    return r_prim, r_dual


class _Admm:
    """ADMM on  min 1/2 x'diag(P)x + q'x  s.t.  lo <= C x <= hi."""

    sigma = 1e-6
    alpha = 1.6
    adapt_every = 25
    infeas_tol = 1e-6

    def __init__(self, P, q, C, lo, hi, rho=0.1):
        self.P, self.q, self.C, self.lo, self.hi = P, q, C, lo, hi
        self.rho = rho
        self._factor()

    def _factor(self):
        K = np.diag(self.P + self.sigma) + self.rho * (self.C.T @ self.C)
        self.K_inv = np.linalg.inv(K)

    def run(self, x0, max_iter, tol) -> _Result:
        P, q, C, lo, hi = self.P, self.q, self.C, self.lo, self.hi
        sigma, alpha = self.sigma, self.alpha
        x = x0.copy()
        z = np.clip(C @ x, lo, hi)
        y = np.zeros(C.shape[0])
        r_prim = r_dual = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            rho = self.rho
            x_t = self.K_inv @ (sigma * x - q + C.T @ (rho * z - y))
            z_t = C @ x_t
            x = alpha * x_t + (1.0 - alpha) * x
            z_relax = alpha * z_t + (1.0 - alpha) * z
            z = np.clip(z_relax + y / rho, lo, hi)
            dy = rho * (z_relax - z)
            y = y + dy

            Cx = C @ x
            r_prim = float(np.max(np.abs(Cx - z), initial=0.0))
            Cty = C.T @ y
            r_dual = float(np.max(np.abs(P * x + q + Cty), initial=0.0))
            if r_prim <= tol and r_dual <= tol:
                return _Result(x, y, it, r_prim, r_dual, True)
            if self._certifies_infeasible(dy):
                return _Result(x, y, it, r_prim, r_dual, False, infeasible=True)
            if it % self.adapt_every == 0:
                self._adapt(x, z, y, Cx, Cty, r_prim, r_dual)
        return _Result(x, y, it, r_prim, r_dual, False)

    def _certifies_infeasible(self, dy) -> bool:
        scale = np.max(np.abs(dy), initial=0.0)
        if scale <= 1e-12:
            return False
        if np.max(np.abs(self.C.T @ dy)) > self.infeas_tol * scale:
            return False
        pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
        if np.any((pos > 0) & np.isinf(self.hi)) or np.any((neg < 0) & np.isinf(self.lo)):
            return False
        hi = np.where(np.isinf(self.hi), 0.0, self.hi)
        lo = np.where(np.isinf(self.lo), 0.0, self.lo)
        return float(hi @ pos + lo @ neg) < -self.infeas_tol * scale

    def _adapt(self, x, z, y, Cx, Cty, r_prim, r_dual):
        prim_scale = max(np.max(np.abs(Cx)), np.max(np.abs(z)), 1e-10)
        dual_scale = max(np.max(np.abs(self.P * x)), np.max(np.abs(Cty)), np.max(np.abs(self.q)), 1e-10)
        ratio = (r_prim / prim_scale) / max(r_dual / dual_scale, 1e-30)
        new_rho = float(np.clip(self.rho * np.sqrt(ratio), 1e-6, 1e6))
        if new_rho > 5.0 * self.rho or new_rho < 0.2 * self.rho:
            self.rho = new_rho
            self._factor()


def _polish(P, q, C, lo, hi, x, y, tol):
    """Solve the equality KKT system on a guessed active set; ``None`` if the guess fails."""
    Cx = C @ x
    guesses = [
        ((Cx - lo) < -y, (hi - Cx) < y),
        ((Cx - lo) <= 10 * tol, (hi - Cx) <= 10 * tol),
    ]
    n = len(x)
    for low, upp in guesses:
        low = low & np.isfinite(lo)
        upp = upp & np.isfinite(hi) & ~low
        act = np.flatnonzero(low | upp)
        Ca = C[act]
        b = np.where(low[act], lo[act], hi[act])
        K = np.block([[np.diag(P), Ca.T], [Ca, np.zeros((len(act), len(act)))]])
        rhs = np.concatenate([-q, b])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        xp = sol[:n]
        ya = sol[n:]
        Cxp = C @ xp
        feas = np.all(Cxp >= lo - 1e-9) and np.all(Cxp <= hi + 1e-9)
        signs = np.all(ya[low[act]] <= 1e-9) and np.all(ya[upp[act]] >= -1e-9)
        if feas and signs and np.allclose(Ca @ xp, b, atol=1e-8):
            yp = np.zeros(len(lo))
            yp[act] = ya
            return xp, yp
    return None


def _normalize_rows(A, l):
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 1e-12
    if np.any(~keep & (l > 0)):
        return None  # a zero row that demands a positive value
    scale = np.where(keep, norms, 1.0)
    return A[keep] / scale[keep, None], l[keep] / scale[keep], keep, scale


class QpSolver:
    """Reusable solver; keeps the previous solution for warm starting."""

    def __init__(self, max_iter: int = 100, tol: float = 1e-3, slack_penalty: float = 1e6,
                 polish: bool = True, warm_start: bool = True):
        self.max_iter = max_iter
        self.tol = tol
        self.slack_penalty = slack_penalty
        self.polish = polish
        self.warm_start = warm_start
        self._last = None

    def reset(self):
        self._last = None

    def solve(self, p: QpProblem) -> QpSolution:
        sol = self._solve(p)
        self._last = sol.u_star.copy()
        return sol

    def _solve(self, p: QpProblem) -> QpSolution:
        n = len(p.u_ref)
        u_box = np.clip(p.u_ref, p.u_min, p.u_max)
        # diagonal W: the box projection is the box-constrained optimum
        if p.n_constraints == 0 or np.all(p.A @ u_box >= p.l):
            return QpSolution(u_box, OPTIMAL, 0, 0.0, 0.0, np.zeros(p.n_constraints))

        normalized = _normalize_rows(p.A, p.l)
        if normalized is None:
            return self._solve_relaxed(p)
        A, l, keep, scale = normalized

        C = np.vstack([A, np.eye(n)])
        lo = np.concatenate([l, p.u_min])
        hi = np.concatenate([np.full(len(l), np.inf), p.u_max])
        P = p.W.astype(float)
        q = -p.W * p.u_ref
        x0 = self._last if (self.warm_start and self._last is not None) else u_box
        res = _Admm(P, q, C, lo, hi).run(np.clip(x0, p.u_min, p.u_max), self.max_iter, self.tol)
        if res.infeasible:
            return self._solve_relaxed(p)

        x, y = res.x, res.y
        status = OPTIMAL if res.converged else MAX_ITERATIONS
        if self.polish:
            polished = _polish(P, q, C, lo, hi, x, y, self.tol)
            if polished is not None:
                x, y = polished
                status = OPTIMAL
        r_prim, r_dual = _residuals(P, q, C, lo, hi, x, y)
        if status == MAX_ITERATIONS:
            log.debug("QP hit the iteration cap (primal %.2e, dual %.2e)", r_prim, r_dual)
        mult = np.zeros(p.n_constraints)
        mult[keep] = -y[: len(l)] / scale[keep]
        u = np.clip(x, p.u_min, p.u_max)
        return QpSolution(u, status, res.iterations, r_prim, r_dual, mult)

    def _solve_relaxed(self, p: QpProblem) -> QpSolution:
        """Rows become A u + s >= l with s >= 0 and a penalty rho * |s|^2."""
        n, m = len(p.u_ref), p.n_constraints
        C = np.block([
            [p.A, np.eye(m)],
            [np.zeros((m, n)), np.eye(m)],
            [np.eye(n), np.zeros((n, m))],
        ])
        norms = np.linalg.norm(C, axis=1)
        C = C / norms[:, None]
        lo = np.concatenate([p.l, np.zeros(m), p.u_min]) / norms
        hi = np.concatenate([np.full(2 * m, np.inf), p.u_max]) / norms
        P = np.concatenate([p.W, np.full(m, 2.0 * self.slack_penalty)])
        q = np.concatenate([-p.W * p.u_ref, np.zeros(m)])
        u0 = np.clip(p.u_ref, p.u_min, p.u_max)
        x0 = np.concatenate([u0, np.maximum(p.l - p.A @ u0, 0.0)])
        res = _Admm(P, q, C, lo, hi).run(x0, self.max_iter, self.tol)
        x, y = res.x, res.y
        if self.polish:
            polished = _polish(P, q, C, lo, hi, x, y, self.tol)
            if polished is not None:
                x, y = polished
        r_prim, r_dual = _residuals(P, q, C, lo, hi, x, y)
        log.warning("CBF constraints infeasible within the velocity box; solved slack relaxation "
                    "(max slack %.3e)", float(np.max(x[n:], initial=0.0)))
        mult = -y[:m] / norms[:m]
        return QpSolution(np.clip(x[:n], p.u_min, p.u_max), INFEASIBLE_RELAXED, res.iterations,
                          r_prim, r_dual, mult)


def solve(p: QpProblem, max_iter: int = 100, tol: float = 1e-3) -> QpSolution:
    """One-shot cold-started solve."""
    return QpSolver(max_iter=max_iter, tol=tol, warm_start=False).solve(p)
