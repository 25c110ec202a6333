"""Convex QP solver for separable objectives.

Problems have the form::

    minimize    0.5 * sum(diag_q * x**2) + linear_q @ x
    subject to  lower <= A @ x <= upper

with ``diag_q >= 0``.  The ``0.5`` is part of the objective convention
everywhere in this module.  The iteration is the ADMM splitting used by OSQP
(Stellato et al.) with Ruiz equilibration and an adaptive penalty; whenever
the detected active set changes, a polishing step solves the equality
constrained KKT system on that set and is accepted only if it meets the
termination tolerances on the original, unscaled data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

OPTIMAL = "optimal"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible"

_MIN_SCALING = 1e-4
_MAX_SCALING = 1e4


@dataclass(frozen=True)
class QuadraticProgram:
    diag_q: np.ndarray
    linear_q: np.ndarray
    constraint_matrix: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.diag_q, dtype=float).ravel()
        q = np.asarray(self.linear_q, dtype=float).ravel()
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.ndim == 1 and A.size == 0:
            A = A.reshape(0, P.size)
        l = np.asarray(self.lower_bounds, dtype=float).ravel()
        u = np.asarray(self.upper_bounds, dtype=float).ravel()
        n = P.size
        if q.size != n or A.ndim != 2 or A.shape[1] != n:
            raise ValueError("inconsistent problem dimensions")
        if l.size != A.shape[0] or u.size != A.shape[0]:
            raise ValueError("bounds must have one entry per constraint row")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("diag_q must be finite and >= 0 (convexity)")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(A))):
            raise ValueError("linear terms and constraint matrix must be finite")
        if np.any(l > u):
            raise ValueError("lower_bounds must not exceed upper_bounds")
        for name, arr in (("diag_q", P), ("linear_q", q), ("constraint_matrix", A),
                          ("lower_bounds", l), ("upper_bounds", u)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.diag_q.size

    @property
    def m(self) -> int:
        return self.constraint_matrix.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.dot(self.diag_q * x, x) + np.dot(self.linear_q, x))

    def scaled(self, factor: float) -> "QuadraticProgram":
        """Same feasible set, objective multiplied by ``factor > 0``."""
        return QuadraticProgram(self.diag_q * factor, self.linear_q * factor,
                                self.constraint_matrix, self.lower_bounds, self.upper_bounds)


def objective_value(qp: QuadraticProgram, x) -> float:
    return qp.objective(x)


@dataclass(frozen=True)
class SolverSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    eps_prim_inf: float = 1e-6
    max_iter: int = 200_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 50
    check_interval: int = 25
    scaling_iter: int = 10
    polish: bool = True


@dataclass(frozen=True)
class SolveReport:
    x: np.ndarray
    y: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    polished: bool = False
    settings: SolverSettings = field(default_factory=SolverSettings)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _norm(v) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _limit(v):
    v = np.where(v < _MIN_SCALING, 1.0, v)
    return np.minimum(v, _MAX_SCALING)


def _equilibrate(P, q, A, iters):
    n, m = P.size, A.shape[0]
    D, E, c = np.ones(n), np.ones(m), 1.0
    Ps, qs, As = P.copy(), q.copy(), A.copy()
    for _ in range(iters):
        absA = np.abs(As)
        col = np.maximum(np.abs(Ps), absA.max(axis=0)) if m else np.abs(Ps)
        dx = 1.0 / np.sqrt(_limit(col))
        dz = 1.0 / np.sqrt(_limit(absA.max(axis=1))) if m else np.ones(0)
        Ps = dx * Ps * dx
        As = dz[:, None] * As * dx[None, :]
        qs = dx * qs
        D *= dx
        E *= dz
        cost = max(float(np.mean(np.abs(Ps))), _norm(qs))
        gamma = 1.0 / float(_limit(np.array([cost]))[0])
        Ps *= gamma
        qs *= gamma
        c *= gamma
    return Ps, qs, As, D, E, c


def _true_residuals(qp: QuadraticProgram, x, y):
    Ax = qp.constraint_matrix @ x
    viol = Ax - np.clip(Ax, qp.lower_bounds, qp.upper_bounds)
    Px = qp.diag_q * x
    Aty = qp.constraint_matrix.T @ y
    dual = Px + qp.linear_q + Aty
    eps_scale_p = max(_norm(Ax), _norm(np.clip(Ax, qp.lower_bounds, qp.upper_bounds)))
    eps_scale_d = max(_norm(Px), _norm(Aty), _norm(qp.linear_q))
    return _norm(viol), _norm(dual), eps_scale_p, eps_scale_d


def _active_sets(qp: QuadraticProgram, z, y):
    l, u = qp.lower_bounds, qp.upper_bounds
    eq = (u - l) <= 1e-12 * np.maximum(1.0, np.abs(l))
    lower = ((z - l) < -y) | eq
    upper = ((u - z) < y) & ~eq
    return lower, upper, eq


def _polish_on(qp: QuadraticProgram, lower, upper, eq, s: SolverSettings):
    act = lower | upper
    A = qp.constraint_matrix
    n, k = qp.n, int(act.sum())
    b = np.where(lower, qp.lower_bounds, qp.upper_bounds)[act]
    Aa = A[act]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = np.diag(qp.diag_q)
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    rhs = np.concatenate([-qp.linear_q, b])
    x = np.linalg.lstsq(K, rhs, rcond=None)[0][:n]
    # Degenerate vertices have non-unique multipliers and the minimum-norm
    # choice can carry the wrong sign, so the multipliers are refit with
    # their sign pattern enforced.
    yp = np.zeros(qp.m)
    if k:
        rows = np.flatnonzero(act)
        sign = np.where(upper[rows], 1.0, -1.0)
        free = eq[rows]
        cols = [Aa.T * sign, -Aa.T[:, free] * sign[free]]
        lam = optimize.nnls(np.hstack(cols), -(qp.diag_q * x + qp.linear_q), maxiter=50 * (k + n))[0]
        y_act = sign * lam[:k]
        y_act[free] -= sign[free] * lam[k:]
        yp[rows] = y_act
    prim, dual, sp, sd = _true_residuals(qp, x, yp)
    comp = _norm(Aa @ x - b) if k else 0.0
    eps_p = s.eps_abs + s.eps_rel * sp
    eps_d = s.eps_abs + s.eps_rel * sd
    if prim <= eps_p and comp <= eps_p and dual <= eps_d:
        return x, yp
    return None


def _polish(qp: QuadraticProgram, z, y, s: SolverSettings):
    lower, upper, eq = _active_sets(qp, z, y)
    out = _polish_on(qp, lower, upper, eq, s)
    if out is not None:
        return out
    # fall back to every row the iterate already sits on
    l, u = qp.lower_bounds, qp.upper_bounds
    tol = 1e-6 * max(1.0, _norm(z))
    near_l = (np.abs(z - l) <= tol) | lower
    near_u = (np.abs(u - z) <= tol) & ~near_l | (upper & ~near_l)
    if np.array_equal(near_l, lower) and np.array_equal(near_u, upper):
        return None
    return _polish_on(qp, near_l, near_u, eq, s)


def _infeasibility_certificate(qp: QuadraticProgram, dy, eps) -> bool:
    ndy = _norm(dy)
    if ndy <= 1e-30:
        return False
    l, u = qp.lower_bounds, qp.upper_bounds
    pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
    tiny = eps * ndy
    if np.any((pos > tiny) & ~np.isfinite(u)) or np.any((neg < -tiny) & ~np.isfinite(l)):
        return False
    u_f = np.where(np.isfinite(u), u, 0.0)
    l_f = np.where(np.isfinite(l), l, 0.0)
    support = float(np.dot(u_f, pos) + np.dot(l_f, neg))
    return _norm(qp.constraint_matrix.T @ dy) <= tiny and support <= -tiny


def solve(qp: QuadraticProgram, settings: SolverSettings | None = None) -> SolveReport:
    """Minimise ``qp``.  Single-threaded and deterministic for identical inputs."""
    s = settings or SolverSettings()
    n, m = qp.n, qp.m
    P, q, A = qp.diag_q, qp.linear_q, qp.constraint_matrix
    l, u = qp.lower_bounds, qp.upper_bounds

    Ps, qs, As, D, E, c = _equilibrate(P, q, A, s.scaling_iter)
    ls, us = E * l, E * u
    eq = (us - ls) <= 1e-12 * np.maximum(1.0, np.abs(ls))
    free = ~np.isfinite(ls) & ~np.isfinite(us)

    def rho_vector(rho):
        return np.where(eq, 1e3 * rho, np.where(free, 1e-6, rho))

    def factor(rv):
        K = np.diag(Ps + s.sigma) + As.T @ (rv[:, None] * As)
        return linalg.cho_solve(linalg.cho_factor(K), np.eye(n))

    rho = s.rho
    rv = rho_vector(rho)
    Kinv = factor(rv)
    AsT = As.T

    x, z, y = np.zeros(n), np.zeros(m), np.zeros(m)
    y_check = y.copy()
    alpha = s.alpha
    status = MAX_ITER
    polished = None
    last_signature = None
    k = 0
    for k in range(1, s.max_iter + 1):
        xt = Kinv @ (s.sigma * x - qs + AsT @ (rv * z - y))
        zt = As @ xt
        x = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.clip(zr + y / rv, ls, us)
        y = y + rv * (zr - z_new)
        z = z_new

        if k % s.check_interval and k != s.max_iter:
            continue
        xu, yu, zu = D * x, E * y / c, z / E
        Ax = A @ xu
        Px = P * xu
        Aty = A.T @ yu
        prim = _norm(Ax - zu)
        dual = _norm(Px + q + Aty)
        eps_p = s.eps_abs + s.eps_rel * max(_norm(Ax), _norm(zu))
        eps_d = s.eps_abs + s.eps_rel * max(_norm(Px), _norm(Aty), _norm(q))
        if prim <= eps_p and dual <= eps_d:
            status = OPTIMAL
            break
        if m and _infeasibility_certificate(qp, E * (y - y_check), s.eps_prim_inf):
            status = INFEASIBLE
            break
        y_check = y.copy()
        if s.polish and m:
            lower, upper, _ = _active_sets(qp, zu, yu)
            signature = (lower.tobytes(), upper.tobytes())
            if signature != last_signature:
                last_signature = signature
                polished = _polish(qp, zu, yu, s)
                if polished is not None:
                    status = OPTIMAL
                    break
        if s.adaptive_rho and k % s.adaptive_rho_interval == 0:
            Asx = As @ x
            AsTy = AsT @ y
            p_rel = _norm(Asx - z) / max(_norm(Asx), _norm(z), 1e-30)
            d_rel = _norm(Ps * x + qs + AsTy) / max(_norm(Ps * x), _norm(AsTy), _norm(qs), 1e-30)
            new_rho = float(np.clip(rho * np.sqrt(p_rel / max(d_rel, 1e-30)), 1e-6, 1e6))
            if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                rho = new_rho
                rv = rho_vector(rho)
                Kinv = factor(rv)

    if polished is not None:
        x_out, y_out = polished
    else:
        x_out, y_out = D * x, E * y / c
    prim, dual, _, _ = _true_residuals(qp, x_out, y_out)
    return SolveReport(
        x=x_out,
        y=y_out,
        objective=qp.objective(x_out),
        primal_residual=prim,
        dual_residual=dual,
        iterations=k,
        status=status,
        polished=polished is not None,
        settings=s,
    )


def kkt_residual(qp: QuadraticProgram, x, y) -> float:
    """Largest violation of primal feasibility, stationarity, dual sign and
    complementary slackness for the pair ``(x, y)``."""
    Ax = qp.constraint_matrix @ x
    l, u = qp.lower_bounds, qp.upper_bounds
    prim = _norm(Ax - np.clip(Ax, l, u))
    stat = _norm(qp.diag_q * x + qp.linear_q + qp.constraint_matrix.T @ y)
    pos, neg = np.maximum(y, 0.0), np.minimum(y, 0.0)
    gap_u = np.where(np.isfinite(u), u - Ax, 0.0)
    gap_l = np.where(np.isfinite(l), Ax - l, 0.0)
    comp = max(_norm(pos * gap_u), _norm(neg * gap_l))
    sign = max(_norm(np.where(np.isfinite(u), 0.0, pos)), _norm(np.where(np.isfinite(l), 0.0, neg)))
    return max(prim, stat, comp, sign)
