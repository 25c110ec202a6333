"""Two-player horizon-splitting game and the weighted-sum alternative.

The revenue player controls the intervals in ``split.v2g_set`` and minimises
the tariff-weighted energy bill; the degradation player controls the rest
and minimises the monetised smooth cyclic loss.  Both share the energy
corridor and terminal band, so the game is a generalized one.  Its exact
potential keeps each player's terms on its own intervals only; the potential
minimiser over the joint feasible set is a GNE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .degradation import (
    B1_FLOOR,
    CellDegradationParams,
    coefficient_profile,
    n_hat as compute_n_hat,
)
from .qp import QuadraticProgram, SolveReport, SolverSettings, solve
from .session import ChargingSchedule, HorizonSplit, SessionConfig, assign_intervals
from .thermal import TemperatureProfile


class SolveError(RuntimeError):
    def __init__(self, message: str, report: SolveReport):
        super().__init__(f"{message}: solver status {report.status!r} after {report.iterations} iterations")
        self.report = report


@dataclass(frozen=True)
class GameInstance:
    session: SessionConfig
    split: HorizonSplit
    B1: np.ndarray
    B2_hat: np.ndarray
    n_hat: float
    params: CellDegradationParams = field(default_factory=CellDegradationParams)
    temperatures: TemperatureProfile | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        T = self.session.T
        B1 = np.array(self.B1, dtype=float)
        B2_hat = np.array(self.B2_hat, dtype=float)
        if B1.shape != (T,) or B2_hat.shape != (T,):
            raise ValueError(f"coefficient vectors must have length T={T}")
        if self.split.T != T:
            raise ValueError("split does not match the session horizon")
        if np.any(B1 < B1_FLOOR):
            raise ValueError("B1 below the convexity floor")
        B1.setflags(write=False)
        B2_hat.setflags(write=False)
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "B2_hat", B2_hat)

    @property
    def T(self) -> int:
        return self.session.T

    @property
    def coefficients(self) -> np.ndarray:
        """Nominal uncertain-parameter vector ``[B1, B2_hat]`` (length 2T)."""
        return np.concatenate([self.B1, self.B2_hat])

    def with_split(self, split: HorizonSplit) -> "GameInstance":
        return GameInstance(self.session, split, self.B1, self.B2_hat, self.n_hat,
                            self.params, self.temperatures)

    def degradation_terms(self, B1=None, B2_hat=None) -> tuple[np.ndarray, np.ndarray]:
        """Per-interval monetised loss ``const + quad * P**2`` as ``(const, quad)`` [EUR, EUR/kW^2]."""
        B1 = self.B1 if B1 is None else np.asarray(B1, dtype=float)
        B2_hat = self.B2_hat if B2_hat is None else np.asarray(B2_hat, dtype=float)
        pack = self.session.pack
        const = pack.gamma * pack.pack_capacity * B1 * pack.C_rated ** 2 * self.n_hat
        quad = const * B2_hat ** 2 / (self.params.h * pack.scale_s ** 2)
        return const, quad


def build_instance(
    session: SessionConfig,
    split: HorizonSplit | int,
    battery_temperature,
    params: CellDegradationParams = CellDegradationParams(),
) -> GameInstance:
    """Assemble a game from a session, a split (or ``w``) and battery temperatures.

    ``battery_temperature`` is either a :class:`TemperatureProfile` with
    ``T + 1`` samples, a length-``T`` array of interval temperatures [K], or
    a scalar.
    """
    T = session.T
    if isinstance(split, (int, np.integer)):
        split = assign_intervals(session.alpha, int(split))
    profile = None
    if isinstance(battery_temperature, TemperatureProfile):
        profile = battery_temperature
        if len(profile.T_b) != T + 1:
            raise ValueError(f"temperature profile needs {T + 1} samples, has {len(profile.T_b)}")
        T_b = profile.interval_means()
    else:
        T_b = np.broadcast_to(np.asarray(battery_temperature, dtype=float), (T,))
    B1, B2_hat, _ = coefficient_profile(T_b, params, session.pack)
    nh = compute_n_hat(session.pack.n_max, session.delta_t, session.horizon_hours)
    return GameInstance(session, split, B1, B2_hat, nh, params, profile)


def _constraints(instance: GameInstance):
    instance.session.precheck()
    return instance.session.constraint_system()


def build_potential(instance: GameInstance, B1=None, B2_hat=None) -> QuadraticProgram:
    """Potential minimisation as a QP (constant loss offsets dropped)."""
    A, lo, hi = _constraints(instance)
    cfg = instance.session
    mask = instance.split.v2g_mask()
    _, quad = instance.degradation_terms(B1, B2_hat)
    linear = np.where(mask, cfg.alpha * cfg.delta_t, 0.0)
    diag = np.where(mask, 0.0, 2.0 * quad)
    return QuadraticProgram(diag, linear, A, lo, hi)


def build_multiobjective(instance: GameInstance, rho: float, B1=None, B2_hat=None) -> QuadraticProgram:
    """Weighted sum ``rho * revenue + (1 - rho) * degradation`` over all intervals."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho!r}")
    A, lo, hi = _constraints(instance)
    cfg = instance.session
    _, quad = instance.degradation_terms(B1, B2_hat)
    return QuadraticProgram((1.0 - rho) * 2.0 * quad, rho * (cfg.alpha * cfg.delta_t), A, lo, hi)


def revenue_objective(instance: GameInstance, P) -> float:
    """Revenue player's cost: tariff-weighted energy over every interval [EUR]."""
    cfg = instance.session
    return float(np.sum(cfg.alpha * np.asarray(P)) * cfg.delta_t)


def degradation_objective(instance: GameInstance, P, B1=None, B2_hat=None) -> float:
    """Degradation player's cost: monetised smooth loss over every interval [EUR]."""
    const, quad = instance.degradation_terms(B1, B2_hat)
    P = np.asarray(P, dtype=float)
    return float(np.sum(const + quad * P * P))


def potential_value(instance: GameInstance, P, B1=None, B2_hat=None) -> float:
    cfg = instance.session
    mask = instance.split.v2g_mask()
    P = np.asarray(P, dtype=float)
    const, quad = instance.degradation_terms(B1, B2_hat)
    revenue = np.sum(np.where(mask, cfg.alpha * P, 0.0)) * cfg.delta_t
    loss = np.sum(np.where(mask, 0.0, const + quad * P * P))
    return float(revenue + loss)


def multiobjective_value(instance: GameInstance, P, rho: float, B1=None, B2_hat=None) -> float:
    return rho * revenue_objective(instance, P) + (1.0 - rho) * degradation_objective(instance, P, B1, B2_hat)


def _schedule(instance: GameInstance, report: SolveReport, what: str) -> ChargingSchedule:
    if not report.optimal:
        raise SolveError(what, report)
    return ChargingSchedule.evaluate(report.x, instance.session, instance.B1, instance.B2_hat,
                                     instance.n_hat, instance.params, solve_report=report)


def solve_gne(instance: GameInstance, settings: SolverSettings | None = None) -> ChargingSchedule:
    report = solve(build_potential(instance), settings)
    return _schedule(instance, report, f"potential problem (w={instance.split.w})")


def solve_mo(instance: GameInstance, rho: float, settings: SolverSettings | None = None) -> ChargingSchedule:
    report = solve(build_multiobjective(instance, rho), settings)
    return _schedule(instance, report, f"weighted-sum problem (rho={rho:g})")


@dataclass(frozen=True)
class TradeoffPoint:
    hyper: float  # w or rho
    charging_cost: float
    degradation_cost: float
    degradation_loss: float
    schedule: ChargingSchedule = field(repr=False)


def tradeoff_point(instance: GameInstance, schedule: ChargingSchedule, hyper: float) -> TradeoffPoint:
    """Costs recomputed from the schedule over all intervals."""
    P = schedule.P_bat
    degradation = degradation_objective(instance, P)
    return TradeoffPoint(
        hyper=hyper,
        charging_cost=revenue_objective(instance, P),
        degradation_cost=degradation,
        degradation_loss=degradation / _money(instance),
        schedule=schedule,
    )


def _money(instance: GameInstance) -> float:
    pack = instance.session.pack
    return pack.gamma * pack.pack_capacity


# --------------------------------------------------------------------------
# verification


def _segment(A, lo, hi, x, d):
    """Step range ``[t_lo, t_hi]`` keeping ``lo <= A (x + t d) <= hi``."""
    Ax, Ad = A @ x, A @ d
    t_lo, t_hi = -np.inf, np.inf
    nz = np.abs(Ad) > 1e-14
    if np.any(nz):
        a = (lo[nz] - Ax[nz]) / Ad[nz]
        b = (hi[nz] - Ax[nz]) / Ad[nz]
        t_lo = float(np.max(np.minimum(a, b)))
        t_hi = float(np.min(np.maximum(a, b)))
    return min(t_lo, 0.0), max(t_hi, 0.0)


def reference_point(session: SessionConfig) -> np.ndarray:
    """Constant-power schedule landing as close to ``E_des`` as the box allows."""
    need = session.E_des - session.E_0
    p = need / (session.energy_gain * session.T)
    return np.full(session.T, float(np.clip(p, session.P_min, session.P_max)))


def random_feasible_point(session: SessionConfig, rng: np.random.Generator, steps: int = 20,
                          start=None) -> np.ndarray:
    """Hit-and-run walk inside the feasible set, starting from a constant schedule."""
    A, lo, hi = session.constraint_system()
    x = reference_point(session) if start is None else np.array(start, dtype=float)
    for _ in range(steps):
        d = rng.normal(size=session.T)
        t_lo, t_hi = _segment(A, lo, hi, x, d)
        x = x + rng.uniform(t_lo, t_hi) * d
    return x


def verify_potential_identity(instance: GameInstance, trials: int = 1000, rng_seed: int = 0) -> float:
    """Largest ``|dPotential - dTheta_i|`` over random feasible unilateral deviations."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    cfg = instance.session
    A, lo, hi = cfg.constraint_system()
    blocks = [np.array(instance.split.v2g_set, dtype=int), np.array(instance.split.bd_set, dtype=int)]
    objectives = [revenue_objective, degradation_objective]
    u = random_feasible_point(cfg, rng)
    worst = 0.0
    for k in range(trials):
        u = random_feasible_point(cfg, rng, steps=2, start=u)
        i = k % 2
        block = blocks[i]
        if block.size == 0:
            continue
        moves = []
        for _ in range(2):
            d = np.zeros(cfg.T)
            d[block] = rng.normal(size=block.size)
            t_lo, t_hi = _segment(A, lo, hi, u, d)
            moves.append(u + rng.uniform(t_lo, t_hi) * d)
        x, y = moves
        d_pot = potential_value(instance, x) - potential_value(instance, y)
        d_theta = objectives[i](instance, x) - objectives[i](instance, y)
        worst = max(worst, abs(d_pot - d_theta))
    return worst


@dataclass(frozen=True)
class GneCheck:
    improvement_v2g: float  # EUR
    improvement_bd: float
    relative_v2g: float
    relative_bd: float

    def passes(self, tol: float = 1e-6) -> bool:
        return self.relative_v2g <= tol and self.relative_bd <= tol


def best_response(instance: GameInstance, P, player: str, settings: SolverSettings | None = None):
    """Re-optimise one player's block with the other block fixed.

    Returns ``(P_best, report)``; ``report`` is ``None`` for an empty block.
    The corridor is enforced at every interval with the opponent's powers
    entering as fixed offsets.
    """
    P = np.asarray(P, dtype=float)
    cfg = instance.session
    if player == "v2g":
        block = np.array(instance.split.v2g_set, dtype=int)
    elif player == "bd":
        block = np.array(instance.split.bd_set, dtype=int)
    else:
        raise ValueError(f"unknown player {player!r}")
    if block.size == 0:
        return P.copy(), None
    fixed = np.setdiff1d(np.arange(cfg.T), block)
    A, lo, hi = cfg.constraint_system()
    offset = A[:, fixed] @ P[fixed]
    A_sub = A[:, block]
    keep = np.any(A_sub != 0, axis=1)
    if player == "v2g":
        diag = np.zeros(block.size)
        linear = cfg.alpha[block] * cfg.delta_t
    else:
        _, quad = instance.degradation_terms()
        diag = 2.0 * quad[block]
        linear = np.zeros(block.size)
    qp = QuadraticProgram(diag, linear, A_sub[keep], (lo - offset)[keep], (hi - offset)[keep])
    report = solve(qp, settings)
    if not report.optimal:
        raise SolveError(f"{player} best response", report)
    best = P.copy()
    best[block] = report.x
    return best, report


def verify_gne(schedule, instance: GameInstance, tol: float = 1e-6,
               settings: SolverSettings | None = None) -> GneCheck:
    """Per-player objective improvement available by unilateral re-optimisation.

    Relative improvements are normalised by ``max(1 EUR, |objective|)``.
    """
    P = schedule.P_bat if isinstance(schedule, ChargingSchedule) else np.asarray(schedule, dtype=float)
    out = {}
    for player, objective in (("v2g", revenue_objective), ("bd", degradation_objective)):
        best, report = best_response(instance, P, player, settings)
        if report is None:
            out[player] = (0.0, 0.0)
            continue
        current = objective(instance, P)
        gain = current - objective(instance, best)
        out[player] = (gain, gain / max(1.0, abs(current)))
    return GneCheck(out["v2g"][0], out["bd"][0], out["v2g"][1], out["bd"][1])


def sweep_w(instance: GameInstance, ws, settings: SolverSettings | None = None) -> list[TradeoffPoint]:
    """Trade-off points for several ``w`` on a fixed temperature profile."""
    points = []
    for w in ws:
        inst = instance.with_split(assign_intervals(instance.session.alpha, int(w)))
        points.append(tradeoff_point(inst, solve_gne(inst, settings), w))
    return points
