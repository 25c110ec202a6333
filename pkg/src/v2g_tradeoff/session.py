"""Charging-session data: horizon, tariff, power/energy limits, the price-based
horizon split and the schedule/feasibility containers shared by both players.

Internal units are kW, kWh, hours and EUR.  Interval indices are 0-based in
the API and 1-based in exported files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .degradation import (
    BatteryPackSpec,
    CellDegradationParams,
    degradation_cost,
    smooth_loss_from_coefficients,
)


class InfeasibleSessionError(ValueError):
    """The energy target cannot be reached within the power limits."""


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SessionConfig:
    T: int
    delta_t: float  # h
    P_min: float  # kW, <= 0
    P_max: float  # kW, >= 0
    E_min: float  # kWh
    E_max: float
    E_0: float
    E_des: float
    epsilon: float
    eta_avg: float
    alpha: np.ndarray  # EUR/kWh per interval
    pack: BatteryPackSpec = field(default_factory=BatteryPackSpec)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen_array(self.alpha))
        problems = []
        if int(self.T) != self.T or self.T < 1:
            problems.append(f"T must be a positive integer, got {self.T!r}")
        if not self.delta_t > 0:
            problems.append("delta_t must be > 0")
        if self.P_min > 0 or self.P_max < 0:
            problems.append("power bounds must satisfy P_min <= 0 <= P_max")
        if not self.E_min <= self.E_0 <= self.E_max:
            problems.append("E_0 must lie in [E_min, E_max]")
        if not self.E_min <= self.E_des <= self.E_max:
            problems.append("E_des must lie in [E_min, E_max]")
        if not self.epsilon >= 0:
            problems.append("epsilon must be >= 0")
        if not 0 < self.eta_avg <= 1:
            problems.append("eta_avg must lie in (0, 1]")
        if self.alpha.shape != (self.T,):
            problems.append(f"alpha must have length T={self.T}, got shape {self.alpha.shape}")
        elif not np.all(np.isfinite(self.alpha)):
            problems.append("alpha must be finite")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def horizon_hours(self) -> float:
        return self.T * self.delta_t

    @property
    def energy_gain(self) -> float:
        """kWh stored per kW held for one interval."""
        return self.eta_avg * self.delta_t

    def replace(self, **changes) -> "SessionConfig":
        return replace(self, **changes)

    def precheck(self) -> None:
        """Raise :class:`InfeasibleSessionError` if the terminal band is out of reach."""
        need = self.E_des - self.E_0
        reach_up = self.energy_gain * self.T * self.P_max
        reach_down = self.energy_gain * self.T * (-self.P_min)
        if need - self.epsilon > reach_up + 1e-12 or -need - self.epsilon > reach_down + 1e-12:
            raise InfeasibleSessionError(
                f"cannot move from {self.E_0:g} kWh to within {self.epsilon:g} kWh of "
                f"{self.E_des:g} kWh in {self.T} intervals with power in "
                f"[{self.P_min:g}, {self.P_max:g}] kW"
            )

    def constraint_system(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows ``[I; L]`` (box then prefix sums) with their bounds in kW-sum units."""
        T = self.T
        A = np.vstack([np.eye(T), np.tril(np.ones((T, T)))])
        g = self.energy_gain
        lo = np.concatenate([np.full(T, float(self.P_min)), np.full(T, (self.E_min - self.E_0) / g)])
        hi = np.concatenate([np.full(T, float(self.P_max)), np.full(T, (self.E_max - self.E_0) / g)])
        lo[-1] = max(lo[-1], (self.E_des - self.epsilon - self.E_0) / g)
        hi[-1] = min(hi[-1], (self.E_des + self.epsilon - self.E_0) / g)
        return A, lo, hi

    def energy_trace(self, P_bat) -> np.ndarray:
        return self.E_0 + self.energy_gain * np.cumsum(np.asarray(P_bat, dtype=float))


def per_unit_to_kwh(
    *,
    pack: BatteryPackSpec,
    alpha,
    delta_t: float,
    P_min: float,
    P_max: float,
    E_min_pu: float,
    E_max_pu: float,
    E_0_pu: float,
    E_des_pu: float,
    epsilon_pu: float,
    eta_avg: float = 0.95,
) -> SessionConfig:
    """Build a session from per-unit energy quantities; powers pass through."""
    cap = pack.pack_capacity
    if not cap > 0:
        raise ValueError("pack capacity must be > 0")
    alpha = np.asarray(alpha, dtype=float)
    return SessionConfig(
        T=len(alpha), delta_t=delta_t, P_min=P_min, P_max=P_max,
        E_min=E_min_pu * cap, E_max=E_max_pu * cap, E_0=E_0_pu * cap,
        E_des=E_des_pu * cap, epsilon=epsilon_pu * cap, eta_avg=eta_avg,
        alpha=alpha, pack=pack,
    )


@dataclass(frozen=True)
class HorizonSplit:
    """Partition of the intervals between the revenue and degradation players."""

    v2g_set: tuple[int, ...]
    bd_set: tuple[int, ...]

    def __post_init__(self):
        v, b = tuple(sorted(self.v2g_set)), tuple(sorted(self.bd_set))
        if set(v) & set(b):
            raise ValueError("interval sets must be disjoint")
        allidx = sorted(v + b)
        if allidx != list(range(len(allidx))):
            raise ValueError("interval sets must cover 0..T-1 exactly once")
        object.__setattr__(self, "v2g_set", v)
        object.__setattr__(self, "bd_set", b)

    @property
    def w(self) -> int:
        return len(self.v2g_set)

    @property
    def T(self) -> int:
        return len(self.v2g_set) + len(self.bd_set)

    def v2g_mask(self) -> np.ndarray:
        mask = np.zeros(self.T, dtype=bool)
        mask[list(self.v2g_set)] = True
        return mask

    @classmethod
    def from_v2g(cls, v2g_set, T: int) -> "HorizonSplit":
        v = set(int(i) for i in v2g_set)
        return cls(tuple(v), tuple(i for i in range(T) if i not in v))


def assign_intervals(alpha, w: int) -> HorizonSplit:
    """Give the ``w`` highest-priced intervals to the revenue player.

    Ties go to the earlier interval.
    """
    alpha = np.asarray(alpha, dtype=float)
    T = alpha.size
    if not 0 <= w <= T:
        raise ValueError(f"w must lie in [0, {T}], got {w}")
    order = np.argsort(-alpha, kind="stable")
    return HorizonSplit.from_v2g(order[:w].tolist(), T)


@dataclass(frozen=True)
class FeasibilityReport:
    """Largest violation of each constraint family (0 when satisfied)."""

    box_kw: float
    corridor_kwh: float
    terminal_kwh: float

    @property
    def max_violation(self) -> float:
        return max(self.box_kw, self.corridor_kwh, self.terminal_kwh)

    def is_feasible(self, tol: float = 1e-6) -> bool:
        return self.max_violation <= tol

    def as_dict(self) -> dict:
        return {"box_kw": self.box_kw, "corridor_kwh": self.corridor_kwh, "terminal_kwh": self.terminal_kwh}


def check_feasibility(P_bat, cfg: SessionConfig) -> FeasibilityReport:
    P = np.asarray(P_bat, dtype=float)
    if P.shape != (cfg.T,):
        raise ValueError(f"schedule must have length {cfg.T}")
    box = max(0.0, float(np.max(P - cfg.P_max)), float(np.max(cfg.P_min - P)))
    E = cfg.energy_trace(P)
    corridor = max(0.0, float(np.max(E - cfg.E_max)), float(np.max(cfg.E_min - E)))
    terminal = max(0.0, abs(cfg.E_des - E[-1]) - cfg.epsilon)
    return FeasibilityReport(box, corridor, terminal)


@dataclass(frozen=True)
class ChargingSchedule:
    P_bat: np.ndarray  # kW
    energy_trace: np.ndarray  # kWh after each interval
    revenue_cost: float  # EUR, tariff-weighted energy over all intervals
    degradation_loss: float  # capacity fraction over all intervals
    degradation_cost: float  # EUR
    feasibility: FeasibilityReport
    solve_report: object = field(default=None, compare=False, repr=False)

    @classmethod
    def evaluate(cls, P_bat, cfg: SessionConfig, B1, B2_hat, nhat: float,
                 params: CellDegradationParams, solve_report=None) -> "ChargingSchedule":
        P = _frozen_array(P_bat)
        loss = float(np.sum(smooth_loss_from_coefficients(P, B1, B2_hat, nhat, params, cfg.pack)))
        return cls(
            P_bat=P,
            energy_trace=_frozen_array(cfg.energy_trace(P)),
            revenue_cost=float(np.sum(cfg.alpha * P) * cfg.delta_t),
            degradation_loss=loss,
            degradation_cost=float(degradation_cost(loss, cfg.pack)),
            feasibility=check_feasibility(P, cfg),
            solve_report=solve_report,
        )

    def as_dict(self) -> dict:
        return {
            "p_kw": self.P_bat.tolist(),
            "energy_kwh": self.energy_trace.tolist(),
            "revenue_cost": self.revenue_cost,
            "degradation_loss": self.degradation_loss,
            "degradation_cost": self.degradation_cost,
            "feasibility": self.feasibility.as_dict(),
        }


def load_tariff_csv(path) -> np.ndarray:
    """Read ``interval,alpha_eur_per_kwh`` rows (1-based, contiguous)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames is None or {"interval", "alpha_eur_per_kwh"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'interval,alpha_eur_per_kwh'")
        for row in reader:
            rows.append((int(row["interval"]), float(row["alpha_eur_per_kwh"])))
    rows.sort()
    if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
        raise ValueError(f"{path}: intervals must be numbered 1..N without gaps")
    alpha = np.array([r[1] for r in rows])
    if not np.all(np.isfinite(alpha)):
        raise ValueError(f"{path}: non-finite tariff value")
    return alpha


def write_tariff_csv(path, alpha) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval", "alpha_eur_per_kwh"])
        for i, a in enumerate(alpha, start=1):
            writer.writerow([i, repr(float(a))])


def minimum_power_rating(cfg: SessionConfig) -> float:
    """Smallest symmetric charger rating [kW] that can reach the terminal band."""
    need = abs(cfg.E_des - cfg.E_0) - cfg.epsilon
    return max(0.0, need / (cfg.energy_gain * cfg.T)) if math.isfinite(need) else math.inf
