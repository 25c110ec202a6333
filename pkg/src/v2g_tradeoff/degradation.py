"""Semi-empirical Li-ion capacity fade: calendar aging, cyclic aging and the
smooth quadratic surrogate of cyclic aging used inside the schedulers.

Units follow the empirical fit: temperatures in kelvin, capacities in Ah at
cell level, powers in kW at pack level, losses in percent (exact models) or
as a capacity fraction (smooth surrogate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Lower bound applied to the cyclic prefactor B1 [1/Ah].  The quadratic fit
#: turns negative between roughly 286.4 K and 309.4 K, which would make the
#: surrogate concave and reward cycling.
B1_FLOOR = 1e-6


@dataclass(frozen=True)
class CellDegradationParams:
    """Empirical constants of the capacity-fade fit (Sanyo UR18650W cell)."""

    a: float = 8.61e-6  # 1/(Ah K^2)
    b: float = -5.13e-3  # 1/(Ah K)
    c: float = 7.63e-1  # 1/Ah
    d: float = -6.7e-3  # 1/(K C-rate)
    e: float = 2.35  # 1/C-rate
    A_cal: float = 14867.0  # 1/day^0.5
    E_a: float = 24500.0  # J/mol
    R_gas: float = 8.314  # J/(mol K)
    h: float = 0.0465

    def __post_init__(self):
        for name in ("A_cal", "E_a", "R_gas", "h"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class BatteryPackSpec:
    """Pack geometry and economics.

    ``V_bat`` is the pack terminal voltage; the cell voltage used for the
    C-rate conversion is ``V_bat / n_series``.
    """

    C_rated: float = 1.5  # Ah, single cell
    n_series: int = 83
    n_parallel: int = 94
    V_bat: float = 350.0  # V, pack
    pack_capacity: float = 50.0  # kWh
    R_int: float = 0.035  # ohm, pack
    gamma: float = 585.0  # EUR per kWh of lost capacity
    n_max: float = 5.28  # full cycles over the session horizon

    def __post_init__(self):
        for name in ("C_rated", "n_series", "n_parallel", "V_bat",
                     "pack_capacity", "R_int", "gamma", "n_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def scale_s(self) -> int:
        return self.n_series * self.n_parallel

    @property
    def V_cell(self) -> float:
        return self.V_bat / self.n_series


@dataclass(frozen=True)
class CyclicCoefficients:
    B1: float  # 1/Ah
    B2: float  # 1/C-rate
    B2_hat: float  # 1/kW, applied to cell-level power
    clamped: bool


def _check_temperature(T_b) -> np.ndarray:
    arr = np.asarray(T_b, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"battery temperature must be finite and > 0 K, got {T_b!r}")
    return arr


def calendar_loss(T_b: float, t: float, params: CellDegradationParams = CellDegradationParams()) -> float:
    """Calendar capacity loss in percent after ``t`` days at ``T_b`` kelvin."""
    _check_temperature(T_b)
    if t < 0:
        raise ValueError(f"elapsed time must be >= 0 days, got {t!r}")
    return params.A_cal * math.exp(-params.E_a / (params.R_gas * T_b)) * math.sqrt(t)


def b1_raw(T_b, params: CellDegradationParams = CellDegradationParams()):
    """Unclamped quadratic prefactor ``a T^2 + b T + c``."""
    return params.a * T_b * T_b + params.b * T_b + params.c


def cyclic_coefficients(
    T_b: float,
    params: CellDegradationParams = CellDegradationParams(),
    pack: BatteryPackSpec = BatteryPackSpec(),
) -> CyclicCoefficients:
    _check_temperature(T_b)
    raw = b1_raw(T_b, params)
    clamped = raw < B1_FLOOR
    B2 = params.d * T_b + params.e
    return CyclicCoefficients(
        B1=B1_FLOOR if clamped else raw,
        B2=B2,
        B2_hat=b2_hat_from_b2(B2, pack),
        clamped=bool(clamped),
    )


def b2_hat_from_b2(B2, pack: BatteryPackSpec):
    # cell power in kW -> C-rate: I_rate = 1000 * P_cell / (V_cell * C_rated)
    return 1000.0 * B2 / (pack.V_cell * pack.C_rated)


def coefficient_profile(
    T_b,
    params: CellDegradationParams = CellDegradationParams(),
    pack: BatteryPackSpec = BatteryPackSpec(),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`cyclic_coefficients` over a temperature array.

    Returns ``(B1, B2_hat, clamped)``.
    """
    T_b = _check_temperature(T_b)
    raw = b1_raw(T_b, params)
    clamped = raw < B1_FLOOR
    B1 = np.where(clamped, B1_FLOOR, raw)
    B2_hat = b2_hat_from_b2(params.d * T_b + params.e, pack)
    return B1, B2_hat, clamped


def cyclic_loss_exact(
    I_rate: float,
    n_cycle: float,
    T_b: float,
    params: CellDegradationParams = CellDegradationParams(),
    pack: BatteryPackSpec = BatteryPackSpec(),
) -> float:
    """Cyclic capacity loss in percent for ``n_cycle`` cycles at ``I_rate``."""
    if n_cycle < 0:
        raise ValueError(f"n_cycle must be >= 0, got {n_cycle!r}")
    coef = cyclic_coefficients(T_b, params, pack)
    return coef.B1 * math.exp(coef.B2 * abs(I_rate)) * pack.C_rated * n_cycle


def n_hat(n_max: float, delta_t: float, T_horizon: float) -> float:
    """Per-interval cycle share, including the percent-to-fraction divisor."""
    if not (n_max > 0 and delta_t > 0 and T_horizon > 0):
        raise ValueError("n_max, delta_t and T_horizon must all be > 0")
    return n_max * delta_t / (T_horizon * 100.0)


def smooth_loss_from_coefficients(P_bat, B1, B2_hat, nhat: float, params: CellDegradationParams,
                                  pack: BatteryPackSpec):
    """Smooth surrogate evaluated from precomputed (possibly perturbed) coefficients."""
    s = pack.scale_s
    P_bat = np.asarray(P_bat, dtype=float)
    return B1 * pack.C_rated ** 2 * nhat * (1.0 + B2_hat ** 2 * P_bat ** 2 / (params.h * s * s))


def cyclic_loss_smooth(
    P_bat,
    T_b,
    nhat: float,
    params: CellDegradationParams = CellDegradationParams(),
    pack: BatteryPackSpec = BatteryPackSpec(),
):
    """Smooth cyclic loss of one interval as a fraction of capacity.

    Accepts scalars or equally shaped arrays of pack power [kW] and battery
    temperature [K].
    """
    P = np.asarray(P_bat, dtype=float)
    if not np.all(np.isfinite(P)):
        raise ValueError("P_bat must be finite")
    B1, B2_hat, _ = coefficient_profile(T_b, params, pack)
    out = smooth_loss_from_coefficients(P, B1, B2_hat, nhat, params, pack)
    return float(out) if np.ndim(out) == 0 else out


def degradation_cost(loss_fraction, pack: BatteryPackSpec = BatteryPackSpec()):
    """Monetary value [EUR] of a capacity-fraction loss."""
    if np.any(np.asarray(loss_fraction) < 0):
        raise ValueError("loss fraction must be >= 0")
    return pack.gamma * pack.pack_capacity * loss_fraction


def effective_gamma(new_cost: float, resale_value: float, usable_fraction_lost: float) -> float:
    """Cost of one kWh of lost capacity given purchase price and second-life resale.

    The pack is retired after ``usable_fraction_lost`` of its capacity is gone
    and resold at ``resale_value``.
    """
    return (new_cost - (1.0 - usable_fraction_lost) * resale_value) / usable_fraction_lost


def smooth_to_exact_ratio(I_rate, B2, h: float):
    """Ratio of the smooth surrogate to the exact cyclic model at equal cycle count."""
    x = B2 * np.abs(I_rate)
    return (1.0 + x * x / h) / np.exp(x)


def approximation_envelope(params: CellDegradationParams = CellDegradationParams(),
                           i_max: float = 2.0, n_grid: int = 401) -> float:
    """Largest relative error of the surrogate over ``|I_rate| <= i_max`` and the
    unclamped parts of 283-313 K, by dense grid evaluation."""
    T = np.linspace(283.0, 313.0, n_grid)
    T = T[b1_raw(T, params) >= B1_FLOOR]
    I = np.linspace(0.0, i_max, n_grid)
    B2 = params.d * T[:, None] + params.e
    return float(np.max(np.abs(smooth_to_exact_ratio(I[None, :], B2, params.h) - 1.0)))
