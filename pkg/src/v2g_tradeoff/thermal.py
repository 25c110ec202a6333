"""Lumped cabin/battery thermal network and its RK4 integration.

The battery heat input is held constant over a session, computed from a
representative current rather than the optimised power.  The resulting
battery-temperature profile is an input to the degradation coefficients.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

KELVIN = 273.15


@dataclass(frozen=True)
class ThermalParams:
    """Thermal masses [J/K], conductances [W/K] and fixed heat inputs [W].

    Defaults are representative of a mid-size BEV; they are not taken from a
    published table.
    """

    M_c: float = 1.0e5
    M_b: float = 3.0e5
    K_ac: float = 22.7
    K_ab: float = 4.343
    K_bc: float = 3.24
    q_rad: float = 0.0
    q_hvac: float = 0.0
    btms_efficiency: float = 0.9

    def __post_init__(self):
        for name in ("M_c", "M_b", "K_ac", "K_ab", "K_bc"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not 0.0 <= self.btms_efficiency <= 1.0:
            raise ValueError("btms_efficiency must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "ThermalParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown thermal parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, path) -> "ThermalParams":
        with open(path) as fh:
            data = json.load(fh)
        data.pop("_comment", None)
        return cls.from_dict(data)


@dataclass(frozen=True)
class AmbientProfile:
    """Ambient temperature samples [K], linearly interpolated in time [h]."""

    times: np.ndarray
    T_a: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        T = np.asarray(self.T_a, dtype=float)
        if t.ndim != 1 or t.shape != T.shape or t.size == 0:
            raise ValueError("times and T_a must be equal-length 1-D arrays")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("ambient sample times must be strictly increasing")
        if not np.all(np.isfinite(T)) or np.any(T <= 0):
            raise ValueError("ambient temperatures must be finite and > 0 K")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "T_a", T)

    @classmethod
    def constant(cls, T_a_kelvin: float) -> "AmbientProfile":
        return cls(np.array([-1e12, 1e12]), np.array([T_a_kelvin, T_a_kelvin]))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def __call__(self, t_h):
        return np.interp(t_h, self.times, self.T_a)


def load_ambient_csv(path) -> AmbientProfile:
    """Read a ``time_h,temp_C`` file and convert to kelvin."""
    times, temps = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames is None or {"time_h", "temp_C"} - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'time_h,temp_C'")
        for row in reader:
            times.append(float(row["time_h"]))
            temps.append(float(row["temp_C"]) + KELVIN)
    return AmbientProfile(np.array(times), np.array(temps))


@dataclass(frozen=True)
class TemperatureProfile:
    times: np.ndarray  # h, strictly increasing
    T_a: np.ndarray
    T_b: np.ndarray
    T_c: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.T_a) == len(self.T_b) == len(self.T_c) == n):
            raise ValueError("profile arrays must have equal lengths")
        for arr in (self.T_a, self.T_b, self.T_c):
            if not np.all(np.isfinite(arr)) or np.any(np.asarray(arr) <= 0):
                raise ValueError("temperatures must be finite and > 0 K")

    def interval_means(self) -> np.ndarray:
        """Battery temperature per interval as the mean of its endpoint samples."""
        return 0.5 * (self.T_b[:-1] + self.T_b[1:])


class IntegrationError(RuntimeError):
    pass


def representative_current(rho: float, P_max: float, V_pack: float) -> float:
    """Session-average current magnitude [A] for participation level ``rho``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho!r}")
    if P_max <= 0 or V_pack <= 0:
        raise ValueError("P_max and V_pack must be > 0")
    return rho * (P_max * 1000.0 / V_pack)


def heat_generation(I_hat: float, R_int: float) -> float:
    """Joule heat [W]."""
    if R_int < 0:
        raise ValueError("R_int must be >= 0")
    return I_hat * I_hat * R_int


def steady_state(T_a: float, params: ThermalParams, Q: float) -> tuple[float, float]:
    """Equilibrium ``(T_c, T_b)`` for constant ambient and heat input."""
    q_b = Q * (1.0 - params.btms_efficiency)
    q_c = params.q_rad + params.q_hvac
    M = np.array([
        [-(params.K_ac + params.K_bc), params.K_bc],
        [params.K_bc, -(params.K_ab + params.K_bc)],
    ])
    rhs = -np.array([params.K_ac * T_a + q_c, params.K_ab * T_a + q_b])
    T_c, T_b = np.linalg.solve(M, rhs)
    return float(T_c), float(T_b)


def simulate_temperatures(
    ambient: AmbientProfile,
    params: ThermalParams,
    Q: float,
    *,
    duration_h: float,
    output_dt_h: float,
    T_b0: float | None = None,
    T_c0: float | None = None,
    step_s: float = 1.0,
    start_h: float = 0.0,
) -> TemperatureProfile:
    """Integrate the cabin/battery network with classical RK4.

    The state is reported on the output grid ``start_h + k * output_dt_h``;
    each output interval is split into an integer number of equal substeps
    no longer than ``step_s``.  Initial temperatures default to the ambient
    value at ``start_h``.
    """
    if step_s <= 0 or output_dt_h <= 0 or duration_h <= 0:
        raise ValueError("step, output interval and duration must be > 0")
    n_out = int(round(duration_h / output_dt_h))
    if not math.isclose(n_out * output_dt_h, duration_h, rel_tol=1e-9):
        raise ValueError("duration must be a whole number of output intervals")
    t0, t1 = ambient.span
    if start_h < t0 - 1e-9 or start_h + duration_h > t1 + 1e-9:
        raise ValueError(
            f"ambient profile covers [{t0}, {t1}] h but [{start_h}, {start_h + duration_h}] h is needed"
        )

    n_sub = max(1, math.ceil(output_dt_h * 3600.0 / step_s - 1e-9))
    n_steps = n_out * n_sub
    h = output_dt_h * 3600.0 / n_sub
    # ambient at every half step
    t_half = start_h + np.arange(2 * n_steps + 1) * (h / 7200.0)
    Ta = ambient(t_half).tolist()

    Tc = float(ambient(start_h)) if T_c0 is None else float(T_c0)
    Tb = float(ambient(start_h)) if T_b0 is None else float(T_b0)
    inv_mc, inv_mb = 1.0 / params.M_c, 1.0 / params.M_b
    K_ac, K_ab, K_bc = params.K_ac, params.K_ab, params.K_bc
    q_c = params.q_rad + params.q_hvac
    q_b = Q - params.btms_efficiency * Q  # q_btms = -eta * Q

    out_c = [Tc]
    out_b = [Tb]
    half = 0.5 * h
    for k in range(n_steps):
        ta0, tam, ta1 = Ta[2 * k], Ta[2 * k + 1], Ta[2 * k + 2]
        c1 = (K_ac * (ta0 - Tc) + K_bc * (Tb - Tc) + q_c) * inv_mc
        b1 = (K_ab * (ta0 - Tb) + K_bc * (Tc - Tb) + q_b) * inv_mb
        c, b = Tc + half * c1, Tb + half * b1
        c2 = (K_ac * (tam - c) + K_bc * (b - c) + q_c) * inv_mc
        b2 = (K_ab * (tam - b) + K_bc * (c - b) + q_b) * inv_mb
        c, b = Tc + half * c2, Tb + half * b2
        c3 = (K_ac * (tam - c) + K_bc * (b - c) + q_c) * inv_mc
        b3 = (K_ab * (tam - b) + K_bc * (c - b) + q_b) * inv_mb
        c, b = Tc + h * c3, Tb + h * b3
        c4 = (K_ac * (ta1 - c) + K_bc * (b - c) + q_c) * inv_mc
        b4 = (K_ab * (ta1 - b) + K_bc * (c - b) + q_b) * inv_mb
        Tc += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        Tb += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if not (math.isfinite(Tc) and math.isfinite(Tb)) or Tc <= 0 or Tb <= 0:
            t_bad = start_h + (k + 1) * h / 3600.0
            raise IntegrationError(
                f"thermal state left the physical range at t = {t_bad:.6g} h; reduce step_s (now {step_s} s)"
            )
        if (k + 1) % n_sub == 0:
            out_c.append(Tc)
            out_b.append(Tb)

    times = start_h + np.arange(n_out + 1) * output_dt_h
    return TemperatureProfile(
        times=times,
        T_a=ambient(times),
        T_b=np.array(out_b),
        T_c=np.array(out_c),
    )


def session_battery_temperature(
    ambient: AmbientProfile,
    params: ThermalParams,
    *,
    rho: float,
    P_max: float,
    V_pack: float,
    R_int: float,
    T: int,
    delta_t: float,
    start_h: float = 0.0,
    step_s: float = 1.0,
) -> TemperatureProfile:
    """Precompute the battery temperature over a ``T``-interval session."""
    Q = heat_generation(representative_current(rho, P_max, V_pack), R_int)
    return simulate_temperatures(
        ambient, params, Q,
        duration_h=T * delta_t, output_dt_h=delta_t, step_s=step_s, start_h=start_h,
    )


def default_thermal_params() -> ThermalParams:
    return ThermalParams.from_json(Path(__file__).with_name("data") / "thermal_default.json")
