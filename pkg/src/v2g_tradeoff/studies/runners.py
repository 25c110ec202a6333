"""Scenario orchestration for the trade-off, robustness and projection studies.

Each runner takes a validated :class:`StudyConfig`, writes CSV/JSON files
under ``cfg.out`` and returns a :class:`StudyResult` holding the rows and
every schedule it produced.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import __version__
from ..degradation import BatteryPackSpec, coefficient_profile
from ..equilibrium import GameInstance, build_instance, solve_gne, tradeoff_point
from ..robustness import PerturbationSpec, run_comparison
from ..session import (
    ChargingSchedule,
    InfeasibleSessionError,
    SessionConfig,
    load_tariff_csv,
    minimum_power_rating,
    per_unit_to_kwh,
)
from ..thermal import KELVIN, AmbientProfile, load_ambient_csv, session_battery_temperature
from .config import StudyConfig
from .tariffs import TariffSynthesisSpec, amplify_variance, gaussian_profile


class StudyError(RuntimeError):
    """A scenario cell could not be completed."""


@dataclass
class StudyResult:
    kind: str
    rows: list[dict] = field(default_factory=list)
    schedules: list[tuple[SessionConfig, ChargingSchedule]] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# shared pieces


def metadata_lines(cfg: StudyConfig, kind: str) -> list[str]:
    return [f"v2g-tradeoff {__version__}", f"study {kind}", f"config_sha256 {cfg.digest}", f"seed {cfg.seed}"]


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_rows(path: Path, rows: list[dict], header_lines=(), columns=None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    return path


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def session_window(cfg: StudyConfig) -> np.ndarray:
    alpha = load_tariff_csv(cfg.tariff_path)
    start = cfg.session.tariff_start_interval - 1
    return alpha[start:start + cfg.session.T]


def make_session(cfg: StudyConfig, *, alpha=None, P_max=None, pack: BatteryPackSpec | None = None,
                 E_0_pu=None) -> SessionConfig:
    s = cfg.session
    P_max = s.P_max if P_max is None else P_max
    P_min = s.P_min if P_max == s.P_max else -P_max
    return per_unit_to_kwh(
        pack=pack or cfg.pack,
        alpha=session_window(cfg) if alpha is None else alpha,
        delta_t=s.delta_t, P_min=P_min, P_max=P_max,
        E_min_pu=s.E_min_pu, E_max_pu=s.E_max_pu,
        E_0_pu=s.E_0_pu if E_0_pu is None else E_0_pu,
        E_des_pu=s.E_des_pu, epsilon_pu=s.epsilon_pu, eta_avg=s.eta_avg,
    )


def _ambient(cfg: StudyConfig, T_a_C=None) -> AmbientProfile:
    if T_a_C is not None:
        return AmbientProfile.constant(T_a_C + KELVIN)
    if cfg.ambient_constant_C is not None:
        return AmbientProfile.constant(cfg.ambient_constant_C + KELVIN)
    return load_ambient_csv(cfg.ambient_path)


def game_rho(cfg: StudyConfig, w: int, T: int) -> float:
    return w / T if cfg.thermal_rho is None else cfg.thermal_rho


def game_instance(cfg: StudyConfig, session: SessionConfig, w: int, ambient: AmbientProfile,
                  start_h: float = 0.0) -> GameInstance:
    profile = session_battery_temperature(
        ambient, cfg.thermal, rho=game_rho(cfg, w, session.T), P_max=session.P_max,
        V_pack=session.pack.V_bat, R_int=session.pack.R_int, T=session.T,
        delta_t=session.delta_t, start_h=start_h, step_s=cfg.integration_step_s,
    )
    return build_instance(session, w, profile, cfg.degradation)


def reference_instance(cfg: StudyConfig, rho: float | None = None) -> GameInstance:
    """The reference session on one fixed temperature profile (``w = 0``).

    Cross-``w`` comparisons on this instance change only the split.
    """
    session = make_session(cfg)
    rho = cfg.robustness.thermal_rho if rho is None else rho
    profile = session_battery_temperature(
        _ambient(cfg), cfg.thermal, rho=rho, P_max=session.P_max, V_pack=session.pack.V_bat,
        R_int=session.pack.R_int, T=session.T, delta_t=session.delta_t, step_s=cfg.integration_step_s,
    )
    return build_instance(session, 0, profile, cfg.degradation)


def _precheck(session: SessionConfig, label: str) -> None:
    try:
        session.precheck()
    except InfeasibleSessionError as exc:
        need = minimum_power_rating(session)
        raise StudyError(f"{label}: {exc} (needs at least {need:.4g} kW)") from exc


def _pmap(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _tradeoff_row(inst: GameInstance, schedule: ChargingSchedule, w: int) -> dict:
    point = tradeoff_point(inst, schedule, w)
    return {
        "w": w,
        "w_over_T": w / inst.T,
        "charging_cost_eur": point.charging_cost,
        "degradation_cost_eur": point.degradation_cost,
        "capacity_loss_pct": 100.0 * point.degradation_loss,
        "max_violation": schedule.feasibility.max_violation,
    }


def _sweep_cell(args):
    cfg, session, w, T_a_C = args
    inst = game_instance(cfg, session, w, _ambient(cfg, T_a_C))
    schedule = solve_gne(inst)
    _, _, clamped = coefficient_profile(
        inst.temperatures.interval_means(), cfg.degradation, session.pack)
    return _tradeoff_row(inst, schedule, w), schedule, bool(np.any(clamped))


def _sweep(cfg: StudyConfig, session: SessionConfig, T_a_C=None):
    jobs = [(cfg, session, w, T_a_C) for w in cfg.ws()]
    return _pmap(_sweep_cell, jobs, cfg.threads)


def fitted_slope(x, y) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


# --------------------------------------------------------------------------
# studies


def run_temperature_study(cfg: StudyConfig) -> StudyResult:
    result = StudyResult("temperature")
    session = make_session(cfg)
    _precheck(session, "temperature study")
    slopes = []
    for T_a in cfg.T_a_C:
        cells = _sweep(cfg, session, T_a)
        rows = [dict(T_a_C=T_a, **row) for row, _, _ in cells]
        result.rows.extend(rows)
        result.schedules.extend((session, s) for _, s, _ in cells)
        clamped = any(c for _, _, c in cells)
        slopes.append({
            "T_a_C": T_a,
            "loss_slope_pct": fitted_slope([r["w_over_T"] for r in rows], [r["capacity_loss_pct"] for r in rows]),
            "b1_clamped": int(clamped),
        })
    meta = metadata_lines(cfg, "temperature")
    result.files.append(write_rows(cfg.out / "temperature_tradeoff.csv", result.rows, meta))
    result.files.append(write_rows(cfg.out / "temperature_slopes.csv", slopes, meta))
    result.extra["slopes"] = slopes
    return result


def run_tariff_variance_study(cfg: StudyConfig) -> StudyResult:
    result = StudyResult("tariff-variance")
    mean = session_window(cfg)
    profiles = {}
    for k in cfg.variance_scales:
        alpha = amplify_variance(mean, k)
        profiles[k] = alpha
        session = make_session(cfg, alpha=alpha)
        _precheck(session, f"tariff variance scale {k:g}")
        for row, schedule, _ in _sweep(cfg, session):
            result.rows.append(dict(variance_scale=k, tariff_std=float(np.std(alpha)), **row))
            result.schedules.append((session, schedule))
    meta = metadata_lines(cfg, "tariff-variance")
    result.files.append(write_rows(cfg.out / "tariff_variance_tradeoff.csv", result.rows, meta))
    prof_rows = [
        {"interval": t + 1, **{f"alpha_scale_{k:g}": float(a[t]) for k, a in profiles.items()}}
        for t in range(mean.size)
    ]
    result.files.append(write_rows(cfg.out / "tariff_variance_profiles.csv", prof_rows, meta))
    result.extra["profiles"] = profiles
    return result


def run_charger_study(cfg: StudyConfig) -> StudyResult:
    result = StudyResult("charger")
    spans = []
    for rating in cfg.charger_kw:
        session = make_session(cfg, P_max=rating)
        _precheck(session, f"charger {rating:g} kW")
        rows = []
        for row, schedule, _ in _sweep(cfg, session):
            rows.append(dict(charger_kw=rating, **row))
            result.schedules.append((session, schedule))
        result.rows.extend(rows)
        c = [r["charging_cost_eur"] for r in rows]
        d = [r["degradation_cost_eur"] for r in rows]
        spans.append({"charger_kw": rating, "charging_cost_span_eur": max(c) - min(c),
                      "degradation_cost_span_eur": max(d) - min(d)})
    meta = metadata_lines(cfg, "charger")
    result.files.append(write_rows(cfg.out / "charger_tradeoff.csv", result.rows, meta))
    result.files.append(write_rows(cfg.out / "charger_span.csv", spans, meta))
    result.extra["spans"] = spans
    return result


SCHEDULE_COLUMNS = ("interval", "p_kw", "energy_kwh", "alpha_eur_per_kwh")


def write_schedule_csv(path: Path, session: SessionConfig, schedule: ChargingSchedule, header_lines=()) -> Path:
    rows = [
        {"interval": t + 1, "p_kw": float(schedule.P_bat[t]), "energy_kwh": float(schedule.energy_trace[t]),
         "alpha_eur_per_kwh": float(session.alpha[t])}
        for t in range(session.T)
    ]
    return write_rows(path, rows, header_lines, list(SCHEDULE_COLUMNS))


def load_schedule_csv(path) -> np.ndarray:
    rows = read_rows(path)
    if [int(r["interval"]) for r in rows] != list(range(1, len(rows) + 1)):
        raise ValueError(f"{path}: intervals must be numbered 1..N")
    return np.array([float(r["p_kw"]) for r in rows])


def run_profile_export(cfg: StudyConfig) -> StudyResult:
    result = StudyResult("profiles")
    session = make_session(cfg)
    _precheck(session, "profile export")
    ambient = _ambient(cfg)
    meta = metadata_lines(cfg, "profiles")
    for w in cfg.profile_w:
        inst = game_instance(cfg, session, w, ambient)
        schedule = solve_gne(inst)
        point = tradeoff_point(inst, schedule, w)
        result.schedules.append((session, schedule))
        result.files.append(write_schedule_csv(cfg.out / f"profile_w{w}.csv", session, schedule, meta))
        summary = {
            "w": w,
            "charging_cost_eur": point.charging_cost,
            "degradation_cost_eur": point.degradation_cost,
            "capacity_loss_fraction": point.degradation_loss,
            "terminal_energy_kwh": float(schedule.energy_trace[-1]),
            "feasibility": schedule.feasibility.as_dict(),
            "schedule": schedule.as_dict(),
            "metadata": meta,
        }
        path = cfg.out / f"profile_w{w}.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        result.files.append(path)
        result.rows.append({k: summary[k] for k in ("w", "charging_cost_eur", "degradation_cost_eur",
                                                     "capacity_loss_fraction", "terminal_energy_kwh")})
    return result


def run_robustness(cfg: StudyConfig) -> StudyResult:
    result = StudyResult("robustness")
    inst = reference_instance(cfg)
    _precheck(inst.session, "robustness study")
    spec = PerturbationSpec(inst.coefficients, cfg.robustness.low_factor, cfg.robustness.high_factor,
                            cfg.robustness.draws, cfg.seed)
    ws = cfg.ws()
    rhos = [float(r) for r in np.linspace(0.0, 1.0, inst.T + 1)]
    summary = run_comparison(inst, spec, ws, rhos, workers=cfg.threads)
    meta = metadata_lines(cfg, "robustness") + [
        f"draws {spec.sample_count}", f"support [{spec.low_factor}, {spec.high_factor}] x nominal",
    ]
    cfg.out.mkdir(parents=True, exist_ok=True)
    summary.write_csv(cfg.out / "robustness_summary.csv", meta)
    summary.write_samples_csv(cfg.out / "robustness_samples.csv", meta)
    result.files += [cfg.out / "robustness_summary.csv", cfg.out / "robustness_samples.csv"]
    result.rows = [dict(zip(("approach", "hyper", "stat", "value"), r)) for r in summary.rows()]
    result.extra["summary"] = summary
    return result


# --------------------------------------------------------------------------
# annual projection


def scaled_pack(base: BatteryPackSpec, capacity_kwh: float) -> BatteryPackSpec:
    """Same cell and voltage, parallel strings scaled with capacity."""
    n_parallel = max(1, round(base.n_parallel * capacity_kwh / base.pack_capacity))
    return replace(base, pack_capacity=capacity_kwh, n_parallel=n_parallel)


@lru_cache(maxsize=4)
def _year_ambient(path: str) -> AmbientProfile:
    return load_ambient_csv(path)


def _projection_cell(args):
    cfg, capacity, w, ambient_path = args
    p = cfg.projection
    ambient = _year_ambient(str(ambient_path))
    pack = scaled_pack(cfg.pack, capacity)
    mean = load_tariff_csv(cfg.tariff_path)[p.tariff_start_interval - 1:p.tariff_start_interval - 1 + p.T]
    tariff = TariffSynthesisSpec(mean, cfg.tariff_relative_std, 0.0, cfg.seed)
    s = cfg.session
    E_min, E_max, E_des = s.E_min_pu * capacity, s.E_max_pu * capacity, s.E_des_pu * capacity
    energy = E_des
    charging = degradation = loss = 0.0
    sessions = []
    for day in range(p.days):
        energy = max(E_min, energy - p.daily_drive_kwh)
        if day % 7 not in p.v2g_weekdays:
            continue
        session = SessionConfig(
            T=p.T, delta_t=s.delta_t, P_min=s.P_min, P_max=s.P_max, E_min=E_min, E_max=E_max,
            E_0=min(energy, E_max), E_des=E_des, epsilon=s.epsilon_pu * capacity, eta_avg=s.eta_avg,
            alpha=gaussian_profile(tariff, day), pack=pack,
        )
        _precheck(session, f"projection day {day} ({capacity:g} kWh)")
        inst = game_instance(cfg, session, w, ambient, start_h=24.0 * day + p.start_hour)
        schedule = solve_gne(inst)
        point = tradeoff_point(inst, schedule, w)
        charging += point.charging_cost
        degradation += point.degradation_cost
        loss += point.degradation_loss
        energy = float(schedule.energy_trace[-1])
        sessions.append((session, schedule))
    row = {
        "capacity_kwh": capacity, "w": w, "w_over_T": w / p.T, "sessions": len(sessions),
        "annual_charging_cost_eur": charging, "annual_degradation_cost_eur": degradation,
        "annual_cyclic_loss_pct": 100.0 * loss,
        "max_violation": float(max((sch.feasibility.max_violation for _, sch in sessions), default=0.0)),
    }
    return row, sessions


def run_projection_year(cfg: StudyConfig) -> StudyResult:
    p = cfg.projection
    ambient = _year_ambient(str(p.ambient_path))
    t0, t1 = ambient.span
    last_needed = 24.0 * (p.days - 1) + p.start_hour + p.T * cfg.session.delta_t
    if t0 > p.start_hour or t1 < last_needed:
        raise StudyError(
            f"ambient file {p.ambient_path} covers [{t0:g}, {t1:g}] h; a {p.days}-day projection needs "
            f"[{p.start_hour:g}, {last_needed:g}] h"
        )
    result = StudyResult("projection")
    jobs = [(cfg, cap, w, p.ambient_path) for cap in p.capacities_kwh for w in p.w]
    for row, sessions in _pmap(_projection_cell, jobs, cfg.threads):
        result.rows.append(row)
        result.schedules.extend(sessions)
    result.files.append(write_rows(cfg.out / "projection_year.csv", result.rows, metadata_lines(cfg, "projection")))
    return result


RUNNERS = {
    "temperature": run_temperature_study,
    "tariff-variance": run_tariff_variance_study,
    "charger": run_charger_study,
    "profiles": run_profile_export,
    "robustness": run_robustness,
    "projection": run_projection_year,
}


def run_study(cfg: StudyConfig, kind: str | None = None) -> StudyResult:
    kind = kind or cfg.study
    if kind not in RUNNERS:
        raise StudyError(f"unknown study {kind!r}")
    return RUNNERS[kind](cfg)


def max_violation(result: StudyResult) -> float:
    return max((s.feasibility.max_violation for _, s in result.schedules), default=0.0)

