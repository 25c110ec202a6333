"""Study configuration: JSON file + ``V2GT_`` environment overrides + defaults.

Validation collects every problem before failing.  Environment variables
name nested keys with ``__`` (``V2GT_SESSION__EPSILON_PU=0.05``); values are
parsed as JSON and fall back to plain strings.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..degradation import BatteryPackSpec, CellDegradationParams
from ..thermal import ThermalParams

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
ENV_PREFIX = "V2GT_"
STUDIES = ("temperature", "tariff-variance", "charger", "profiles", "robustness", "projection")


@dataclass(frozen=True)
class ConfigProblem:
    key: str
    kind: str  # "value" or "io"
    message: str

    def __str__(self):
        label = "I/O error" if self.kind == "io" else "invalid value"
        return f"{self.key}: {label}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(str(p) for p in self.problems))


def _load_json(path: Path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("top level must be a JSON object")
    return data


def _defaults() -> dict:
    session = _load_json(DATA_DIR / "session_default.json")
    session.pop("_comment", None)
    return {
        "study": None,
        "session": session,
        "pack": {},
        "degradation": {},
        "thermal": {},
        "tariff": {
            "path": str(DATA_DIR / "tariff_mean_12h.csv"),
            "relative_std": 0.10,
            "variance_scales": [0.0, 0.5, 1.0],
        },
        "ambient": {"constant_C": 10.0, "path": None},
        "thermal_rho": "auto",
        "integration_step_s": 1.0,
        "sweeps": {
            "w": None,
            "T_a_C": [10.0, 20.0, 40.0],
            "charger_kw": [6.6, 22.0, 50.0],
            "profile_w": [0, 8, 16],
        },
        "robustness": {"draws": 100, "low_factor": 0.9, "high_factor": 1.1, "thermal_rho": 0.5},
        "projection": {
            "ambient_path": str(DATA_DIR / "ambient_synthetic_year.csv"),
            "days": 365,
            "capacities_kwh": [50.0, 75.0, 100.0],
            "v2g_weekdays": [0, 2, 4],
            "daily_drive_kwh": 5.0,
            "T": 48,
            "tariff_start_interval": 1,
            "start_hour": 8.0,
            "w": [0, 12, 24, 36, 48],
        },
        "seed": 0,
        "out": "results",
        "threads": 1,
    }


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    tree: dict = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or len(name) == len(ENV_PREFIX):
            continue
        path = [part.lower() for part in name[len(ENV_PREFIX):].split("__")]
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
    return tree


# Session and pack keys are case-sensitive in the JSON (``P_max``); env
# overrides arrive lower-cased and are mapped back here.
def _restore_case(tree: dict, reference: dict) -> dict:
    lookup = {k.lower(): k for k in reference}
    out = {}
    for key, value in tree.items():
        real = lookup.get(key, key)
        if isinstance(value, dict) and isinstance(reference.get(real), dict):
            value = _restore_case(value, reference[real])
        out[real] = value
    return out


@dataclass(frozen=True)
class SessionSpec:
    T: int
    delta_t: float
    tariff_start_interval: int
    P_max: float
    P_min: float
    E_min_pu: float
    E_max_pu: float
    E_0_pu: float
    E_des_pu: float
    epsilon_pu: float
    eta_avg: float


@dataclass(frozen=True)
class RobustnessSpec:
    draws: int
    low_factor: float
    high_factor: float
    thermal_rho: float


@dataclass(frozen=True)
class ProjectionSpec:
    ambient_path: Path
    days: int
    capacities_kwh: tuple
    v2g_weekdays: tuple
    daily_drive_kwh: float
    T: int
    tariff_start_interval: int
    start_hour: float
    w: tuple


@dataclass(frozen=True)
class StudyConfig:
    study: str | None
    session: SessionSpec
    pack: BatteryPackSpec
    degradation: CellDegradationParams
    thermal: ThermalParams
    tariff_path: Path
    tariff_relative_std: float
    variance_scales: tuple
    ambient_constant_C: float | None
    ambient_path: Path | None
    thermal_rho: float | None  # None: w / T for the game, rho for the weighted sum
    integration_step_s: float
    w_grid: tuple | None
    T_a_C: tuple
    charger_kw: tuple
    profile_w: tuple
    robustness: RobustnessSpec
    projection: ProjectionSpec
    seed: int
    out: Path
    threads: int
    digest: str  # sha256 of the resolved, output-relevant settings

    def ws(self) -> list[int]:
        return list(self.w_grid) if self.w_grid is not None else list(range(self.session.T + 1))


class _Checker:
    def __init__(self, raw: dict):
        self.raw = raw
        self.problems: list[ConfigProblem] = []

    def get(self, dotted: str):
        node = self.raw
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                return None
            node = node[part]
        return node

    def fail(self, key, message, kind="value"):
        self.problems.append(ConfigProblem(key, kind, message))

    def number(self, key, *, minimum=None, strict_min=False, maximum=None, integer=False):
        value = self.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(key, f"expected a finite number, got {value!r}")
            return None
        if integer and int(value) != value:
            self.fail(key, f"expected an integer, got {value!r}")
            return None
        if minimum is not None and (value <= minimum if strict_min else value < minimum):
            self.fail(key, f"must be {'>' if strict_min else '>='} {minimum}, got {value!r}")
            return None
        if maximum is not None and value > maximum:
            self.fail(key, f"must be <= {maximum}, got {value!r}")
            return None
        return int(value) if integer else float(value)

    def number_list(self, key, *, minimum=None, strict_min=False, integer=False, allow_none=False,
                    allow_empty=False):
        value = self.get(key)
        if value is None and allow_none:
            return None
        if not isinstance(value, list) or not (value or allow_empty):
            self.fail(key, f"expected a non-empty list, got {value!r}")
            return None
        out = []
        for i, item in enumerate(value):
            ok = not isinstance(item, bool) and isinstance(item, (int, float)) and math.isfinite(item)
            if ok and integer and int(item) != item:
                ok = False
            if ok and minimum is not None and (item <= minimum if strict_min else item < minimum):
                ok = False
            if not ok:
                bound = "" if minimum is None else f" {'>' if strict_min else '>='} {minimum}"
                self.fail(f"{key}[{i}]", f"expected a{'n integer' if integer else ' number'}{bound}, got {item!r}")
                continue
            out.append(int(item) if integer else float(item))
        return tuple(out)

    def existing_file(self, key, allow_none=False):
        value = self.get(key)
        if value is None and allow_none:
            return None
        if not isinstance(value, str) or not value:
            self.fail(key, f"expected a file path, got {value!r}")
            return None
        path = Path(value)
        if not path.is_file():
            self.fail(key, f"file not found: {value}", kind="io")
            return None
        return path

    def params(self, key, cls):
        value = self.get(key)
        if not isinstance(value, dict):
            self.fail(key, "expected an object")
            return None
        known = {f.name for f in fields(cls)}
        for name in sorted(set(value) - known - {"_comment"}):
            self.fail(f"{key}.{name}", "unknown parameter")
        try:
            return cls(**{k: v for k, v in value.items() if k in known})
        except (TypeError, ValueError) as exc:
            self.fail(key, str(exc))
            return None


def _resolve_thermal(raw: dict, checker: _Checker) -> None:
    """Replace ``raw["thermal"]`` (a path or partial overrides) by full values."""
    thermal = raw.get("thermal")
    base = _load_json(DATA_DIR / "thermal_default.json")
    if isinstance(thermal, str):
        path = Path(thermal)
        try:
            base = _load_json(path)
        except FileNotFoundError:
            checker.fail("thermal", f"file not found: {thermal}", kind="io")
        except (OSError, ValueError) as exc:
            checker.fail("thermal", f"cannot parse {thermal}: {exc}", kind="io")
        thermal = {}
    elif thermal is None:
        thermal = {}
    base.pop("_comment", None)
    raw["thermal"] = _merge(base, thermal) if isinstance(thermal, dict) else thermal


def _validate(raw: dict) -> tuple[StudyConfig | None, list[ConfigProblem]]:
    c = _Checker(raw)
    _resolve_thermal(raw, c)

    study = raw.get("study")
    if study is not None and study not in STUDIES:
        c.fail("study", f"unknown study {study!r}; expected one of {', '.join(STUDIES)}")

    T = c.number("session.T", minimum=1, integer=True)
    delta_t = c.number("session.delta_t", minimum=0, strict_min=True)
    start = c.number("session.tariff_start_interval", minimum=1, integer=True)
    P_max = c.number("session.P_max", minimum=0)
    P_min = c.number("session.P_min", maximum=0)
    E_min = c.number("session.E_min_pu", minimum=0)
    E_max = c.number("session.E_max_pu", minimum=0)
    E_0 = c.number("session.E_0_pu", minimum=0)
    E_des = c.number("session.E_des_pu", minimum=0)
    eps = c.number("session.epsilon_pu", minimum=0)
    eta = c.number("session.eta_avg", minimum=0, strict_min=True, maximum=1)
    if None not in (E_min, E_max, E_0, E_des):
        if not E_min <= E_0 <= E_max:
            c.fail("session.E_0_pu", "must lie in [E_min_pu, E_max_pu]")
        if not E_min <= E_des <= E_max:
            c.fail("session.E_des_pu", "must lie in [E_min_pu, E_max_pu]")
    known_session = {f.name for f in fields(SessionSpec)}
    for name in sorted(set(raw.get("session", {})) - known_session):
        c.fail(f"session.{name}", "unknown parameter")

    pack = c.params("pack", BatteryPackSpec)
    degradation = c.params("degradation", CellDegradationParams)
    thermal = c.params("thermal", ThermalParams)

    tariff_path = c.existing_file("tariff.path")
    rel_std = c.number("tariff.relative_std", minimum=0)
    scales = c.number_list("tariff.variance_scales", minimum=0)
    if tariff_path is not None and T is not None and start is not None:
        from ..session import load_tariff_csv

        try:
            n = load_tariff_csv(tariff_path).size
        except (OSError, ValueError) as exc:
            c.fail("tariff.path", str(exc), kind="io")
        else:
            if start - 1 + T > n:
                c.fail("session.tariff_start_interval",
                       f"intervals {start}..{start + T - 1} exceed the {n} tariff entries")

    ambient_C = c.get("ambient.constant_C")
    ambient_path = c.existing_file("ambient.path", allow_none=True)
    if ambient_C is not None:
        ambient_C = c.number("ambient.constant_C", minimum=-273.15, strict_min=True)
    elif ambient_path is None and c.get("ambient.path") is None:
        c.fail("ambient", "give constant_C or path")

    rho = raw.get("thermal_rho")
    if rho == "auto":
        rho = None
    else:
        rho = c.number("thermal_rho", minimum=0, maximum=1)
    step = c.number("integration_step_s", minimum=0, strict_min=True)

    w_grid = c.number_list("sweeps.w", minimum=0, integer=True, allow_none=True)
    if w_grid and T is not None:
        for i, w in enumerate(w_grid):
            if w > T:
                c.fail(f"sweeps.w[{i}]", f"must be <= T={T}")
    T_a = c.number_list("sweeps.T_a_C")
    chargers = c.number_list("sweeps.charger_kw", minimum=0, strict_min=True)
    profile_w = c.number_list("sweeps.profile_w", minimum=0, integer=True)
    if profile_w and T is not None:
        for i, w in enumerate(profile_w):
            if w > T:
                c.fail(f"sweeps.profile_w[{i}]", f"must be <= T={T}")

    draws = c.number("robustness.draws", minimum=1, integer=True)
    low = c.number("robustness.low_factor", minimum=0, strict_min=True, maximum=1)
    high = c.number("robustness.high_factor", minimum=1)
    r_rho = c.number("robustness.thermal_rho", minimum=0, maximum=1)

    p_ambient = c.existing_file("projection.ambient_path")
    days = c.number("projection.days", minimum=1, integer=True)
    caps = c.number_list("projection.capacities_kwh", minimum=0, strict_min=True)
    weekdays = c.number_list("projection.v2g_weekdays", minimum=0, integer=True, allow_empty=True)
    if weekdays:
        for i, d in enumerate(weekdays):
            if d > 6:
                c.fail(f"projection.v2g_weekdays[{i}]", "weekday must lie in 0..6")
    drive = c.number("projection.daily_drive_kwh", minimum=0)
    p_T = c.number("projection.T", minimum=1, integer=True)
    p_start = c.number("projection.tariff_start_interval", minimum=1, integer=True)
    p_hour = c.number("projection.start_hour", minimum=0, maximum=24)
    p_w = c.number_list("projection.w", minimum=0, integer=True)
    if p_w and p_T is not None:
        for i, w in enumerate(p_w):
            if w > p_T:
                c.fail(f"projection.w[{i}]", f"must be <= projection.T={p_T}")

    seed = c.number("seed", minimum=0, integer=True)
    threads = c.number("threads", minimum=1, integer=True)
    out = raw.get("out")
    if not isinstance(out, str) or not out:
        c.fail("out", f"expected a directory path, got {out!r}")

    if c.problems:
        return None, c.problems

    relevant = {k: v for k, v in raw.items() if k not in ("out", "threads")}
    digest = hashlib.sha256(json.dumps(relevant, sort_keys=True, default=str).encode()).hexdigest()
    cfg = StudyConfig(
        study=study,
        session=SessionSpec(T, delta_t, start, P_max, P_min, E_min, E_max, E_0, E_des, eps, eta),
        pack=pack,
        degradation=degradation,
        thermal=thermal,
        tariff_path=tariff_path,
        tariff_relative_std=rel_std,
        variance_scales=scales,
        ambient_constant_C=ambient_C,
        ambient_path=ambient_path,
        thermal_rho=rho,
        integration_step_s=step,
        w_grid=w_grid,
        T_a_C=T_a,
        charger_kw=chargers,
        profile_w=profile_w,
        robustness=RobustnessSpec(draws, low, high, r_rho),
        projection=ProjectionSpec(p_ambient, days, caps, weekdays, drive, p_T, p_start, p_hour, p_w),
        seed=seed,
        out=Path(out),
        threads=threads,
        digest=digest,
    )
    return cfg, []


def resolve_raw(path=None, overrides: dict | None = None, environ=None) -> tuple[dict | None, list[ConfigProblem]]:
    """Defaults <- file <- environment <- explicit overrides."""
    raw = _defaults()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            return None, [ConfigProblem("config", "io", f"file not found: {path}")]
        try:
            data = _load_json(p)
        except (OSError, ValueError) as exc:
            return None, [ConfigProblem("config", "io", f"cannot parse {path}: {exc}")]
        data.pop("_comment", None)
        raw = _merge(raw, data)
    raw = _merge(raw, _restore_case(env_overrides(environ), raw))
    if overrides:
        raw = _merge(raw, overrides)
    return raw, []


def validate_config(path=None, overrides: dict | None = None, environ=None) -> list[ConfigProblem]:
    """Every problem with the configuration (empty when valid)."""
    raw, problems = resolve_raw(path, overrides, environ)
    if problems:
        return problems
    return _validate(raw)[1]


def load_config(path=None, overrides: dict | None = None, environ=None) -> StudyConfig:
    raw, problems = resolve_raw(path, overrides, environ)
    if problems:
        raise ConfigError(problems)
    cfg, problems = _validate(raw)
    if problems:
        raise ConfigError(problems)
    return cfg
