"""Monte Carlo robustness of the game and weighted-sum schedules.

The uncertain parameter ``zeta`` stacks the per-interval degradation
coefficients ``[B1_1..B1_T, B2_hat_1..B2_hat_T]``.  For each hyperparameter
value (``w`` for the game, ``rho`` for the weighted sum) both the nominal
and the perturbed problems are solved and compared through

* sensitivity ``||u(zeta_0) - u(zeta)|| / ||zeta - zeta_0||`` and
* regret ``(F(u(zeta_0), zeta) - F(u(zeta), zeta)) / |F(u(zeta), zeta)|``

where ``F`` is the potential or the weighted-sum objective.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    GameInstance,
    SolveError,
    build_multiobjective,
    build_potential,
    multiobjective_value,
    potential_value,
)
from .qp import SolverSettings, solve
from .session import assign_intervals

GT = "gt"
MO = "mo"
QUANTILE_NAMES = ("min", "q25", "median", "q75", "max")


@dataclass(frozen=True)
class PerturbationSpec:
    zeta_0: np.ndarray
    low_factor: float = 0.9
    high_factor: float = 1.1
    sample_count: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        z = np.array(self.zeta_0, dtype=float)
        if z.ndim != 1 or z.size == 0 or not np.all(np.isfinite(z)):
            raise ValueError("zeta_0 must be a non-empty finite vector")
        if not 0.0 < self.low_factor <= 1.0 <= self.high_factor:
            raise ValueError("factors must satisfy 0 < low_factor <= 1 <= high_factor")
        if int(self.sample_count) != self.sample_count or self.sample_count < 1:
            raise ValueError("sample_count must be a positive integer")
        z.setflags(write=False)
        object.__setattr__(self, "zeta_0", z)


def draw_zeta(spec: PerturbationSpec, index: int) -> np.ndarray:
    """Draw ``index`` of the sample; depends only on ``(rng_seed, index)``."""
    if not 0 <= index < spec.sample_count:
        raise IndexError(f"draw index {index} outside [0, {spec.sample_count})")
    rng = np.random.default_rng([int(spec.rng_seed), int(index)])
    return spec.zeta_0 * rng.uniform(spec.low_factor, spec.high_factor, size=spec.zeta_0.size)


def _split_zeta(instance: GameInstance, zeta):
    zeta = np.asarray(zeta, dtype=float)
    T = instance.T
    if zeta.shape != (2 * T,):
        raise ValueError(f"zeta must have length 2T={2 * T}")
    return zeta[:T], zeta[T:]


def _game(instance: GameInstance, w: int) -> GameInstance:
    return instance.with_split(assign_intervals(instance.session.alpha, int(w)))


def _argmin(instance: GameInstance, approach: str, hyper, zeta, settings):
    B1, B2_hat = _split_zeta(instance, zeta)
    if approach == GT:
        qp = build_potential(_game(instance, hyper), B1, B2_hat)
    elif approach == MO:
        qp = build_multiobjective(instance, float(hyper), B1, B2_hat)
    else:
        raise ValueError(f"unknown approach {approach!r}")
    report = solve(qp, settings)
    if not report.optimal:
        raise SolveError(f"{approach} problem at hyper={hyper}", report)
    return report.x


def _objective(instance: GameInstance, approach: str, hyper, P, zeta) -> float:
    B1, B2_hat = _split_zeta(instance, zeta)
    if approach == GT:
        return potential_value(_game(instance, hyper), P, B1, B2_hat)
    return multiobjective_value(instance, P, float(hyper), B1, B2_hat)


def _sensitivity(instance, approach, hyper, zeta, settings, u_nominal=None) -> float:
    zeta_0 = instance.coefficients
    dz = float(np.linalg.norm(np.asarray(zeta) - zeta_0))
    if dz == 0.0:
        raise ValueError("sensitivity is undefined at zeta == zeta_0")
    if u_nominal is None:
        u_nominal = _argmin(instance, approach, hyper, zeta_0, settings)
    u = _argmin(instance, approach, hyper, zeta, settings)
    return float(np.linalg.norm(u_nominal - u)) / dz


def sensitivity_gt(instance: GameInstance, w: int, zeta, settings: SolverSettings | None = None) -> float:
    return _sensitivity(instance, GT, w, zeta, settings)


def sensitivity_mo(instance: GameInstance, rho: float, zeta, settings: SolverSettings | None = None) -> float:
    return _sensitivity(instance, MO, rho, zeta, settings)


@dataclass(frozen=True)
class RegretSample:
    numerator: float  # EUR, >= 0
    denominator: float  # EUR, objective of the zeta-aware solution
    value: float  # nan when the denominator guard excludes the draw

    @property
    def excluded(self) -> bool:
        return math.isnan(self.value)


def regret_guard(numerator: float, denominator: float) -> bool:
    """True when the ratio is meaningful."""
    return abs(denominator) >= 1e-6 * (1.0 + abs(numerator))


def _regret(instance, approach, hyper, zeta, settings, u_nominal=None) -> RegretSample:
    zeta_0 = instance.coefficients
    if u_nominal is None:
        u_nominal = _argmin(instance, approach, hyper, zeta_0, settings)
    if np.array_equal(np.asarray(zeta, dtype=float), zeta_0):
        u = u_nominal
    else:
        u = _argmin(instance, approach, hyper, zeta, settings)
    f_nominal = _objective(instance, approach, hyper, u_nominal, zeta)
    f_aware = _objective(instance, approach, hyper, u, zeta)
    # Both points are feasible, so the better one is the best known
    # zeta-optimum; this only matters at round-off level.
    f_aware = min(f_aware, f_nominal)
    num = f_nominal - f_aware
    value = num / abs(f_aware) if regret_guard(num, f_aware) else math.nan
    return RegretSample(num, f_aware, value)


def regret_gt(instance: GameInstance, w: int, zeta, settings: SolverSettings | None = None) -> RegretSample:
    return _regret(instance, GT, w, zeta, settings)


def regret_mo(instance: GameInstance, rho: float, zeta, settings: SolverSettings | None = None) -> RegretSample:
    return _regret(instance, MO, rho, zeta, settings)


def quantiles(samples) -> dict[str, float]:
    """Box-plot statistics of the finite entries (linear interpolation)."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return {name: math.nan for name in QUANTILE_NAMES}
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(QUANTILE_NAMES, map(float, q)))


@dataclass(frozen=True)
class RobustnessSummary:
    """Per-(approach, hyper) samples indexed by draw.

    ``nan`` marks a draw excluded from a metric (zero perturbation for
    sensitivity, the denominator guard for regret).
    """

    sensitivity: dict = field(default_factory=dict)  # (approach, hyper) -> array
    regret: dict = field(default_factory=dict)
    numerator: dict = field(default_factory=dict)
    sample_count: int = 0
    rng_seed: int = 0

    def keys(self, approach: str) -> list:
        return [k for k in self.sensitivity if k[0] == approach]

    def pooled(self, approach: str, metric: str) -> np.ndarray:
        table = getattr(self, metric)
        return np.concatenate([table[k] for k in self.keys(approach)])

    def quantiles(self, approach: str, metric: str, hyper=None) -> dict[str, float]:
        if hyper is None:
            return quantiles(self.pooled(approach, metric))
        return quantiles(getattr(self, metric)[(approach, hyper)])

    def excluded(self, approach: str, metric: str) -> int:
        return int(np.sum(np.isnan(self.pooled(approach, metric))))

    def rows(self):
        """``(approach, hyper, stat, value)`` rows, per hyper and pooled."""
        for approach in (GT, MO):
            hypers = [k[1] for k in self.keys(approach)]
            for hyper in hypers + [None]:
                label = "all" if hyper is None else repr(hyper)
                for metric in ("sensitivity", "regret"):
                    for name, value in self.quantiles(approach, metric, hyper).items():
                        yield approach, label, f"{metric}.{name}", value
                    excluded = (self.excluded(approach, metric) if hyper is None
                                else int(np.sum(np.isnan(getattr(self, metric)[(approach, hyper)]))))
                    yield approach, label, f"{metric}.excluded", excluded

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["approach", "hyper", "stat", "value"])
            for approach, hyper, stat, value in self.rows():
                writer.writerow([approach, hyper, stat, repr(value)])

    def write_samples_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["approach", "hyper", "draw", "sensitivity", "regret", "regret_numerator"])
            for key in self.sensitivity:
                approach, hyper = key
                for i, (s, r, n) in enumerate(zip(self.sensitivity[key], self.regret[key], self.numerator[key])):
                    writer.writerow([approach, repr(hyper), i, repr(float(s)), repr(float(r)), repr(float(n))])


def default_grids(T: int) -> tuple[list[int], list[float]]:
    """``w`` in ``0..T`` and ``T + 1`` evenly spaced weights in ``[0, 1]``."""
    return list(range(T + 1)), [float(r) for r in np.linspace(0.0, 1.0, T + 1)]


def _cell(args):
    instance, approach, hyper, spec, settings = args
    zeta_0 = instance.coefficients
    u_nominal = _argmin(instance, approach, hyper, zeta_0, settings)
    n = spec.sample_count
    sens, reg, num = np.full(n, math.nan), np.full(n, math.nan), np.full(n, math.nan)
    for i in range(n):
        zeta = draw_zeta(spec, i)
        sample = _regret(instance, approach, hyper, zeta, settings, u_nominal)
        reg[i], num[i] = sample.value, sample.numerator
        if not np.array_equal(zeta, zeta_0):
            sens[i] = _sensitivity(instance, approach, hyper, zeta, settings, u_nominal)
    return sens, reg, num


def run_comparison(
    instance: GameInstance,
    spec: PerturbationSpec,
    ws=None,
    rhos=None,
    settings: SolverSettings | None = None,
    workers: int = 1,
) -> RobustnessSummary:
    """Sensitivity and regret for every hyperparameter value and every draw.

    All cells share the same draws.  ``workers > 1`` spreads cells over
    processes; results do not depend on the worker count.
    """
    if spec.zeta_0.shape != (2 * instance.T,):
        raise ValueError("perturbation vector does not match the instance")
    if not np.array_equal(spec.zeta_0, instance.coefficients):
        raise ValueError("zeta_0 must equal the instance's nominal coefficients")
    d_ws, d_rhos = default_grids(instance.T)
    ws = d_ws if ws is None else [int(w) for w in ws]
    rhos = d_rhos if rhos is None else [float(r) for r in rhos]
    cells = [(GT, w) for w in ws] + [(MO, r) for r in rhos]
    jobs = [(instance, a, h, spec, settings) for a, h in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(job) for job in jobs]
    summary = RobustnessSummary(sample_count=spec.sample_count, rng_seed=spec.rng_seed)
    for key, (s, r, n) in zip(cells, results):
        summary.sensitivity[key] = s
        summary.regret[key] = r
        summary.numerator[key] = n
    return summary
