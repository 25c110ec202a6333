import math

import numpy as np
import pytest

from conftest import toy_instance
from v2g_tradeoff.robustness import (
    GT,
    MO,
    PerturbationSpec,
    draw_zeta,
    quantiles,
    regret_gt,
    regret_guard,
    regret_mo,
    run_comparison,
    sensitivity_gt,
    sensitivity_mo,
)


def spec_for(inst, **kw):
    return PerturbationSpec(inst.coefficients, **kw)


def test_draw_degenerate_interval_returns_nominal(toy):
    spec = spec_for(toy, low_factor=1.0, high_factor=1.0)
    assert np.array_equal(draw_zeta(spec, 0), toy.coefficients)


def test_draw_law_of_large_numbers():
    spec = PerturbationSpec(np.array([2.0]), sample_count=100_000)
    mean = np.mean([draw_zeta(spec, i)[0] for i in range(spec.sample_count)])
    assert abs(mean / 2.0 - 1.0) <= 0.005


def test_draws_within_box_and_distinct(toy):
    spec = spec_for(toy, sample_count=20)
    draws = np.array([draw_zeta(spec, i) for i in range(20)])
    ratio = draws / toy.coefficients
    assert np.all((ratio >= 0.9) & (ratio <= 1.1))
    assert len({d.tobytes() for d in draws}) == 20
    assert np.array_equal(draw_zeta(spec, 3), draw_zeta(spec_for(toy, sample_count=50), 3))


def test_draw_index_checked(toy):
    with pytest.raises(IndexError):
        draw_zeta(spec_for(toy, sample_count=2), 2)


def test_spec_validation(toy):
    with pytest.raises(ValueError):
        spec_for(toy, low_factor=1.2)
    with pytest.raises(ValueError):
        spec_for(toy, sample_count=0)


def test_sensitivity_zero_when_objective_ignores_zeta(toy):
    zeta = draw_zeta(spec_for(toy), 0)
    assert sensitivity_gt(toy, 4, zeta) == 0.0
    assert sensitivity_mo(toy, 1.0, zeta) == 0.0


def test_sensitivity_undefined_at_nominal(toy):
    with pytest.raises(ValueError):
        sensitivity_gt(toy, 2, toy.coefficients)


def _closed_form(B1, B2_hat):
    # w = 0: minimise sum q_j P_j^2 with sum P = 9; P_j proportional to 1/q_j
    inv = 1.0 / (B1 * B2_hat ** 2)
    return 9.0 * inv / inv.sum()


def test_sensitivity_against_closed_form(toy):
    zeta = draw_zeta(spec_for(toy), 4)
    u0 = _closed_form(toy.B1, toy.B2_hat)
    u1 = _closed_form(zeta[:4], zeta[4:])
    expected = np.linalg.norm(u1 - u0) / np.linalg.norm(zeta - toy.coefficients)
    assert sensitivity_gt(toy, 0, zeta) == pytest.approx(expected, rel=1e-6)
    # rho = 0 is the same problem
    assert sensitivity_mo(toy, 0.0, zeta) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("w", range(5))
def test_regret_zero_at_nominal(toy, w):
    sample = regret_gt(toy, w, toy.coefficients)
    assert sample.numerator == 0.0
    assert sample.value == 0.0 or sample.excluded


def test_regret_numerators_nonnegative(toy):
    spec = spec_for(toy, sample_count=10)
    for i in range(10):
        zeta = draw_zeta(spec, i)
        for w in range(5):
            assert regret_gt(toy, w, zeta).numerator >= 0.0
        for rho in (0.0, 0.3, 1.0):
            assert regret_mo(toy, rho, zeta).numerator >= 0.0


def test_regret_guard():
    assert regret_guard(0.0, 1.0)
    assert not regret_guard(1.0, 1e-9)
    assert not regret_guard(0.0, 0.0)


def test_quantiles_match_reference():
    x = np.array([5.0, 1.0, 3.0, math.nan, 2.0, 4.0])
    q = quantiles(x)
    assert q == {"min": 1.0, "q25": 2.0, "median": 3.0, "q75": 4.0, "max": 5.0}
    assert math.isnan(quantiles([math.nan])["median"])


def test_quantiles_order_invariant():
    rng = np.random.default_rng(0)
    x = rng.normal(size=101)
    assert quantiles(x) == quantiles(rng.permutation(x))


def test_trivial_comparison_all_regrets_zero(toy):
    spec = spec_for(toy, low_factor=1.0, high_factor=1.0, sample_count=1)
    summary = run_comparison(toy, spec)
    for key, values in summary.regret.items():
        assert np.all(summary.numerator[key] == 0.0)
        assert np.all((values == 0.0) | np.isnan(values))
        assert np.all(np.isnan(summary.sensitivity[key]))


def test_comparison_reproducible_and_worker_independent(toy):
    spec = spec_for(toy, sample_count=4, rng_seed=11)
    a = run_comparison(toy, spec)
    b = run_comparison(toy, spec, workers=2)
    for key in a.sensitivity:
        assert np.array_equal(a.sensitivity[key], b.sensitivity[key], equal_nan=True)
        assert np.array_equal(a.regret[key], b.regret[key], equal_nan=True)
    assert sorted(k[1] for k in a.keys(GT)) == [0, 1, 2, 3, 4]
    assert len(a.keys(MO)) == 5
    assert np.all(a.pooled(GT, "numerator") >= 0) and np.all(a.pooled(MO, "numerator") >= 0)


def test_comparison_rejects_foreign_zeta(toy):
    with pytest.raises(ValueError):
        run_comparison(toy, PerturbationSpec(toy.coefficients * 2))


def test_summary_csv(toy, tmp_path):
    summary = run_comparison(toy, spec_for(toy, sample_count=3), ws=[1], rhos=[0.5])
    summary.write_csv(tmp_path / "s.csv", ["seed 0"])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "# seed 0" and lines[1] == "approach,hyper,stat,value"
    stats = {tuple(l.split(",")[:3]) for l in lines[2:]}
    assert ("gt", "all", "sensitivity.median") in stats and ("mo", "0.5", "regret.max") in stats
    summary.write_samples_csv(tmp_path / "d.csv")
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 1 + 2 * 3

