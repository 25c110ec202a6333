import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from v2g_tradeoff.degradation import (
    B1_FLOOR,
    BatteryPackSpec,
    CellDegradationParams,
    approximation_envelope,
    b1_raw,
    calendar_loss,
    cyclic_coefficients,
    cyclic_loss_exact,
    cyclic_loss_smooth,
    degradation_cost,
    effective_gamma,
    n_hat,
)


def test_default_constants():
    p = CellDegradationParams()
    assert (p.a, p.b, p.c, p.d, p.e) == (8.61e-6, -5.13e-3, 7.63e-1, -6.7e-3, 2.35)
    assert (p.A_cal, p.E_a, p.R_gas, p.h) == (14867.0, 24500.0, 8.314, 0.0465)
    pack = BatteryPackSpec()
    assert pack.scale_s == 83 * 94
    assert pack.V_cell == pytest.approx(350 / 83)


@pytest.mark.parametrize("field", ["R_gas", "E_a", "A_cal", "h"])
def test_params_reject_nonpositive(field):
    with pytest.raises(ValueError, match=field):
        CellDegradationParams(**{field: 0.0})


def test_pack_rejects_nonpositive():
    with pytest.raises(ValueError, match="gamma"):
        BatteryPackSpec(gamma=-1.0)


def test_calendar_examples():
    assert calendar_loss(300.0, 0.0) == 0.0
    assert calendar_loss(298.0, 1.0) == pytest.approx(0.754, abs=5e-4)
    assert calendar_loss(313.0, 1.0) == pytest.approx(1.212, abs=5e-4)
    assert calendar_loss(298.0, 4.0) == pytest.approx(2 * calendar_loss(298.0, 1.0), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -5.0, math.nan, math.inf])
def test_calendar_domain(bad):
    with pytest.raises(ValueError):
        calendar_loss(bad, 1.0)


def test_calendar_negative_time():
    with pytest.raises(ValueError):
        calendar_loss(298.0, -1.0)


@given(st.floats(250, 350), st.floats(250, 350), st.floats(0.01, 1000))
def test_calendar_increasing_in_temperature(T1, T2, t):
    if T1 < T2:
        assert calendar_loss(T1, t) < calendar_loss(T2, t)


def test_cyclic_coefficients_examples():
    hot = cyclic_coefficients(313.0)
    assert hot.B1 == pytest.approx(8.2e-4, rel=0.02)
    assert hot.B2 == pytest.approx(0.2529, abs=1e-4)
    assert not hot.clamped
    mild = cyclic_coefficients(298.0)
    assert b1_raw(298.0) == pytest.approx(-1.1e-3, rel=0.05)
    assert mild.clamped and mild.B1 == B1_FLOOR
    cold = cyclic_coefficients(283.0)
    assert cold.B1 == pytest.approx(7.8e-4, rel=0.02) and not cold.clamped


def test_b2_hat_is_cell_level_in_per_kw():
    coef = cyclic_coefficients(313.0)
    assert coef.B2_hat == pytest.approx(1000 * coef.B2 / ((350 / 83) * 1.5), rel=1e-14)


@given(st.floats(260, 340))
def test_clamp_flag_matches_polynomial(T):
    coef = cyclic_coefficients(T)
    assert coef.clamped == (oracles.b1(T) < B1_FLOOR)
    assert coef.B1 >= B1_FLOOR


def test_cyclic_exact_examples():
    assert cyclic_loss_exact(1.0, 1.0, 313.0) == pytest.approx(1.59e-3, rel=0.01)
    assert cyclic_loss_exact(1.7, 0.0, 290.0) == 0.0
    assert cyclic_loss_exact(-1.0, 2.0, 313.0) == cyclic_loss_exact(1.0, 2.0, 313.0)
    with pytest.raises(ValueError):
        cyclic_loss_exact(1.0, -1.0, 313.0)


def test_n_hat_examples():
    # 5.28 * 0.25 / (12 * 100)
    assert n_hat(5.28, 0.25, 12.0) == pytest.approx(1.1e-3, rel=1e-12)
    assert n_hat(5.28, 12.0, 12.0) == pytest.approx(5.28 / 100, rel=1e-15)
    assert n_hat(5.28, 0.5, 12.0) == pytest.approx(2 * n_hat(5.28, 0.25, 12.0), rel=1e-15)
    with pytest.raises(ValueError):
        n_hat(0.0, 0.25, 12.0)


def test_smooth_examples():
    nh = n_hat(5.28, 0.25, 4.0)
    at_zero = cyclic_loss_smooth(0.0, 313.0, nh)
    assert at_zero == cyclic_coefficients(313.0).B1 * 1.5 ** 2 * nh
    assert cyclic_loss_smooth(22.0, 313.0, nh) == pytest.approx(oracles.smooth_fraction(22.0, 313.0, nh), rel=1e-12)


def test_smooth_vectorised():
    P = np.array([-22.0, 0.0, 5.0])
    T = np.array([283.0, 298.0, 313.0])
    out = cyclic_loss_smooth(P, T, 1e-3)
    assert out.shape == (3,)
    for i in range(3):
        assert out[i] == cyclic_loss_smooth(P[i], T[i], 1e-3)


def test_smooth_rejects_nonfinite():
    with pytest.raises(ValueError):
        cyclic_loss_smooth(math.nan, 300.0, 1e-3)


@given(st.floats(-100, 100), st.floats(260, 340))
def test_smooth_even(P, T):
    assert cyclic_loss_smooth(P, T, 1e-3) == cyclic_loss_smooth(-P, T, 1e-3)


@given(st.floats(0, 100), st.floats(0, 100), st.sampled_from([275.0, 283.0, 311.0, 320.0]))
def test_smooth_monotone_in_magnitude(p1, p2, T):
    lo, hi = sorted((p1, p2))
    assert cyclic_loss_smooth(lo, T, 1e-3) <= cyclic_loss_smooth(hi, T, 1e-3)


def test_degradation_cost_examples():
    assert degradation_cost(0.0) == 0.0
    assert degradation_cost(1e-4) == pytest.approx(2.925, rel=1e-12)
    assert effective_gamma(207.0, 45.0, 0.3) == pytest.approx(585.0, rel=1e-12)
    with pytest.raises(ValueError):
        degradation_cost(-1e-6)


def test_approximation_envelope_regression():
    # Recorded once from the dense grid; guards against silent formula drift.
    env = approximation_envelope()
    assert env == pytest.approx(6.552898, rel=1e-6)
