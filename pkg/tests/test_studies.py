import json

import numpy as np
import pytest

from v2g_tradeoff.equilibrium import build_instance, revenue_objective
from v2g_tradeoff.studies import cli
from v2g_tradeoff.studies.config import ConfigError, env_overrides, load_config, validate_config
from v2g_tradeoff.studies.runners import (
    StudyError,
    load_schedule_csv,
    max_violation,
    read_rows,
    run_study,
    scaled_pack,
)
from v2g_tradeoff.studies.tariffs import TariffSynthesisSpec, amplify_variance, gaussian_profile

SMALL = {
    "sweeps": {"w": [0, 8, 16], "T_a_C": [10.0, 40.0], "charger_kw": [22.0], "profile_w": [0, 16]},
    "tariff": {"variance_scales": [0.0, 1.0]},
    "robustness": {"draws": 2},
    "projection": {"days": 7, "capacities_kwh": [50.0], "w": [0, 48]},
    "integration_step_s": 30.0,
}


def small(tmp_path, **extra):
    over = {**SMALL, "out": str(tmp_path), **extra}
    return load_config(overrides=over, environ={})


# configuration


def test_defaults(default_config):
    cfg = default_config
    assert cfg.session.T == 16 and cfg.session.delta_t == 0.25
    assert cfg.session.E_des_pu == 0.9 and cfg.session.eta_avg == 0.95
    assert cfg.pack.pack_capacity == 50.0
    assert cfg.ws() == list(range(17))
    assert cfg.thermal_rho is None
    assert cfg.robustness.draws == 100


def test_negative_epsilon_rejected():
    problems = validate_config(overrides={"session": {"epsilon_pu": -0.1}}, environ={})
    assert [p.key for p in problems] == ["session.epsilon_pu"]
    assert problems[0].kind == "value"


def test_dangling_path_is_io_problem(tmp_path):
    problems = validate_config(overrides={"ambient": {"path": str(tmp_path / "none.csv")}}, environ={})
    assert any(p.kind == "io" and p.key == "ambient.path" for p in problems)
    assert "I/O error" in str(problems[0])


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as err:
        load_config(overrides={"seed": -1, "threads": 0, "sweeps": {"T_a_C": []}}, environ={})
    keys = {p.key for p in err.value.problems}
    assert {"seed", "threads", "sweeps.T_a_C"} <= keys


def test_unknown_keys_flagged():
    problems = validate_config(overrides={"pack": {"capacity": 60}}, environ={})
    assert [p.key for p in problems] == ["pack.capacity"]


def test_tariff_window_checked():
    problems = validate_config(overrides={"session": {"tariff_start_interval": 40}}, environ={})
    assert problems and problems[0].key == "session.tariff_start_interval"


def test_env_overrides():
    env = {"V2GT_SEED": "5", "V2GT_SESSION__P_MAX": "11", "OTHER": "1"}
    assert env_overrides(env) == {"seed": 5, "session": {"p_max": 11}}
    cfg = load_config(environ=env)
    assert cfg.seed == 5 and cfg.session.P_max == 11.0
    assert load_config(overrides={"seed": 6}, environ=env).seed == 6


def test_config_file_layering(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 3, "session": {"E_0_pu": 0.4}}))
    cfg = load_config(path, environ={})
    assert cfg.seed == 3 and cfg.session.E_0_pu == 0.4 and cfg.session.E_des_pu == 0.9
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert validate_config(bad, environ={})[0].kind == "io"


def test_digest_ignores_output_location(tmp_path):
    a = load_config(overrides={"out": str(tmp_path / "a")}, environ={})
    b = load_config(overrides={"out": str(tmp_path / "b"), "threads": 2}, environ={})
    c = load_config(overrides={"seed": 1}, environ={})
    assert a.digest == b.digest != c.digest


# tariffs


def test_amplify_variance():
    m = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(amplify_variance(m, 0.0), m)
    assert np.allclose(amplify_variance(m, 1.0), [0.0, 0.2, 0.4])
    assert np.all(amplify_variance(m, 5.0) >= 0.0)


def test_gaussian_profile_reproducible():
    spec = TariffSynthesisSpec(np.full(8, 0.2), 0.1, seed=4)
    a, b = gaussian_profile(spec, 3), gaussian_profile(spec, 3)
    assert np.array_equal(a, b) and not np.array_equal(a, gaussian_profile(spec, 4))
    assert np.array_equal(gaussian_profile(TariffSynthesisSpec(np.full(8, 0.2), 0.0), 0), np.full(8, 0.2))


def test_scaled_pack(default_config):
    pack = scaled_pack(default_config.pack, 100.0)
    assert pack.pack_capacity == 100.0 and pack.n_parallel == 2 * default_config.pack.n_parallel


# runners


@pytest.mark.parametrize("kind", ["temperature", "tariff-variance", "charger", "profiles"])
def test_runner_outputs_feasible_and_round_trip(tmp_path, kind):
    cfg = small(tmp_path)
    result = run_study(cfg, kind)
    assert result.schedules and max_violation(result) <= 1e-6
    for path in result.files:
        assert path.exists()
        if path.suffix == ".csv":
            text = path.read_text()
            assert text.startswith("# v2g-tradeoff ") and f"config_sha256 {cfg.digest}" in text


def test_cost_columns_round_trip(tmp_path):
    cfg = small(tmp_path)
    result = run_study(cfg, "temperature")
    rows = read_rows(cfg.out / "temperature_tradeoff.csv")
    for mem, disk in zip(result.rows, rows):
        for col in ("charging_cost_eur", "degradation_cost_eur"):
            assert float(disk[col]) == pytest.approx(mem[col], abs=1e-9)


def test_profile_export_consistent(tmp_path):
    cfg = small(tmp_path)
    result = run_study(cfg, "profiles")
    session, schedule = result.schedules[-1]
    P = load_schedule_csv(cfg.out / "profile_w16.csv")
    assert np.array_equal(P, schedule.P_bat)
    data = json.loads((cfg.out / "profile_w16.json").read_text())
    inst = build_instance(session, 16, 283.15)
    assert data["charging_cost_eur"] == pytest.approx(revenue_objective(inst, P), abs=1e-9)
    assert abs(data["terminal_energy_kwh"] - 45.0) <= 1.0 + 1e-6


def test_runs_are_deterministic(tmp_path):
    a = run_study(small(tmp_path / "a"), "charger")
    b = run_study(small(tmp_path / "b"), "charger")
    for fa, fb in zip(a.files, b.files):
        assert fa.read_text() == fb.read_text()


def test_robustness_runner(tmp_path):
    cfg = small(tmp_path, sweeps={**SMALL["sweeps"], "w": [0, 16]})
    result = run_study(cfg, "robustness")
    summary = result.extra["summary"]
    assert len(summary.keys("gt")) == 2 and len(summary.keys("mo")) == 17
    text = (cfg.out / "robustness_summary.csv").read_text()
    assert "draws 2" in text


def test_projection_without_v2g_days(tmp_path):
    cfg = small(tmp_path, projection={**SMALL["projection"], "v2g_weekdays": []})
    rows = run_study(cfg, "projection").rows
    assert all(r["sessions"] == 0 and r["annual_degradation_cost_eur"] == 0.0 for r in rows)


def test_projection_small(tmp_path):
    result = run_study(small(tmp_path), "projection")
    assert [r["sessions"] for r in result.rows] == [3, 3]
    assert max_violation(result) <= 1e-6
    charging = [r["annual_charging_cost_eur"] for r in result.rows]
    assert charging[1] <= charging[0] + 1e-6


def test_projection_short_ambient(tmp_path):
    amb = tmp_path / "amb.csv"
    amb.write_text("time_h,temp_C\n0,10\n48,12\n")
    cfg = small(tmp_path, projection={**SMALL["projection"], "ambient_path": str(amb)})
    with pytest.raises(StudyError, match="covers"):
        run_study(cfg, "projection")


def test_underpowered_charger_named(tmp_path):
    cfg = small(tmp_path, sweeps={**SMALL["sweeps"], "charger_kw": [3.0]})
    with pytest.raises(StudyError, match="kW"):
        run_study(cfg, "charger")


# command line


def test_cli_validate(capsys, monkeypatch):
    monkeypatch.delenv("V2GT_SEED", raising=False)
    assert cli.main(["validate"]) == 0
    assert "configuration OK" in capsys.readouterr().out
    assert cli.main(["validate", "--seed", "-2"]) == 2
    assert "seed" in capsys.readouterr().err


def test_cli_missing_config(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(tmp_path / "x.json")]) == 2
    assert cli.main(["profiles", "--config", str(tmp_path / "x.json")]) == 2


def test_cli_run(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps(SMALL))
    out = tmp_path / "out"
    assert cli.main(["profiles", "--config", str(conf), "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert str(out / "profile_w0.csv") in printed
    assert (out / "profile_w16.json").exists()


def test_cli_study_error_exit_code(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({**SMALL, "sweeps": {**SMALL["sweeps"], "charger_kw": [1.0]}}))
    assert cli.main(["charger", "--config", str(conf), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
