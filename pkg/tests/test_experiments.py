import json
import math

import numpy as np
import pytest

from switchmet.estimation import crb_fixed_order, crb_switch
from switchmet.experiments import (
    MODES,
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    load_config,
    loss_sweep_area,
    run,
    thread_count,
    write_outputs,
)

A_FIT, PHI0_FIT = 0.042, 0.307


def test_config_defaults():
    cfg = ExperimentConfig("fig3")
    assert cfg.nu == 1000 and cfg.trials == 30 and cfg.phi0 == PHI0_FIT
    assert cfg.resolved_n_values() == tuple(range(9))
    assert ExperimentConfig("fig4").resolved_n_values() == tuple(range(1, 9))
    assert ExperimentConfig("loss-sweep").resolved_n_values() == (10, 50, 100)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mode": "fig6"},
        {"mode": "fig3", "nu": 0},
        {"mode": "fig3", "trials": 0},
        {"mode": "fig3", "seed": -1},
        {"mode": "fig3", "seed": 2**64},
        {"mode": "fig3", "eta": 1.5},
        {"mode": "fig4", "n_values": (0, 1, 2)},
        {"mode": "baseline", "baseline_split": "thirds"},
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_config_mapping_sections_and_overrides():
    cfg = config_from_mapping("fig4", {"switch": {"nu": 500}, "run": {"seed": 3}}, seed=7, trials=None)
    assert cfg.nu == 500 and cfg.seed == 7 and cfg.trials == 30
    with pytest.raises(ConfigError):
        config_from_mapping("fig4", {"bogus": 1})


def test_load_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"nu": 200, "n_max": 4}))
    cfg = load_config("fig3", path)
    assert cfg.nu == 200
    assert cfg.resolved_n_values() == (0, 1, 2, 3, 4)


def test_fig3_predictions():
    res = run(config_from_mapping("fig3", area=A_FIT))
    pred = dict(zip(res.column("n"), res.column("predicted_p_minus")))
    assert pred[0] == pytest.approx(0.02338, abs=1e-5)
    assert pred[8] == pytest.approx(0.9946, abs=1e-4)
    assert res.summary["within_4sigma"] >= 8


def test_fig4_bounds_columns():
    res = run(config_from_mapping("fig4"))
    assert np.allclose(res.column("crb_switch"), [crb_switch(1000, n) for n in range(1, 9)])
    assert np.all(res.column("crb_fixed_order") > res.column("crb_switch")[-1])
    assert np.all(res.column("rmse") > 0)


def test_fig5a_quadratic_phase():
    res = run(config_from_mapping("fig5a", area=A_FIT))
    true = res.column("true_phase")
    assert true[0] == PHI0_FIT
    assert true[-1] == pytest.approx(64 * A_FIT + PHI0_FIT)
    assert res.summary["exponent"] == pytest.approx(2.0, abs=0.1)


def test_fig5b_linear_phase():
    res = run(config_from_mapping("fig5b"))
    ns, true = res.column("n"), res.column("true_phase")
    assert true[0] == PHI0_FIT
    slopes = (true[1:] - PHI0_FIT) / ns[1:]
    assert np.ptp(slopes) < 0.1 * slopes.mean()
    growth = np.polyfit(np.log(ns[1:]), np.log(true[1:] - PHI0_FIT), 1)[0]
    assert growth == pytest.approx(1.0, abs=0.1)


def test_baseline_columns():
    res = run(config_from_mapping("baseline", area=0.2049**2))
    assert res.column("x_mean")[-1] == pytest.approx(0.2049)
    assert res.column("crb_fixed_order")[-1] == pytest.approx(crb_fixed_order(0.2049, 0.2049, 1000, 8))


def test_loss_sweep_area_stays_in_window():
    for n in (10, 50, 100):
        assert loss_sweep_area(n, PHI0_FIT) * n * n + PHI0_FIT == pytest.approx(math.pi / 2)
    res = run(config_from_mapping("loss-sweep"))
    assert res.column("survival")[-1] == pytest.approx(0.996**100)


def test_oracle_check_defaults_pass():
    res = run(config_from_mapping("oracle-check"))
    assert res.passed
    assert res.summary["max_deviation"] < 1e-6
    assert res.summary["min_retention"] >= 0.999


def test_oracle_check_zero_amplitude():
    res = run(config_from_mapping("oracle-check", oracle_max_amplitude=0.0, oracle_samples=10))
    assert res.summary["max_deviation"] == 0.0


def test_oracle_check_stress_fails():
    cfg = config_from_mapping(
        "oracle-check", oracle_cutoff=8, oracle_auto_raise=False, oracle_fixed_amplitude=True, oracle_max_amplitude=0.5
    )
    res = run(cfg)
    assert not res.passed
    assert res.summary["truncation_failures"] > 0


@pytest.mark.parametrize("mode", MODES)
def test_runs_are_deterministic(mode, monkeypatch):
    kwargs = {"oracle_samples": 10} if mode == "oracle-check" else {}
    monkeypatch.setenv("SWITCHMET_THREADS", "1")
    first = run(config_from_mapping(mode, seed=5, **kwargs)).to_csv()
    monkeypatch.setenv("SWITCHMET_THREADS", "4")
    assert thread_count() == 4
    second = run(config_from_mapping(mode, seed=5, **kwargs)).to_csv()
    assert first == second
    other = run(config_from_mapping(mode, seed=6, **kwargs)).to_csv()
    assert other != first


def test_csv_format(tmp_path):
    res = run(config_from_mapping("fig3", area=A_FIT))
    csv_path, json_path = write_outputs(res, tmp_path, wall_clock=1.0)
    raw = csv_path.read_bytes()
    assert b"\r\n" in raw
    lines = raw.decode().split("\r\n")
    assert lines[0].startswith("# ")
    header = next(line for line in lines if not line.startswith("#"))
    assert header.split(",") == list(res.columns)
    assert b"wall_clock" not in raw
    manifest = json.loads(json_path.read_text())
    assert manifest["wall_clock_seconds"] == 1.0
    assert manifest["columns"] == list(res.columns)
