import csv
import io
import json
from dataclasses import replace

import pytest

from thermomon.cli import main
from thermomon.experiments import ConfigError, default_spec, run, spec_from_dict
from thermomon.experiments.config import KINDS
from thermomon.experiments.report import SERIES_HEADER
from thermomon.experiments.runners import (
    METRIC_KEYS,
    connectivity_lookup,
    run_agility,
    run_connectivity,
    run_linearity,
    run_response_time,
    run_scaling,
    run_stability,
    run_wired_baseline,
)


@pytest.fixture(scope="module")
def bundles():
    return {kind: run(default_spec(kind)) for kind in KINDS}


def rows(bundle):
    return list(csv.DictReader(io.StringIO(bundle.series_csv())))


# -- schema


@pytest.mark.parametrize("kind", KINDS)
def test_metric_keys_are_fixed(bundles, kind):
    doc = json.loads(bundles[kind].metrics_json())
    assert set(doc) - {"run"} == METRIC_KEYS[kind]
    assert doc["run"] == {"kind": kind, "seed": 1, "config_hash": default_spec(kind).config_hash()}


@pytest.mark.parametrize(
    "kind, expected", [("stability", 120), ("wired", 60), ("response", 600), ("linearity", 11), ("agility", 9)]
)
def test_series_row_counts(bundles, kind, expected):
    table = rows(bundles[kind])
    assert len(table) == expected
    assert tuple(table[0]) == SERIES_HEADER


def test_runner_rejects_wrong_kind():
    with pytest.raises(ConfigError):
        run_stability(default_spec("wired"))


# -- stability


def test_stability_bounds(bundles):
    m = bundles["stability"].metrics
    assert m["samples_per_thermometer"] == 60
    assert m["raw_peak_deviation_c"] <= 0.125 + 0.005 + 1e-9
    assert m["smoothed_peak_to_peak_c"] < 0.25
    means = [t["mean_c"] for t in m["per_thermometer"].values()]
    assert len(means) == 2 and abs(means[0] - means[1]) < 0.05


# -- wired


def test_wired_default_bound(bundles):
    assert bundles["wired"].metrics["max_deviation_c"] <= 0.054 + 0.005 + 1e-9
    assert all(r["smoothed_c"] == "" for r in rows(bundles["wired"]))


def test_wired_zero_noise_is_quantization_only():
    spec = spec_from_dict({"kind": "wired", "sensor": {"noise_amp": 0.0}})
    assert run_wired_baseline(spec).metrics["max_deviation_c"] <= 0.005


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_wireless_noisier_than_wired(seed):
    wired = run_wired_baseline(default_spec("wired").with_seed(seed)).metrics["max_deviation_c"]
    wireless = spec_from_dict({"kind": "wired", "seed": seed, "sensor": {"noise_amp": 0.125}})
    assert run_wired_baseline(wireless).metrics["max_deviation_c"] >= wired


# -- linearity


def test_linearity_identity_without_noise():
    spec = spec_from_dict({"kind": "linearity", "sensor": {"noise_amp": 0.0}})
    m = run_linearity(spec).metrics
    assert m["fit_slope"] == pytest.approx(1.0, abs=1e-6)
    assert m["fit_intercept"] == pytest.approx(0.0, abs=1e-6)
    assert len(m["readings_c"]) == 11


def test_linearity_biased_mse_within_bound():
    spec = spec_from_dict({"kind": "linearity", "sensor": {"bias_fraction": 1.0}})
    assert run_linearity(spec).metrics["mse_c2"] <= 0.357


# -- response


def test_response_lags(bundles):
    m = bundles["response"].metrics
    assert m["expected_lag_slow_c"] == pytest.approx(3.42, abs=0.005)
    assert m["expected_lag_fast_c"] == pytest.approx(15.17, abs=0.005)
    assert m["steady_lag_fast_c"] > m["steady_lag_slow_c"]
    assert m["max_lag_fast_c"] > m["max_lag_slow_c"]
    assert m["settling_time_s"] <= 5 * m["tau_s"]
    assert m["plateau_c"] == pytest.approx(100.45)


# -- agility


def test_agility_defaults(bundles):
    m = bundles["agility"].metrics
    assert m["readings_c"][0] == pytest.approx(30.19, abs=0.125 + 0.005)
    assert m["errors_c"][0] > 0.4
    assert m["qualifying_td_s"] == 12.0
    assert m["speedup"] == pytest.approx(10.0)


def test_agility_noise_free_first_reading():
    spec = spec_from_dict({"kind": "agility", "sensor": {"noise_amp": 0.0}})
    assert run_agility(spec).metrics["readings_c"][0] == pytest.approx(30.19)


# -- connectivity


def test_connectivity_table_shape(bundles):
    m = bundles["connectivity"].metrics
    assert len(m["table"]) == 4 * 5
    assert all(len(row["per_seed"]) == 5 for row in m["table"])
    assert bundles["connectivity"].series == []


def test_connectivity_shape_of_claims(bundles):
    look = connectivity_lookup(bundles["connectivity"])
    for d in (10.0, 20.0, 30.0):
        assert look[("S1", d)] >= 0.95
    assert look[("S1", 40.0)] < look[("S1", 30.0)]
    assert look[("S1", 50.0)] <= look[("S1", 40.0)]
    assert min(v for (s, _), v in look.items() if s == "S4") >= 0.95


def test_connectivity_per_seed_monotone_beyond_30m():
    spec = spec_from_dict({"kind": "connectivity", "params": {"scenarios": ["S1"], "distances_m": [30, 40, 50]}})
    (near, mid, far) = run_connectivity(spec).metrics["table"]
    for a, b, c in zip(near["per_seed"], mid["per_seed"], far["per_seed"]):
        assert b < a and c <= b


# -- scaling


def test_scaling_arithmetic(bundles):
    m = bundles["scaling"].metrics
    periods = dict(zip(m["n_grid"], m["min_round_period_s"]))
    assert periods[1] == pytest.approx(m["per_node_interval_s"][0])
    for n in (1, 2, 4, 8, 16):
        assert periods[2 * n] == pytest.approx(2 * periods[n])
    assert m["fit_residual"] < 0.01
    assert m["measured_interval_s"] == pytest.approx(m["per_node_interval_s"])


# -- determinism


@pytest.mark.parametrize("kind", ["stability", "response", "linearity", "agility"])
def test_rerun_is_byte_identical(bundles, kind):
    again = run(default_spec(kind))
    assert again.metrics_json() == bundles[kind].metrics_json()
    assert again.series_csv() == bundles[kind].series_csv()
    assert again.alerts_ndjson() == bundles[kind].alerts_ndjson()


def test_seed_changes_output(bundles):
    other = run(default_spec("stability").with_seed(2))
    assert other.series_csv() != bundles["stability"].series_csv()


# -- CLI


def test_cli_writes_outputs(tmp_path, capsys):
    assert main(["stability", "--seed", "3", "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["stability_alerts.ndjson", "stability_metrics.json", "stability_series.csv"]
    assert json.loads((tmp_path / "stability_metrics.json").read_text())["run"]["seed"] == 3


def test_cli_run_config(tmp_path):
    cfg = tmp_path / "scaling.json"
    cfg.write_text(json.dumps({"kind": "scaling", "params": {"n_grid": [1, 2, 3]}}))
    assert main(["run", str(cfg), "--out", str(tmp_path), "--check"]) == 0
    m = json.loads((tmp_path / "scaling_metrics.json").read_text())
    assert m["n_grid"] == [1, 2, 3]


def test_cli_validation_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"scenario": {"kind": "S1"}, "channel": {"exponent": 1.5}}))
    assert main(["stability", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "channel.exponent" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_cli_check_failure_exit_code(tmp_path, capsys):
    # a hot sensor breaks the wired bound
    cfg = tmp_path / "noisy.json"
    cfg.write_text(json.dumps({"kind": "wired", "sensor": {"noise_amp": 0.3}}))
    assert main(["run", str(cfg), "--out", str(tmp_path), "--check"]) == 3
    assert "FAIL" in capsys.readouterr().out


def test_cli_check_pass(tmp_path, capsys):
    assert main(["wired", "--out", str(tmp_path), "--check"]) == 0
    assert "PASS" in capsys.readouterr().out
