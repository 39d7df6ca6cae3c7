import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kprox.cli import main

from tests.conftest import FIXTURES

SMIB_SCENARIO = {
    "network": {"smib": {"m": 1.0, "gamma": 1.0, "sigma": 1.0, "P": 0.5, "k": 1.0}},
    "initial": {"theta": "vonmises", "mu": 0.5236, "kappa": 4.0, "convention": "standard"},
    "n_particles": 48,
    "t_final": 0.01,
    "emit_every": 5,
}


def _write_scenario(tmp_path, extra=None, name="scenario.json"):
    cfg = json.loads(json.dumps(SMIB_SCENARIO))
    if extra:
        for key, val in extra.items():
            if isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_reduce_14bus(tmp_path, capsys):
    out = tmp_path / "red"
    rc = main([
        "reduce",
        "--case", str(FIXTURES / "case14.m"),
        "--dynamics", str(FIXTURES / "dynamics14.json"),
        "--out", str(out),
    ])
    assert rc == 0
    text = capsys.readouterr().out
    assert "n=5 generators" in text
    blob = json.loads((out / "reduced_network.json").read_text())
    assert blob["n"] == 5

    # the written network round-trips through --reduced
    out2 = tmp_path / "sim"
    rc = main([
        "simulate",
        "--reduced", str(out / "reduced_network.json"),
        "--out", str(out2),
        "-N", "16",
        "--t-final", "0.002",
        "--emit-every", "2",
    ])
    assert rc == 0
    assert (out2 / "snapshots.csv").exists()


def test_reduce_with_outage(tmp_path, capsys):
    out = tmp_path / "red"
    rc = main([
        "reduce",
        "--case", str(FIXTURES / "case14.m"),
        "--dynamics", str(FIXTURES / "dynamics14.json"),
        "--outage", "13",
        "--out", str(out),
    ])
    assert rc == 0
    rc = main([
        "reduce",
        "--case", str(FIXTURES / "case14.m"),
        "--dynamics", str(FIXTURES / "dynamics14.json"),
        "--outage", "99",
        "--out", str(out),
    ])
    assert rc == 2  # unknown branch is a configuration error


def test_simulate_writes_expected_files(tmp_path):
    scenario = _write_scenario(tmp_path)
    out = tmp_path / "run"
    rc = main(["simulate", "--config", str(scenario), "--out", str(out), "--seed", "3"])
    assert rc == 0

    manifest = json.loads((out / "run.json").read_text())
    assert manifest["schema_version"] == 1
    assert manifest["command"] == "simulate"
    assert manifest["scenario"]["seed"] == 3
    assert manifest["scenario"]["prox"]["h"] == 1e-3
    assert "not reproducible" in manifest["notes"]["timing_csv"]

    timing = _read_csv(out / "timing.csv")
    assert timing[0] == ["step", "t", "iterations", "residual_y", "residual_z", "wall_seconds"]
    assert len(timing) == 11  # header + 10 steps

    snaps = _read_csv(out / "snapshots.csv")
    assert snaps[0] == [
        "step", "t", "particle",
        "theta_wrapped_1", "theta_1", "omega_1", "value",
    ]
    # snapshots at step 0, 5, 10 for 48 particles
    assert len(snaps) == 1 + 3 * 48
    steps_seen = sorted({int(r[0]) for r in snaps[1:]})
    assert steps_seen == [0, 5, 10]
    wrapped = np.array([float(r[3]) for r in snaps[1:]])
    assert np.all((wrapped >= 0.0) & (wrapped < 2.0 * np.pi))

    metrics = _read_csv(out / "metrics.csv")
    assert metrics[0] == ["t", "rel_mean_err", "d_bw_normalized", "w2", "ess"]
    assert len(metrics) == 4  # t = 0 plus three emissions


def test_simulate_deterministic_outputs(tmp_path):
    scenario = _write_scenario(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--config", str(scenario), "--out", str(out)]) == 0
        outs.append(out)
    a, b = outs
    assert (a / "snapshots.csv").read_bytes() == (b / "snapshots.csv").read_bytes()
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    # timing matches except the measured wall column
    ta, tb = _read_csv(a / "timing.csv"), _read_csv(b / "timing.csv")
    assert [r[:5] for r in ta] == [r[:5] for r in tb]


def test_simulate_flag_overrides_config(tmp_path):
    scenario = _write_scenario(tmp_path, extra={"seed": 1})
    out = tmp_path / "run"
    rc = main([
        "simulate", "--config", str(scenario), "--out", str(out),
        "--seed", "9", "--h", "2e-3", "--t-final", "0.004",
    ])
    assert rc == 0
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["scenario"]["seed"] == 9
    assert manifest["scenario"]["prox"]["h"] == 2e-3
    timing = _read_csv(out / "timing.csv")
    assert len(timing) == 3  # header + 2 steps


def test_exit_codes_for_bad_configs(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    scenario = _write_scenario(tmp_path, extra={"t_final": 0.0105})
    assert main(["simulate", "--config", str(scenario), "--out", str(tmp_path / "x")]) == 2
    scenario = _write_scenario(tmp_path, extra={"z0": "sometimes"})
    assert main(["simulate", "--config", str(scenario), "--out", str(tmp_path / "y")]) == 2
    scenario = _write_scenario(tmp_path, extra={"network": {"smib": {"m": 1.0}}})
    # incomplete smib spec
    (tmp_path / "s2.json").write_text(
        json.dumps({"network": {"smib": {"m": 1.0}}, "t_final": 0.001}), encoding="utf-8"
    )
    assert main(["simulate", "--config", str(tmp_path / "s2.json"), "--out", str(tmp_path / "z")]) == 2
    capsys.readouterr()


def test_strict_nonconvergence_exit_code_and_manifest(tmp_path, capsys):
    scenario = _write_scenario(tmp_path, extra={"prox": {"l_max": 1}, "strict": True})
    out = tmp_path / "run"
    rc = main(["simulate", "--config", str(scenario), "--out", str(out)])
    assert rc == 4
    # run.json is written before stepping starts, so the aborted run
    # still records its full scenario
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["scenario"]["prox"]["l_max"] == 1
    capsys.readouterr()


def test_simulate_numerical_failure_exit_code(tmp_path, capsys):
    # velocities far outside the dissipative factor's range underflow it
    scenario = _write_scenario(
        tmp_path, extra={"initial": {"omega": {"lo": 50.0, "hi": 51.0}}}
    )
    rc = main(["simulate", "--config", str(scenario), "--out", str(tmp_path / "run")])
    assert rc == 3
    capsys.readouterr()


def test_compare_writes_metrics_against_twin(tmp_path, capsys):
    scenario = _write_scenario(tmp_path, extra={"n_particles": 40, "t_final": 0.02, "emit_every": 4})
    out = tmp_path / "cmp"
    rc = main(["compare", "--config", str(scenario), "--out", str(out)])
    assert rc == 0
    metrics = _read_csv(out / "metrics.csv")
    assert len(metrics) == 7  # header, t=0, five emissions
    vals = np.array([[float(x) for x in row] for row in metrics[1:]])
    assert np.all(np.isfinite(vals))
    assert np.all(vals[:, 4] > 1.0)  # ess column


def test_compare_trend_assertion_needs_enough_rows(tmp_path, capsys):
    scenario = _write_scenario(tmp_path, extra={"emit_every": 100})
    rc = main([
        "compare", "--config", str(scenario), "--out", str(tmp_path / "cmp"),
        "--assert-decreasing",
    ])
    assert rc == 2
    capsys.readouterr()


def test_oracle_n1_smib(tmp_path, capsys):
    scenario = _write_scenario(tmp_path, extra={"n_particles": 200})
    out = tmp_path / "oracle"
    rc = main([
        "oracle-n1", "--config", str(scenario), "--out", str(out),
        "--times", "0.005", "--n-theta", "48", "--n-omega", "64", "--bins", "12",
    ])
    assert rc == 0
    report = json.loads((out / "oracle_report.json").read_text())
    assert report["times"] == [0.005]
    assert report["l1"][0]["theta"] >= 0.0
    text = capsys.readouterr().out
    assert "L1(theta)" in text


def test_oracle_n1_rejects_multimachine(tmp_path, capsys):
    (tmp_path / "t1.json").write_text(
        json.dumps({"network": {"table1": {"n": 3, "seed": 0}}}), encoding="utf-8"
    )
    rc = main(["oracle-n1", "--config", str(tmp_path / "t1.json"), "--out", str(tmp_path / "o")])
    assert rc == 2
    capsys.readouterr()


def test_sample_table1_writes_network(tmp_path, capsys):
    out = tmp_path / "tbl"
    rc = main(["sample-table1", "--n", "4", "--seed", "2", "--out", str(out)])
    assert rc == 0
    blob = json.loads((out / "reduced_network.json").read_text())
    assert blob["n"] == 4
    rc2 = main([
        "simulate", "--reduced", str(out / "reduced_network.json"),
        "--out", str(tmp_path / "sim"), "-N", "12", "--t-final", "0.002",
    ])
    assert rc2 == 0
    capsys.readouterr()


def test_entry_point_runs():
    out = subprocess.run(
        [sys.executable, "-m", "kprox.cli", "--version"], capture_output=True, text=True
    )
    assert out.returncode == 0


def test_csv_floats_carry_17_digits(tmp_path):
    scenario = _write_scenario(tmp_path)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(scenario), "--out", str(out)]) == 0
    snaps = _read_csv(out / "snapshots.csv")
    # round-trip: parsing and reformatting reproduces the file exactly
    for row in snaps[1:5]:
        for field in row[3:]:
            assert format(float(field), ".17g") == field
