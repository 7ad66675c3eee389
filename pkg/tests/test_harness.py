"""Experiment runners, report emission, determinism and the CLI."""

import json

import numpy as np
import pytest

from sll.cli import main as cli_main
from sll.config import parse_config
from sll.geometry import Grid1D
from sll.harness import (fit_loglog, probe_values, read_snapshots,
                         run_experiment, slope_threshold, write_snapshots)

TINY_CONVERGE = """
experiment = converge
alpha = 0.5
eps_ladder = 0.25, 0.125, 0.0625
replicas = 6
t_end = 0.5
"""


def test_fit_loglog_recovers_power_law():
    eps = np.array([2.0 ** -k for k in range(2, 7)])
    for p in (0.5, 1.0, 1.7):
        err = 3.7 * eps ** p
        fit = fit_loglog(eps, err)
        assert fit["slope"] == pytest.approx(p, abs=1e-9)
        assert fit["r2"] == pytest.approx(1.0, abs=1e-12)


def test_fit_loglog_degenerate_ladder():
    fit = fit_loglog([0.25], [0.1])
    assert fit["slope"] is None
    assert fit["slope_defined"] is False


def test_slope_thresholds():
    assert slope_threshold(0.5) == pytest.approx(0.35)
    assert slope_threshold(0.75) == pytest.approx(0.55)
    assert slope_threshold(2.0) == pytest.approx(0.8)


def test_probe_values_linear_exact():
    g = Grid1D(64)
    u = 2.0 * g.x + 1.0
    vals = probe_values(u, g)
    assert vals == pytest.approx([1.5, 2.0, 2.5], abs=1e-12)


def test_snapshot_roundtrip(tmp_path):
    data = np.arange(12.0).reshape(3, 4)
    path = tmp_path / "snap.bin"
    write_snapshots(path, data, 4)
    back = read_snapshots(path)
    assert np.array_equal(back, data)
    raw = path.read_bytes()
    assert raw[:4] == b"SLL1"
    assert len(raw) == 16 + 3 * 4 * 8


def test_converge_small_run(tmp_path):
    cfg = parse_config(TINY_CONVERGE)
    res = run_experiment(cfg, tmp_path)
    assert res.passed
    lines = (tmp_path / "converge.csv").read_text().splitlines()
    assert lines[0] == "eps,err_u_mean,err_u_se,err_delta_mean,err_delta_se"
    assert len(lines) == 4
    report = json.loads((tmp_path / "report.json").read_text())
    # report slope must equal a recompute from the CSV (shared formula)
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    fit = fit_loglog([r[0] for r in rows], [r[1] for r in rows])
    assert report["slope"] == pytest.approx(fit["slope"], abs=1e-12)
    assert report["limit_kind"] == "parabolic"
    assert report["errors_strictly_decreasing"] is True


def test_converge_wave_branch(tmp_path):
    cfg = parse_config("""
experiment = converge
alpha = 2.0
eps_ladder = 0.25, 0.125
replicas = 4
t_end = 0.25
""")
    res = run_experiment(cfg, tmp_path)
    assert res.report["limit_kind"] == "wave"
    assert res.report["slope"] is not None


def test_converge_degenerate_ladder(tmp_path):
    cfg = parse_config("""
experiment = converge
eps_ladder = 0.25
replicas = 2
t_end = 0.25
""")
    res = run_experiment(cfg, tmp_path)
    assert res.passed
    assert res.report["slope_defined"] is False
    assert res.report["slope"] is None


def test_byte_identical_reruns(tmp_path):
    cfg = parse_config(TINY_CONVERGE)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_experiment(cfg, out_a)
    run_experiment(cfg, out_b)
    assert (out_a / "converge.csv").read_bytes() == (out_b / "converge.csv").read_bytes()
    ra = json.loads((out_a / "report.json").read_text())
    rb = json.loads((out_b / "report.json").read_text())
    ra.pop("timestamp")
    rb.pop("timestamp")
    assert ra == rb


def test_seed_changes_output(tmp_path):
    cfg = parse_config(TINY_CONVERGE)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_experiment(cfg, out_a)
    run_experiment(cfg.with_overrides(seed=999), out_b)
    assert (out_a / "converge.csv").read_bytes() != (out_b / "converge.csv").read_bytes()


def test_simulate_outputs(tmp_path):
    cfg = parse_config("""
experiment = simulate
eps_ladder = 0.25
t_end = 0.25
""")
    res = run_experiment(cfg, tmp_path)
    assert res.passed
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0].split(",") == ["t", "u_p25", "u_p50", "u_p75", "u_l2",
                                   "v_l2", "delta_norm", "theta_norm", "energy"]
    snaps = read_snapshots(tmp_path / "snapshots.bin")
    assert snaps.shape[1] == 64
    assert np.isfinite(snaps).all()


def test_cli_roundtrip(tmp_path):
    cfg_path = tmp_path / "sim.cfg"
    cfg_path.write_text("experiment = simulate\nt_end = 0.25\n")
    rc = cli_main(["simulate", "--config", str(cfg_path),
                   "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "trajectory.csv").exists()


def test_cli_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("bogus_key = 3\n")
    assert cli_main(["simulate", "--config", str(bad)]) == 2
    assert cli_main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2
    # subcommand conflicting with the config's experiment key
    conflicted = tmp_path / "c.cfg"
    conflicted.write_text("experiment = converge\n")
    assert cli_main(["ou-check", "--config", str(conflicted)]) == 2


def test_cli_usage_error():
    assert cli_main(["not-an-experiment", "--config", "x"]) == 2
