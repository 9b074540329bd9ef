from __future__ import annotations

import csv
import filecmp
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from gaussunravel import cli
from gaussunravel.config import ConfigError, load_config, preset_names
from gaussunravel.optimize import PhaseObjective
from gaussunravel.correlations import ModeSet, TimeGrid


def preset_text(name: str) -> str:
    return resources.files("gaussunravel.scenarios").joinpath(name + ".toml").read_text()


def write_config(tmp_path: Path, name: str, text: str) -> str:
    p = tmp_path / f"{name}.toml"
    p.write_text(text)
    return str(p)


def run(*args) -> int:
    return cli.main([str(a) for a in args])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_presets_are_listed_and_valid(capsys):
    names = preset_names()
    assert {"markov", "ohmic", "superohmic", "zero_coupling", "oracle_onemode", "optimize_scan", "optimize_restore"} <= set(names)
    for n in names:
        load_config(n)
    assert run("presets") == 0
    assert "ohmic" in capsys.readouterr().out


def test_minimal_one_mode_kernel_csv(tmp_path):
    assert run("correlations", "--config", "onemode", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "kernel_ch0.csv")
    n = load_config("onemode").grid.n_steps
    assert len(rows) == (n + 1) * (n + 2) // 2
    # xi = 0 gives a vanishing eta kernel
    assert all(float(r["re_eta"]) == 0 and float(r["im_eta"]) == 0 for r in rows)
    assert json.loads((tmp_path / "resolved_config.json").read_text())["scenario"] == "onemode"


def test_markov_correlations_emit_rates(tmp_path, capsys):
    assert run("correlations", "--config", "markov", "--out", tmp_path) == 0
    assert "not materialized" in capsys.readouterr().out
    assert not (tmp_path / "kernel_ch0.csv").exists()
    rows = read_csv(tmp_path / "rates_ch0.csv")
    assert float(rows[-1]["re_A"]) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "edit",
    [
        lambda s: s + "\nbogus_key = 1\n",
        lambda s: s.replace('time_unit = "1/omega"\n', ""),
        lambda s: s.replace("[grid]\ndt = 0.1", "[grid]\ndt = -0.1"),
        lambda s: s.replace('rule = "zero"', 'rule = "constant"\nvalue = [1.0, 0.0]'),
        lambda s: s.replace("schema_version = 1", "schema_version = 2"),
        lambda s: s.replace("[bath]", "[bath]\nomega_maxx = 3.0"),
        lambda s: s.replace("[grid]", "grid = [", 1),
    ],
)
def test_validation_errors_exit_2(tmp_path, edit):
    path = write_config(tmp_path, "bad", edit(preset_text("onemode")))
    assert run("correlations", "--config", path, "--out", tmp_path / "o") == 2


def test_missing_config_exits_2(tmp_path):
    assert run("unravel", "--config", tmp_path / "nope.toml") == 2
    assert run("unravel") == 2
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.toml"))


def test_negative_omega_max_rejected(tmp_path):
    text = preset_text("ohmic").replace("omega_max = 20.0", "omega_max = -1.0")
    assert run("correlations", "--config", write_config(tmp_path, "c", text), "--out", tmp_path / "o") == 2


@pytest.mark.parametrize("name", ["markov", "ohmic", "superohmic"])
def test_fig1_presets(tmp_path, name):
    cfg = load_config(name)
    text = preset_text(name).replace("n_samples = 4000", "n_samples = 500")
    assert run("unravel", "--config", write_config(tmp_path, name, text), "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "fig1_data.csv")
    assert list(rows[0]) == ["t", "xbar_opt", "xbar_zero", "exact"]
    assert len(rows) == cfg.grid.n_steps + 1
    opt = np.array([float(r["xbar_opt"]) for r in rows])
    zero = np.array([float(r["xbar_zero"]) for r in rows])
    exact = np.array([float(r["exact"]) for r in rows])
    eps = cfg.squeezing.epsilon
    assert np.max(np.abs(opt - exact)) < 1e-3 + eps
    assert np.all(zero >= exact - 1e-12)
    assert np.all(zero[1:] > exact[1:])
    summary = json.loads((tmp_path / "summary.json").read_text())
    if name == "markov":
        assert "monte_carlo" in summary
        assert exact[-1] == pytest.approx(math.exp(-2 * cfg.grid.dt * cfg.grid.n_steps))
    else:
        assert summary["trace_sanity_passed"]
        assert (tmp_path / "rho.csv").exists() and (tmp_path / "norm_traj0.csv").exists()


def test_zero_coupling_is_flat(tmp_path):
    assert run("unravel", "--config", "zero_coupling", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "fig1_data.csv")
    assert all(float(r["xbar_opt"]) == 1.0 and float(r["xbar_zero"]) == 1.0 for r in rows)
    assert all(float(r["xbar"]) == 1.0 for r in read_csv(tmp_path / "bound.csv"))


def small_ohmic(tmp_path) -> str:
    text = (
        preset_text("ohmic")
        .replace("n_samples = 4000", "n_samples = 600")
        .replace("chunk = 1000", "chunk = 150")
        .replace("n_steps = 250", "n_steps = 60")
        .replace('formats = ["csv", "json"]', "")
    )
    text += '\n' if text.endswith("\n") else ""
    text = text.replace('dir = "out/ohmic"', 'dir = "out/ohmic"\nformats = ["csv", "json", "bin"]')
    return write_config(tmp_path, "small", text)


def same_tree(a: Path, b: Path) -> bool:
    """Bitwise comparison of two output directories; resolved configs may differ only in the output path."""
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    ra, rb = (json.loads((d / "resolved_config.json").read_text()) for d in (a, b))
    ra["outputs"]["dir"] = rb["outputs"]["dir"] = ""
    return ra == rb and all(filecmp.cmp(a / n, b / n, shallow=False) for n in names if n != "resolved_config.json")


def test_determinism_and_thread_invariance(tmp_path):
    cfg = small_ohmic(tmp_path)
    assert run("unravel", "--config", cfg, "--out", tmp_path / "a", "--threads", 1) == 0
    assert run("unravel", "--config", cfg, "--out", tmp_path / "b", "--threads", 3) == 0
    assert same_tree(tmp_path / "a", tmp_path / "b")
    assert (tmp_path / "a" / "states_traj0.bin").exists()


def test_seed_override_changes_samples(tmp_path):
    cfg = small_ohmic(tmp_path)
    assert run("unravel", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("unravel", "--config", cfg, "--out", tmp_path / "b", "--seed", 99) == 0
    assert not filecmp.cmp(tmp_path / "a" / "rho.csv", tmp_path / "b" / "rho.csv", shallow=False)
    assert filecmp.cmp(tmp_path / "a" / "fig1_data.csv", tmp_path / "b" / "fig1_data.csv", shallow=False)
    assert json.loads((tmp_path / "b" / "resolved_config.json").read_text())["seed"] == 99


def test_resolved_config_round_trip(tmp_path):
    cfg = small_ohmic(tmp_path)
    assert run("unravel", "--config", cfg, "--out", tmp_path / "a") == 0
    resolved = tmp_path / "resolved.json"
    resolved.write_text((tmp_path / "a" / "resolved_config.json").read_text())
    data = json.loads(resolved.read_text())
    data["outputs"]["dir"] = str(tmp_path / "c")
    resolved.write_text(json.dumps(data))
    assert run("unravel", "--config", resolved) == 0
    assert same_tree(tmp_path / "a", tmp_path / "c")


def test_statistical_sanity_failure_exits_3(tmp_path, monkeypatch):
    from gaussunravel import sse

    real = sse.run_ensemble

    def biased(*args, **kwargs):
        avg = real(*args, **kwargs)
        dev = avg.trace_deviation.copy()
        dev[-1] = 1.0
        return sse.DensityAverage(avg.grid, avg.rho, avg.rho_se, dev, avg.mean_norm_sq, avg.norm_sq_se, avg.n_samples)

    monkeypatch.setattr(cli, "run_ensemble", biased)
    assert run("unravel", "--config", small_ohmic(tmp_path), "--out", tmp_path / "x") == 3


def test_sample_subcommand(tmp_path):
    text = preset_text("onemode").replace('rule = "zero"', 'rule = "constant"\nvalue = [0.3, 0.4]')
    assert run("sample", "--config", write_config(tmp_path, "s", text), "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "noise_ch0_traj0.csv")
    assert len(rows) == 11
    stats = json.loads((tmp_path / "noise_stats_ch0.json").read_text())
    assert stats["n_samples"] == 1000 and stats["max_eta_dev"] < 0.1
    assert run("sample", "--config", "markov", "--out", tmp_path / "m") == 2


def test_oracle_preset(tmp_path):
    assert run("oracle", "--config", "oracle_onemode", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "oracle_report.json").read_text())
    assert rep["passed"] and rep["identity_residual"] < 1e-8 and rep["sse_residual"] < 1e-6
    text = preset_text("oracle_onemode").replace("xi_values = [[0.0, 0.0], [0.25, 0.4330127018922193]]", "xi_values = [[0.5, 0.0]]")
    assert run("oracle", "--config", write_config(tmp_path, "x", text), "--out", tmp_path / "b") == 0
    rep_b = json.loads((tmp_path / "b" / "oracle_report.json").read_text())
    # both residuals sit at rounding level, far inside the tolerance
    assert rep_b["partial_trace_residual"] <= 2 * max(rep["partial_trace_residual"], 1e-15)


def test_oracle_truncation_failure_exits_4(tmp_path):
    text = preset_text("oracle_onemode").replace("n_max = 24", "n_max = 2").replace("g = [0.3]", "g = [2.0]")
    assert run("oracle", "--config", write_config(tmp_path, "x", text), "--out", tmp_path) == 4
    rep = json.loads((tmp_path / "oracle_report.json").read_text())
    assert rep["leakage_flag"] and not rep["passed"]


def test_optimize_scan_preset_against_exhaustive_scan(tmp_path):
    assert run("optimize", "--config", "optimize_scan", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "search_result.json").read_text())
    assert abs(res["analytic_gap"]) < 1e-3
    cfg = load_config("optimize_scan")
    b = cfg.bath[0]
    obj = PhaseObjective(ModeSet(np.array(b.g), np.array(b.omega), np.zeros(1, dtype=complex)), cfg.grid.grid())
    scan = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    best = min(math.exp(obj.log_xbar(0.999 * np.exp(1j * np.array([p])))) for p in scan)
    assert res["best_value"] <= best * (1 + 1e-12)


def test_optimize_restore_preset(tmp_path):
    assert run("optimize", "--config", "optimize_restore", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "search_result.json").read_text())
    assert res["best_value"] > 1 - 10 * 1e-3


def test_optimize_budget_zero(tmp_path):
    text = preset_text("optimize_restore").replace('objective = "maximize"', 'objective = "maximize"\nbudget = 0')
    code = run("optimize", "--config", write_config(tmp_path, "b", text), "--out", tmp_path)
    res = json.loads((tmp_path / "search_result.json").read_text())
    assert res["budget_exhausted"] is True
    assert code == (0 if abs(res["analytic_gap"]) < 1e-3 else 4)


def test_acceptance_subcommand(capsys):
    assert run("acceptance", "--only", "7") == 0
    assert capsys.readouterr().out.startswith("C7")
