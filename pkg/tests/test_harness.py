import json

import numpy as np
import pytest

from smoothfp import harness
from smoothfp.game import GameClass, random_ergodic_game, save
from smoothfp.harness import ConfigError, ExperimentConfig, emit_plot_data, load_traces, run_experiment
from smoothfp.learners import Trace

GOLDEN_DISCRETE = ("step,u_p0_s0,u_p0_s1,u_p1_s0,u_p1_s1,rho_val_s0,rho_val_s1,rho_br_s0,rho_br_s1,"
                   "rho_val_max,rho_br_max,gap_s0,gap_s1,duality_gap_max,u_err,q_err,r_err,value_rate")
GOLDEN_CONTINUOUS = ("t,u_p0_s0,u_p0_s1,u_p0_s2,u_p1_s0,u_p1_s1,u_p1_s2,u_p2_s0,u_p2_s1,u_p2_s2,"
                     "rho_val_s0,rho_val_s1,rho_val_s2,rho_br_s0,rho_br_s1,rho_br_s2,"
                     "rho_val_max,rho_br_max,value_rate")


def _cfg(tmp_path, **over):
    base = {
        "game": {"generate": {"states": 2, "actions": [2, 2], "class": "ZeroSum", "mixing": 0.2}},
        "algorithm": "mfp", "steps": 2000, "every": 200, "seeds": [0, 1, 2],
        "output": str(tmp_path / "out"),
    }
    base.update(over)
    return ExperimentConfig.from_dict(base)


def test_three_seeds_write_three_traces_and_summary(tmp_path):
    report = run_experiment(_cfg(tmp_path))
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == [
        "summary.json", "trace_seed0.csv", "trace_seed1.csv", "trace_seed2.csv"]
    assert report.passed and len(report.seeds) == 3
    summary = json.loads((out / "summary.json").read_text())
    agg = summary["aggregates"]["rho_val_max"]
    finals = sorted(r["final"]["rho_val_max"] for r in summary["seeds"])
    assert agg["median"] == finals[1] and agg["min"] == finals[0] and agg["max"] == finals[2]


def test_reruns_are_byte_identical(tmp_path):
    run_experiment(_cfg(tmp_path, output=str(tmp_path / "a")))
    run_experiment(_cfg(tmp_path, output=str(tmp_path / "b"), workers=2))
    for name in ("trace_seed0.csv", "trace_seed1.csv", "trace_seed2.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_adding_seeds_keeps_existing_ones(tmp_path):
    run_experiment(_cfg(tmp_path, output=str(tmp_path / "a"), seeds=[0, 1]))
    run_experiment(_cfg(tmp_path, output=str(tmp_path / "b"), seeds=[0, 1, 5]))
    for name in ("trace_seed0.csv", "trace_seed1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_golden_headers(tmp_path):
    run_experiment(_cfg(tmp_path, seeds=[0]))
    assert (tmp_path / "out" / "trace_seed0.csv").read_text().splitlines()[0] == GOLDEN_DISCRETE
    cont = _cfg(tmp_path, algorithm="sbrd", t_end=1.0, h=0.05, every=5, seeds=[0],
                game={"generate": {"states": 3, "actions": [2, 2, 2], "class": "General"}},
                output=str(tmp_path / "c"))
    run_experiment(cont)
    lines = (tmp_path / "c" / "trace_seed0.csv").read_text().splitlines()
    assert lines[0] == GOLDEN_CONTINUOUS and len(lines) == 5


def test_floats_round_trip_at_full_precision(tmp_path):
    run_experiment(_cfg(tmp_path, seeds=[0]))
    tr = Trace.from_csv(tmp_path / "out" / "trace_seed0.csv")
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert tr.rows[-1][tr.columns.index("u_err")] == summary["seeds"][0]["final"]["u_err"]


def test_validation_errors(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        _cfg(tmp_path, game={"path": str(tmp_path / "missing.json")}).validate()
    with pytest.raises(ConfigError, match="empty"):
        _cfg(tmp_path, seeds=[]).validate()
    with pytest.raises(ConfigError, match="divide"):
        _cfg(tmp_path, every=300).validate()
    with pytest.raises(ConfigError, match="divide"):
        _cfg(tmp_path, algorithm="sbrd", t_end=1.0, h=0.01, every=30).validate()
    with pytest.raises(ConfigError, match="algorithm"):
        _cfg(tmp_path, algorithm="qlearning").validate()
    with pytest.raises(ConfigError):
        _cfg(tmp_path, schedule={"kind": "cosine"}).validate()
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"game": {}, "colour": 1})
    bad = tmp_path / "bad.json"
    bad.write_text("{\"game\": ")
    with pytest.raises(ConfigError, match="line 1"):
        ExperimentConfig.load(bad)
    out = tmp_path / "never"
    with pytest.raises(ConfigError):
        run_experiment(_cfg(tmp_path, game={"path": "nope.json"}, output=str(out)))
    assert not out.exists()


def test_game_file_source_and_thresholds(tmp_path):
    g = random_ergodic_game(2, (3,), GameClass("General"), 0.3, 5, 0.5)
    save(g, tmp_path / "g.json")
    cfg = _cfg(tmp_path, game={"path": str(tmp_path / "g.json")}, algorithm="sfp",
               thresholds={"u_err": 1e-9, "rho_br_max": 1.0})
    report = run_experiment(cfg)
    assert not report.passed
    assert {f["seed"] for f in report.failures} == {0, 1, 2}
    assert all("u_err" in f["reason"] for f in report.failures)
    cfg = _cfg(tmp_path, thresholds={"no_such_metric": 1.0}, seeds=[0])
    assert "not in trace" in run_experiment(cfg).failures[0]["reason"]


def test_seed_errors_do_not_abort_siblings(tmp_path, monkeypatch):
    real = harness.run_seed

    def flaky(cfg, seed):
        if seed == 1:
            raise FloatingPointError("diverged")
        return real(cfg, seed)

    monkeypatch.setattr(harness, "run_seed", flaky)
    report = run_experiment(_cfg(tmp_path))
    assert not report.passed
    assert report.failures == [{"seed": 1, "reason": "FloatingPointError: diverged"}]
    assert sorted(p.name for p in (tmp_path / "out").glob("*.csv")) == ["trace_seed0.csv", "trace_seed2.csv"]


def test_continuous_model_learning_columns(tmp_path):
    cfg = _cfg(tmp_path, algorithm="mbrd", t_end=2.0, h=0.1, every=5, seeds=[0])
    run_experiment(cfg)
    tr = Trace.from_csv(tmp_path / "out" / "trace_seed0.csv")
    assert {"q_err", "r_err", "duality_gap_max", "u_err"} <= set(tr.columns)
    assert np.all(np.diff(tr.column("q_err")) < 0)


def _toy_traces(n_seeds, n_rows):
    traces = {}
    for seed in range(n_seeds):
        t = Trace()
        for k in range(1, n_rows + 1):
            t.append({"step": 100 * k, "duality_gap_max": (seed + 1) / k})
        traces[seed] = t
    return traces


def test_emit_plot_data_long_format():
    table = emit_plot_data(_toy_traces(3, 10), "duality_gap_max")
    assert table.columns == ["step", "seed", "value", "median"]
    assert len(table.rows) == 30
    for step, seed, value, median in table.rows:
        k = step / 100
        assert value == (seed + 1) / k and median == pytest.approx(2 / k)
    single = emit_plot_data(_toy_traces(1, 4), "duality_gap_max")
    assert all(v == m for _, _, v, m in single.rows)
    with pytest.raises(KeyError, match="duality_gap_max"):
        emit_plot_data(_toy_traces(2, 2), "gap")


def test_load_traces_and_plot_csv(tmp_path):
    run_experiment(_cfg(tmp_path))
    traces = load_traces(tmp_path / "out")
    assert list(traces) == [0, 1, 2]
    table = emit_plot_data(traces, "duality_gap_max")
    table.to_csv(tmp_path / "plot.csv")
    lines = (tmp_path / "plot.csv").read_text().splitlines()
    assert lines[0] == "step,seed,value,median" and len(lines) == 31
    with pytest.raises(FileNotFoundError):
        load_traces(tmp_path)
