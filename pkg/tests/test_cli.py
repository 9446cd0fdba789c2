import json
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from smoothfp import game as gm
from smoothfp.cli import main

DATA = resources.files("smoothfp") / "data"


def fixture_path(name):
    return str(DATA / f"{name}.json")


def test_help_for_every_subcommand(capsys):
    assert main(["--help"]) == 0
    for cmd in ("check-game", "gen-game", "solve-oracle", "run", "plot-data"):
        assert main([cmd, "--help"]) == 0
        assert "usage" in capsys.readouterr().out


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "smoothfp.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "check-game" in out.stdout


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["check-game"]) == 2
    assert main(["check-game", "--game", fixture_path("matching_pennies"), "--bogus"]) == 2
    assert main(["frobnicate"]) == 2


def test_check_game_zero_sum_fixture(capsys):
    assert main(["check-game", "--game", fixture_path("three_state_zero_sum")]) == 0
    out = capsys.readouterr().out
    assert "ZeroSum" in out and "ergodic: certified T=1" in out


def test_check_game_periodic_chain(capsys):
    assert main(["check-game", "--game", fixture_path("swap_chain")]) == 0
    assert "ergodic: not certified" in capsys.readouterr().out


def test_check_game_malformed_and_invalid(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check-game", "--game", str(bad)]) == 2
    assert main(["check-game", "--game", str(tmp_path / "absent.json")]) == 2
    # parseable but violates an invariant: a transition row that does not sum to 1
    obj = json.loads(open(fixture_path("matching_pennies")).read())
    obj["transitions"][0][0] = [0.5]
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(obj))
    assert main(["check-game", "--game", str(broken)]) == 1
    assert "transition_row_sum" in capsys.readouterr().out


def test_gen_game_deterministic_and_valid(tmp_path, capsys):
    args = ["gen-game", "--states", "3", "--actions", "2", "3", "--class", "ZeroSum",
            "--mixing", "0.3", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    g = gm.load(tmp_path / "a.json")
    assert g.action_counts == (2, 3) and gm.classify(g).tag == "ZeroSum"
    assert main(["check-game", "--game", str(tmp_path / "a.json")]) == 0
    assert "certified T=1" in capsys.readouterr().out
    team = ["gen-game", "--states", "2", "--players", "3", "--actions", "2", "--class", "Team",
            "--constants", "0", "1", "2", "--out", str(tmp_path / "t.json")]
    assert main(team) == 0
    assert gm.classify(gm.load(tmp_path / "t.json")).constants == pytest.approx((0.0, 1.0, 2.0))


def test_gen_game_usage_errors(tmp_path):
    out = str(tmp_path / "x.json")
    assert main(["gen-game", "--states", "2", "--actions", "2", "--class", "Cooperative", "--out", out]) == 2
    assert main(["gen-game", "--states", "2", "--actions", "2", "2", "2", "--out", out]) == 2
    assert main(["gen-game", "--states", "2", "--actions", "2", "--mixing", "0", "--out", out]) == 1


def test_solve_oracle_matching_pennies(tmp_path):
    out = tmp_path / "mp.json"
    assert main(["solve-oracle", "--game", fixture_path("matching_pennies"), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert abs(res["u"][0]) <= 1e-9 and res["residual"] <= 1e-9
    assert np.allclose(res["x"][0], 0.5) and max(res["rho_br"]) <= 1e-8


def test_solve_oracle_single_player(capsys):
    args = ["solve-oracle", "--game", fixture_path("single_player_logit"), "--beta", "1"]
    assert main(args) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["u"][0] == pytest.approx(np.log(1 + np.e), abs=1e-9)
    assert res["x"][0][0] == pytest.approx([0.7311, 0.2689], abs=1e-4)


def test_solve_oracle_unsupported_class(tmp_path, capsys):
    path = str(tmp_path / "ii.json")
    assert main(["gen-game", "--states", "2", "--actions", "2", "--class", "IdenticalInterest",
                 "--out", path]) == 0
    assert main(["solve-oracle", "--game", path]) == 1
    assert "equilibrium_residuals" in capsys.readouterr().err
    assert main(["solve-oracle", "--game", path, "--regularizer", "nope"]) == 2


def _write_config(tmp_path, **over):
    cfg = {"game": {"path": fixture_path("three_state_zero_sum")}, "algorithm": "sfp",
           "steps": 1000, "every": 100, "seeds": [0, 1, 2], "output": str(tmp_path / "out")}
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_and_plot_data(tmp_path, capsys):
    cfg = _write_config(tmp_path, thresholds={"rho_br_max": 1.0})
    assert main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    assert len(list(out.glob("trace_seed*.csv"))) == 3 and (out / "summary.json").is_file()
    first = (out / "trace_seed0.csv").read_bytes()
    assert main(["run", "--config", cfg]) == 0
    assert (out / "trace_seed0.csv").read_bytes() == first
    assert main(["plot-data", "--dir", str(out), "--metric", "duality_gap_max",
                 "--out", str(tmp_path / "p.csv")]) == 0
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 31
    capsys.readouterr()
    assert main(["plot-data", "--dir", str(out), "--metric", "u_err"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "step,seed,value,median"
    assert main(["plot-data", "--dir", str(out), "--metric", "nonsense"]) == 2
    assert "duality_gap_max" in capsys.readouterr().err
    assert main(["plot-data", "--dir", str(tmp_path), "--metric", "u_err"]) == 2


def test_run_threshold_failure_and_output_override(tmp_path, capsys):
    cfg = _write_config(tmp_path, thresholds={"u_err": 1e-12}, seeds=[0])
    assert main(["run", "--config", cfg, "--output", str(tmp_path / "other")]) == 1
    assert (tmp_path / "other" / "trace_seed0.csv").is_file()
    assert "u_err" in capsys.readouterr().out


def test_run_config_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == 2
    cfg = _write_config(tmp_path, game={"path": str(tmp_path / "missing.json")})
    assert main(["run", "--config", cfg]) == 2
    assert not (tmp_path / "out").exists()
