import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hjmlin.cli import ConfigError, ScenarioConfig, load_config, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def cfg(name):
    return str(CONFIGS / f"{name}.json")


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0][2:])
    cols = lines[1].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return header, dict(zip(cols, rows.T))


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


def test_simulate_byte_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg("gaussian"), "--set", "x_max=0.25", "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg("gaussian"), "--set", "x_max=0.25", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads(Path(str(a) + ".meta.json").read_text())
    assert meta["seed"] == 20240601 and len(meta["config_hash"]) == 64
    assert main(["simulate", "--config", cfg("gaussian"), "--set", "x_max=0.25", "--seed", "1",
                 "--out", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()
    capsys.readouterr()


def test_simulate_transport_matches_shifted_curve(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", cfg("transport"), "--out", str(out)]) == 0
    header, col = read_csv(out)
    c = load_config(cfg("transport")).initial_curve
    assert col["r"] == pytest.approx(c(col["t"] + col["x"]), abs=1e-15)
    assert header["regime"] == "standard_wiener"
    assert not col["blown_up"].any()
    capsys.readouterr()


def test_simulate_blowup_config_marks_rows(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", cfg("gaussian_blowup"), "--set", "x_max=0.25",
                 "--out", str(out)]) == 0
    header, col = read_csv(out)
    blown = col["blown_up"] == 1
    assert blown.any() and (~blown).any()
    assert np.isnan(col["r"][blown]).all() and np.isfinite(col["r"][~blown]).all()
    assert "inf" in header["tau_curve"]
    capsys.readouterr()


def test_price(capsys):
    code, res = run_json(capsys, ["price", "--config", cfg("transport"), "--t", "0.25", "--x", "0"])
    assert code == 0 and res["price"] == 1.0
    code, res = run_json(capsys, ["price", "--config", cfg("transport"), "--t", "0.25", "--x", "0.5"])
    c = load_config(cfg("transport")).initial_curve
    assert code == 0
    assert res["price"] == pytest.approx(math.exp(-c.antiderivative(0.25, 0.75)), rel=1e-14)
    code, res = run_json(capsys, ["price", "--config", cfg("gaussian_blowup"), "--t", "0.5", "--x", "0.5"])
    assert code == 3 and res["price"] is None


def test_flow_to_stdout(capsys):
    assert main(["flow", "--config", cfg("gaussian"), "--x0", "0.5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    header = json.loads(lines[0][2:])
    assert header["x0"] == 0.5
    first = lines[2].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 0.5 and float(first[2]) == 1.0


def test_flow_zero_noise_blowup_time(tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, res = run_json(capsys, ["flow", "--config", cfg("gaussian"), "--set", "zero_noise=true",
                                  "--set", "horizon=2", "--x0", "2", "--out", str(out)])
    assert code == 0 and res["tau"] == pytest.approx(2 * math.log(2), abs=1e-12)
    assert res["Y_final"] is None


def test_poisson_flow_before_first_jump(tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["flow", "--config", cfg("poisson"), "--x0", "0.3", "--out", str(out)]) == 0
    capsys.readouterr()
    c = load_config(cfg("poisson"))
    first = c.path().jump_times[0] if len(c.path().jump_times) else math.inf
    _, col = read_csv(out)
    before = col["t"] < first
    assert col["Y"][before] == pytest.approx(np.log(np.exp(0.3) + col["t"][before]), abs=1e-14)


def test_blowup_json(capsys):
    code, res = run_json(capsys, ["blowup", "--config", cfg("gaussian_blowup"), "--set", "n_paths=200",
                                  "--K", "100", "--t", "0.5", "--S", "1"])
    assert code == 0
    assert res["prob"] == 1.0 and res["n_paths"] == 200
    assert {"ci", "lower_bound", "seed", "config_hash"} <= set(res)


def test_verify_exit_codes(capsys):
    assert main(["verify", "--config", cfg("transport"), "--checks", ""]) == 2
    capsys.readouterr()
    code, res = run_json(capsys, ["verify", "--config", cfg("transport"), "--checks",
                                  "strong_solution,primitive_equation,flow_sde,derivative_formula,drift_identity"])
    assert code == 0 and res["passed"]
    assert [c["check"] for c in res["checks"]][:2] == ["strong_solution", "primitive_equation"]
    code, res = run_json(capsys, ["verify", "--config", cfg("transport"), "--checks", "strong_solution_corrupted"])
    assert code == 1 and not res["passed"]
    assert main(["verify", "--config", cfg("transport"), "--checks", "bogus"]) == 2


def test_verify_poisson_equivalence(capsys):
    code, res = run_json(capsys, ["verify", "--config", cfg("poisson"), "--checks", "poisson_equivalence"])
    assert code == 0 and res["checks"][0]["max_abs"] <= 1e-12


@pytest.mark.parametrize("override,field", [
    ("g.values=[1.0,2.0]", "config.g"),
    ("initial_curve.values=[-1.0]", "config.initial_curve"),
    ("noise.type=cauchy", "config.noise"),
    ("grid_step=-1", "config.grid_step"),
])
def test_config_errors_name_the_field(capsys, override, field):
    assert main(["flow", "--config", cfg("gaussian"), "--set", override, "--x0", "1"]) == 2
    assert field in capsys.readouterr().err


def test_config_guards():
    raw = json.loads(Path(cfg("alpha")).read_text())
    raw["g"]["values"] = [2.0]
    with pytest.raises(ConfigError, match="config.g"):
        ScenarioConfig.from_dict(raw)
    raw = json.loads(Path(cfg("jump_martingale")).read_text())
    raw["g"]["values"] = [-1.0]
    with pytest.raises(ConfigError, match="config.g"):
        ScenarioConfig.from_dict(raw)
    with pytest.raises(ConfigError, match="config.horizon"):
        ScenarioConfig.from_dict({k: v for k, v in raw.items() if k != "horizon"})


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hjmlin", "price", "--config", cfg("transport"),
                           "--t", "0", "--x", "1"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["price"] == pytest.approx(math.exp(-0.03), rel=1e-14)
