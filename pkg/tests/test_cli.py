import json
import math

import numpy as np
import pytest

from contin_assort.cli import main


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ") and "config_hash=" in lines[0]
    return lines[1], [l.split(",") for l in lines[2:]]


def _solution(out):
    header, rows = _rows(out / "solution.csv")
    assert header == "kind,lo,hi,value"
    rho = float(next(r[3] for r in rows if r[0] == "rho_star"))
    ivs = [(float(r[1]), float(r[2])) for r in rows if r[0] == "interval"]
    return rho, ivs


def test_solve_bimodal(tmp_path):
    assert main(["solve", "--capacity", "0.5", "--out", str(tmp_path), "--curve", "21"]) == 0
    rho, ivs = _solution(tmp_path)
    assert rho == pytest.approx(0.19, abs=0.005)
    assert len(ivs) == 2
    curve = np.loadtxt(tmp_path / "inner_curve.dat")
    assert curve.shape == (21, 2) and np.all(np.diff(curve[:, 1]) <= 1e-12)


def test_solve_grid_csv(tmp_path):
    grid = tmp_path / "v.csv"
    grid.write_text("x,v\n0,1\n1,1\n")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 1, "instance": {"name": "grid", "path": str(grid)}}))
    assert main(["solve", "--config", str(cfg), "--capacity", "1", "--out", str(tmp_path / "o")]) == 0
    rho, _ = _solution(tmp_path / "o")
    assert rho == pytest.approx(2 - math.sqrt(3), abs=1e-5)


def test_solve_zero_capacity(tmp_path):
    assert main(["solve", "--capacity", "0", "--out", str(tmp_path)]) == 0
    rho, ivs = _solution(tmp_path)
    assert rho == 0.0 and ivs == []


def test_solve_roundtrip(tmp_path):
    assert main(["solve", "--capacity", "0.5", "--out", str(tmp_path / "a")]) == 0
    rho_a, _ = _solution(tmp_path / "a")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": {"name": "grid", "path": str(tmp_path / "a" / "preference.csv")}}))
    assert main(["solve", "--config", str(cfg), "--capacity", "0.5", "--out", str(tmp_path / "b")]) == 0
    rho_b, _ = _solution(tmp_path / "b")
    assert rho_b == pytest.approx(rho_a, abs=1e-6)


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--policy", "SAP", "--reps", "2", "--horizon", "100", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "regret.csv").read_bytes()
    assert a == (tmp_path / "b" / "regret.csv").read_bytes()
    header, rows = _rows(tmp_path / "a" / "regret.csv")
    assert header == "T,mean_regret,stderr,reps" and len(rows) == 1
    dat = np.loadtxt(tmp_path / "a" / "regret.dat")
    assert dat.shape == (2,)


def test_simulate_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 1, "instance": {"name": "bimodal", "c": 0.5},
                               "policy": {"name": "KDEP"}, "horizons": [50, 100], "reps": 2, "seed": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    _, rows = _rows(tmp_path / "regret.csv")
    assert [int(r[0]) for r in rows] == [50, 100]


def _purchases(tmp_path, n=10_000, seed=0):
    x = np.random.default_rng(seed).random(n)
    path = tmp_path / "data.csv"
    np.savetxt(path, x, header="x", comments="")
    return path


def _estimate(out):
    _, rows = _rows(out / "estimate.csv")
    return float(rows[0][2]), float(rows[0][4])


def test_estimate_recovers_mass(tmp_path):
    data = _purchases(tmp_path)
    assert main(["estimate", "--data", str(data), "--p", "0.5", "--out", str(tmp_path / "o")]) == 0
    v = np.loadtxt(tmp_path / "o" / "vhat.csv", delimiter=",", skiprows=2)
    assert np.trapezoid(v[:, 1], v[:, 0]) == pytest.approx(1.0, abs=0.1)


def test_estimate_threshold_decreases_in_p(tmp_path):
    data = _purchases(tmp_path)
    th = []
    for p in (0.5, 0.6, 0.7, 0.8, 0.9):
        out = tmp_path / f"p{p}"
        assert main(["estimate", "--data", str(data), "--p", str(p), "--out", str(out)]) == 0
        th.append(_estimate(out)[0])
    assert all(a > b for a, b in zip(th, th[1:]))


def test_estimate_scale_max(tmp_path):
    path = tmp_path / "raw.csv"
    np.savetxt(path, 200 * np.random.default_rng(2).random(500))
    assert main(["estimate", "--data", str(path), "--p", "0.6", "--scale-max", "200", "--out", str(tmp_path)]) == 0
    assert main(["estimate", "--data", str(path), "--p", "0.6", "--out", str(tmp_path)]) == 3


def test_estimate_single_row(tmp_path, capsys):
    path = tmp_path / "one.csv"
    path.write_text("0.4\n")
    assert main(["estimate", "--data", str(path), "--p", "0.5", "--out", str(tmp_path)]) == 0
    assert "warning" in capsys.readouterr().err


def test_lowerbound(tmp_path):
    assert main(["lowerbound", "--capacity", "0.25", "--K", "2", "--bins", "1,3", "--out", str(tmp_path)]) == 0
    header, rows = _rows(tmp_path / "v_I.csv")
    assert header == "x,v0,v_I,eps_I,in_bump"
    data = np.array(rows, dtype=float)
    outside = data[:, 4] == 0
    assert np.all(data[outside, 3] <= 1e-15)
    params = dict(r for r in _rows(tmp_path / "params.csv")[1])
    assert float(params["s"]) == pytest.approx(0.2)
    assert main(["lowerbound", "--capacity", "0.25", "--K", "2", "--bins", "1,9", "--out", str(tmp_path)]) == 2


def test_fit(tmp_path):
    T = np.arange(1000, 10_001, 1000)
    path = tmp_path / "regret.csv"
    with open(path, "w") as fh:
        fh.write("# config_hash=x\nT,mean_regret,stderr,reps\n")
        for t in T:
            fh.write(f"{t},{0.026 * math.log(t)!r},0.0,100\n")
    assert main(["fit", "--data", str(path), "--model", "LOG", "--out", str(tmp_path)]) == 0
    _, rows = _rows(tmp_path / "fit.csv")
    assert float(rows[0][1]) == pytest.approx(0.026, abs=1e-9)
    resid = np.loadtxt(tmp_path / "residuals.dat")
    assert resid.shape == (10, 2)


def test_exit_codes(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"schema_version": 7}))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--reps", "0", "--out", str(tmp_path)]) == 2
    assert main(["bogus"]) == 2
    assert main(["estimate", "--data", str(tmp_path / "none.csv"), "--p", "0.5", "--out", str(tmp_path)]) == 3
    assert main(["estimate", "--data", str(tmp_path / "none.csv"), "--p", "1.5", "--out", str(tmp_path)]) == 3
    one = tmp_path / "r.csv"
    one.write_text("T,mean_regret,stderr,reps\n100,1.0,0.0,2\n")
    assert main(["fit", "--data", str(one), "--out", str(tmp_path)]) == 3
