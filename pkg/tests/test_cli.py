import csv
import io
import json
import math

import pytest

from bbm_lowmax import cli
from bbm_lowmax.rates import RHO, thresholds


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def sweep_csv(capsys, *argv):
    code, out, _ = run(capsys, "sweep", *argv)
    assert code == 0
    return list(csv.DictReader(io.StringIO(out)))


@pytest.mark.parametrize("argv, value, case", [
    (["--theorem", "time", "--alpha", "0", "--gamma", "0.6"], 0.8666667, 3),
    (["--theorem", "unconstrained", "--alpha", "-2"], 5.0, 2),
    (["--theorem", "location_above", "--alpha", "-1", "--gamma", "0.3", "--beta", "-1"], 3.4, 1),
])
def test_eval(capsys, argv, value, case):
    code, out, _ = run(capsys, "eval", *argv)
    assert code == 0
    rep = json.loads(out)
    assert rep["value"] == pytest.approx(value, abs=1e-7)
    assert rep["case"] == case
    assert {"tau_over_t", "y_over_t", "region", "theorem"} <= set(rep)


@pytest.mark.parametrize("argv, needle", [
    (["--theorem", "time_late", "--alpha", "0", "--gamma", "0.4"], "gamma > (1-alpha)/sqrt2"),
    (["--theorem", "time", "--alpha", "1.5", "--gamma", "0.4"], "alpha must be < 1"),
    (["--theorem", "location_below", "--alpha", "0", "--gamma", "0.4", "--beta", "0.5"], "beta >= 1"),
    (["--theorem", "time", "--alpha", "0"], "requires gamma"),
])
def test_eval_domain_errors(capsys, argv, needle):
    code, _, err = run(capsys, "eval", *argv)
    assert code == 2
    assert needle in err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval", "--alpha", "0", "--bogus", "1"])
    assert exc.value.code == 2


@pytest.mark.parametrize("text, expected", [
    ("0:1:0.25", [0.0, 0.25, 0.5, 0.75, 1.0]),
    ("0.1,0.5", [0.1, 0.5]),
    ("1:0:0.1", []),
    ("-3:-2:0.5", [-3.0, -2.5, -2.0]),
])
def test_parse_grid(text, expected):
    assert cli.parse_grid(text) == expected


@pytest.mark.parametrize("text", ["0:1", "0:1:0", "0:1:-0.1"])
def test_parse_grid_errors(text):
    with pytest.raises(cli.UsageError):
        cli.parse_grid(text)


def test_sweep_time_breakpoints(capsys):
    rows = sweep_csv(capsys, "time", "--alpha", "-0.5", "--gamma", "0.01:1:0.01")
    th = thresholds(-0.5, 1.0)
    marks = {r["breakpoint"]: float(r["param"]) for r in rows if r["breakpoint"]}
    # t3 = 1.06 lies past the window, so only t1 and t2 are interior
    assert th.t3 > 1.0
    assert marks == {"t1": th.t1, "t2": th.t2}
    assert len(rows) == 100 + 2
    params = [float(r["param"]) for r in rows]
    assert params == sorted(params)


def test_sweep_location_above_kink(capsys):
    rows = sweep_csv(capsys, "location_above", "--alpha", "-1", "--gamma", "0.3",
                     "--beta", "-3:1:0.01")
    marks = {r["breakpoint"]: float(r["param"]) for r in rows if r["breakpoint"]}
    assert marks == {"child_switch": -1.0 / 1.3}
    cases = {int(r["case"]) for r in rows}
    assert cases == {1, 2}


def test_sweep_location_above_large_gamma(capsys):
    rows = sweep_csv(capsys, "location_above", "--alpha", "-0.3", "--gamma", "0.3",
                     "--beta", "-3:1:0.01")
    marks = {r["breakpoint"]: float(r["param"]) for r in rows if r["breakpoint"]}
    assert marks == {"-rho": -RHO, "beta2": thresholds(-0.3, 0.3).beta2}


def test_sweep_empty_grid(capsys):
    code, out, _ = run(capsys, "sweep", "time", "--alpha", "0", "--gamma", "1:0:0.1")
    assert code == 0
    assert out.strip() == ",".join(cli.SWEEP_FIELDS)


def test_sweep_json(capsys):
    code, out, _ = run(capsys, "sweep", "time_late", "--alpha", "0", "--gamma", "0.75:1:0.05",
                       "--format", "json")
    assert code == 0
    rep = json.loads(out)
    assert rep["axis"] == "gamma"
    assert [r["breakpoint"] for r in rep["rows"]].count("1-alpha") == 1


def test_sweep_needs_one_grid(capsys):
    code, _, err = run(capsys, "sweep", "time", "--alpha", "0", "--gamma", "0.5")
    assert code == 2
    assert "grid" in err


def test_sweep_continuity():
    for th, a, axis, g, b, grid in [
        ("time", -0.5, "gamma", None, None, "0.01:1:0.01"),
        ("location_above", -1.0, "beta", 0.3, None, "-3:1:0.01"),
        ("location_below", 0.5, "beta", 0.8, None, "1:5:0.05"),
    ]:
        theorem = cli.Theorem(th)
        rows = cli.sweep_rows(theorem, a, axis, cli.parse_grid(grid), g, b)
        assert any(r["breakpoint"] for r in rows)
        assert cli.sweep_continuity(theorem, a, axis, rows, g, b) <= 1e-9


def test_output_force_and_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    argv = ["sweep", "time", "--alpha", "0", "--gamma", "0.1:1:0.1", "--out", "s.csv"]
    assert run(capsys, *argv)[0] == 0
    first = (tmp_path / "s.csv").read_text()
    assert first.splitlines()[0] == ",".join(cli.SWEEP_FIELDS)
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "--force" in err
    assert run(capsys, *argv, "--force")[0] == 0
    assert (tmp_path / "s.csv").read_text() == first


def test_plot_script(capsys, tmp_path):
    out = tmp_path / "s.csv"
    script = tmp_path / "plot.py"
    code, _, _ = run(capsys, "sweep", "time", "--alpha", "0", "--gamma", "0.1:1:0.1",
                     "--out", str(out), "--plot-script", str(script))
    assert code == 0
    text = script.read_text()
    assert str(out) in text
    compile(text, str(script), "exec")


def test_verify_identities(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "identities", "--draws", "2000",
                       "--out", str(tmp_path / "id.json"))
    assert code == 0
    rep = json.loads(out)
    assert rep["pass"] and not rep["failures"]
    assert json.loads((tmp_path / "id.json").read_text())["checks"] == rep["checks"]


def test_verify_continuity_flags_failure(capsys):
    code, out, _ = run(capsys, "verify", "continuity", "--draws", "2000")
    rep = json.loads(out)
    assert code == 1
    assert [f["name"] for f in rep["failures"]] == ["psi4(alpha, gamma, 1) == psi1(alpha, gamma)"]


def test_verify_laplace(capsys):
    code, out, _ = run(capsys, "verify", "laplace")
    assert code == 0
    assert all(r["decreasing"] for r in json.loads(out)["results"])


def test_fkpp_slope(capsys, tmp_path):
    code, out, _ = run(capsys, "fkpp-slope", "--alpha", "0,-0.5", "--t", "4:10:2", "--dx", "0.1",
                       "--save", str(tmp_path / "sol.npz"))
    assert code == 0
    rep = json.loads(out)
    assert [f["alpha"] for f in rep["fits"]] == [0.0, -0.5]
    assert (tmp_path / "sol.npz").exists()
    assert all(math.isfinite(f["psi_hat"]) for f in rep["fits"])


def test_fkpp_slope_too_few_times(capsys):
    code, _, err = run(capsys, "fkpp-slope", "--alpha", "0", "--t", "4,6,8")
    assert code == 2
    assert "4 times" in err


def test_fkpp_slope_config_file(capsys, tmp_path):
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("x_min = -40\nx_max = 45\ndx = 0.1\ndt = 0.0025\nt_end = 10\nsnapshot_stride = 40\n")
    code, out, _ = run(capsys, "fkpp-slope", "--alpha", "0", "--t", "4:10:2", "--config", str(cfg))
    assert code == 0
    assert json.loads(out)["dx"] == 0.1


def test_decompose_asymptotic(capsys, tmp_path):
    code, out, _ = run(capsys, "decompose", "--alpha", "0", "--gamma", "0.2", "--mode", "asymptotic",
                       "--t", "100,200,400", "--out", str(tmp_path / "d.csv"))
    assert code == 0
    rep = json.loads(out)
    assert rep["fit"]["psi_hat"] == pytest.approx(rep["target"], rel=0.03)
    rows = list(csv.DictReader(open(tmp_path / "d.csv")))
    assert list(rows[0]) == cli.DECOMP_FIELDS
    assert len(rows) == 3


def test_decompose_exact_small(capsys):
    code, out, _ = run(capsys, "decompose", "--alpha", "0", "--gamma", "0.3", "--mode", "exact",
                       "--t", "4,6,8", "--dx", "0.1")
    assert code == 0
    rep = json.loads(out)
    assert all(r["ln_prob"] < 0 for r in rep["rows"])
    assert "fit" in rep


def test_simulate_deterministic(capsys, tmp_path):
    argv = ["simulate", "--alpha", "0", "--t", "3", "--replicas", "20000", "--seed", "7"]
    code, out1, _ = run(capsys, *argv)
    assert code == 0
    code, out2, _ = run(capsys, *argv, "--csv", str(tmp_path / "r.csv"))
    assert out1 == out2
    rep = json.loads(out1)
    assert rep["hits"] == round(rep["p_hat"] * 20000)
    assert (tmp_path / "r.csv").read_text().count("\n") == 20001


def test_simulate_unconditioned(capsys):
    code, out, _ = run(capsys, "simulate", "--alpha", "inf", "--t", "2", "--replicas", "2000")
    assert code == 0
    rep = json.loads(out)
    assert rep["alpha"] == "inf"
    assert rep["p_hat"] == 1.0


def test_simulate_guard(capsys):
    code, _, err = run(capsys, "simulate", "--alpha", "0", "--t", "20", "--replicas", "10")
    assert code == 2
    assert "max_t" in err
