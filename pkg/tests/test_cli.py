import json
from pathlib import Path

import pytest

from heatnull import scenario as scn
from heatnull.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, execute, main

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

SMALL = """
name = "small"
method = "{method}"
[grid]
nx = 12
nt = 12
omega = [0.25, 0.75]
[nonlinearity]
g = "{g}"
[u0]
preset = "sine"
amplitude = {amp}
[solver]
M_cap = {mcap}
"""


def write(tmp_path, method="leastsquares", g="loglim(0,0.5)", amp=1.0, mcap=1e6, extra=""):
    p = tmp_path / "s.toml"
    p.write_text(SMALL.format(method=method, g=g, amp=amp, mcap=mcap) + extra)
    return p


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(write(tmp_path)), "--out", str(out)]) == EXIT_OK
    for name in ("scenario.lock", "iterations.csv", "summary.json", "y_end.csv", "f_end.csv", "y_end.bin",
                 "trace.csv", "report.md", "y_start.csv"):
        assert (out / name).is_file(), name
    assert (out / "iterations.csv").read_text().splitlines()[0] == "k,E,sqrtE,lambda,y_sup,s,order,c1,seconds"
    assert (out / "trace.csv").read_text().splitlines()[0] == "series,x,y"
    s = json.loads((out / "summary.json").read_text())
    assert s["converged"] and s["exit_code"] == 0
    assert s["smallness_condition"]["status"] == "not checkable"


def test_shipped_linear_scenario_runs(tmp_path):
    assert main(["run", "--scenario", str(SCEN / "linear.toml"), "--out", str(tmp_path / "lin")]) == EXIT_OK
    assert json.loads((tmp_path / "lin" / "summary.json").read_text())["iterations"] == 0


def test_shipped_picard_big_scenario_diverges(tmp_path):
    out = tmp_path / "pb"
    code = main(["run", "--scenario", str(SCEN / "picard_big.toml"), "--out", str(out)])
    s = json.loads((out / "summary.json").read_text())
    assert code == EXIT_DIVERGED, f"Picard classified {s['status']} after {s['iterations']} step(s)"


def test_compare_linear_g_least_squares_and_newton_rows_agree(tmp_path, capsys):
    a, b = tmp_path / "ls", tmp_path / "nw"
    assert main(["run", "--scenario", str(write(tmp_path, g="linear(-1)")), "--out", str(a)]) == EXIT_OK
    assert main(["run", "--scenario", str(write(tmp_path, method="NewtonUndamped", g="linear(-1)")),
                 "--out", str(b)]) == EXIT_OK
    from heatnull.cli import compare_rows
    ra, rb = compare_rows([a, b])
    assert ra["iterations"] == rb["iterations"] == 1
    assert ra["sqrtE_final"] == pytest.approx(rb["sqrtE_final"], rel=1e-6, abs=1e-14)
    assert ra["terminal_norm"] == pytest.approx(rb["terminal_norm"], rel=1e-9)


@pytest.mark.parametrize("body", ["[grid]\nnx = 8\n", "name = 1\n[grid]\nomega=[0.2,0.8]\n",
                                  "[grid]\nomega = [0.2, 0.8]\nbogus = 1\n",
                                  "[grid]\nomega = [0.2, 0.8]\n[u0]\nexpr = \"1 + x\"\n",
                                  "[grid]\nomega = [0.2, 0.8]\n[nonlinearity]\ng = \"1 + r\"\n",
                                  "method = \"gradient\"\n[grid]\nomega = [0.2, 0.8]\n",
                                  "[grid]\nomega = [0.2, 0.8\n"])
def test_configuration_errors_exit_3(tmp_path, body):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_file_and_bad_args_exit_3(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "nope.toml")]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_divergence_exit_2(tmp_path):
    p = write(tmp_path, method="PicardGtilde", g="loglim(0,1)", amp=50.0, mcap=1.0)
    out = tmp_path / "div"
    assert main(["run", "--scenario", str(p), "--out", str(out)]) == EXIT_DIVERGED
    s = json.loads((out / "summary.json").read_text())
    assert s["classification"]["status"] == "diverged"
    assert (out / "iterations.csv").read_text().startswith("method,k,E,sqrtE")


def test_lock_file_reproduces_run(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", str(write(tmp_path)), "--out", str(out1), "--deterministic"]) == 0
    assert main(["run", "--scenario", str(out1 / "scenario.lock"), "--out", str(out2), "--deterministic"]) == 0
    s1 = json.loads((out1 / "summary.json").read_text())
    s2 = json.loads((out2 / "summary.json").read_text())
    s1.pop("timing"), s2.pop("timing")
    assert s1 == s2
    assert (out1 / "scenario.lock").read_text() == (out2 / "scenario.lock").read_text()


def test_compare(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--scenario", str(write(tmp_path)), "--out", str(a)])
    main(["run", "--scenario", str(write(tmp_path, method="PicardGtilde")), "--out", str(b)])
    capsys.readouterr()
    assert main(["compare", str(a), str(b), "--out", str(tmp_path / "cmp")]) == EXIT_OK
    table = capsys.readouterr().out
    assert "leastsquares" in table and "PicardGtilde" in table
    assert (tmp_path / "cmp" / "comparison.csv").is_file()
    assert main(["compare", str(a)]) == EXIT_CONFIG
    assert main(["compare", str(a), str(tmp_path / "missing")]) == EXIT_CONFIG


def test_weights_dump(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["weights-dump", "--scenario", str(write(tmp_path)), "--s", "3", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "x,t,theta,phi,xi,log_rho,log_rho0,log_rho1"
    assert len(lines) == 1 + 48 * 48


def test_refine(tmp_path):
    out = tmp_path / "ref"
    p = write(tmp_path, g="zero")
    assert main(["refine", "--scenario", str(p), "--meshes", "8,12,16", "--out", str(out)]) == EXIT_OK
    head = (out / "refinement.csv").read_text().splitlines()[0].split(",")
    assert {"n", "h", "terminal_norm", "E_floor", "estimate_ratio", "terminal_ratio"} <= set(head)


def test_execute_summary_scalars(tmp_path):
    sc = scn.load(write(tmp_path))
    o = execute(sc)
    for key in ("E0", "E_final", "terminal_norm", "u0_norm", "fitted_c1", "max_recursion_error", "s_final"):
        assert key in o.summary


def test_threads_env_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("HEATNULL_THREADS", "many")
    assert main(["run", "--scenario", str(write(tmp_path)), "--out", str(tmp_path / "t")]) == EXIT_CONFIG


def test_scenario_roundtrip(tmp_path):
    sc = scn.load(write(tmp_path))
    again = scn.loads(scn.lock_text(sc))
    assert again.to_dict() == sc.to_dict()
    assert sc.grid.omega == (0.25, 0.75)
