"""Command-line front end: heatnull run | compare | refine | weights-dump.

Exit codes: 0 converged, 2 divergence or non-convergence classified,
3 configuration error, 4 solver failure.  HEATNULL_THREADS sets the BLAS
thread count; --deterministic forces one thread.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import scenario as scn
from .baselines import run_baseline
from .diagnostics import (convergence_report, markdown_table, pre_floor_lambdas, refinement_study,
                          write_long_csv, write_refinement_table)
from .galerkin import initial_level
from .grid import dump_field_binary, dump_field_csv
from .leastsquares import EnergyError, IterationRecord, initialize_linear, solve
from .linear_control import SolverFailure
from .weights import WeightParams, WeightSet

log = logging.getLogger("heatnull")

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3, 4
THREADS_ENV = "HEATNULL_THREADS"
COMPARE_KEYS = ["method", "iterations", "sqrtE_final", "terminal_norm", "seconds"]


@dataclass
class RunOutcome:
    exit_code: int
    summary: dict
    out_dir: Path | None = None


def _thread_limit(deterministic: bool):
    n = os.environ.get(THREADS_ENV)
    if deterministic:
        return threadpool_limits(1)
    if n:
        try:
            return threadpool_limits(max(1, int(n)))
        except ValueError:
            raise scn.ConfigError(f"{THREADS_ENV} must be an integer, got {n!r}") from None
    return nullcontext()


def _u0_norm(grid, u0) -> float:
    vals = grid.Ex(0)[:, grid.free_x] @ initial_level(grid, u0)
    return float(np.sqrt(np.sum(grid.wx * vals**2)))


def _finite(x):
    """JSON-safe float (NaN and inf become strings)."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return _finite(obj)


def execute(sc: scn.Scenario, out_dir: Path | None = None, deterministic: bool = False) -> RunOutcome:
    """Run one scenario; writes artifacts when out_dir is given."""
    sc.validate()
    grid = sc.build_grid()
    wp = sc.build_weights(grid)
    g = sc.build_nonlinearity()
    u0 = sc.build_u0()
    method = sc.method()
    u0n = _u0_norm(grid, u0)
    t0 = time.perf_counter()
    with _thread_limit(deterministic):
        if method == "leastsquares":
            res = solve(sc.ls_config(), g, u0, grid, wp, init=sc.solver_options.init)
            records = res.phase_records()
            E = [r.E for r in records]
            lam = [r.lam for r in records[1:]]
            rep = convergence_report(E, lam, g.p, res.floor)
            status = res.status
            code = EXIT_OK if res.converged else EXIT_DIVERGED
            summary = {
                "method": method, "status": status, "exit_code": code, "converged": res.converged,
                "iterations": res.iterations, "restarts": res.restarts, "s_final": res.s,
                "E0": res.E0, "E_final": res.pair.E_value, "sqrtE_final": math.sqrt(res.pair.E_value),
                "tolE": res.tolE, "floor": res.floor, "terminal_norm": res.terminal_norm,
                "u0_norm": u0n, "terminal_ratio": res.terminal_norm / u0n if u0n > 0 else 0.0,
                "max_recursion_error": res.max_recursion_error, "fitted_c1": rep.fitted_c1,
                "k0_predicted": rep.k0_predicted, "k0_observed": rep.k0_observed,
                "orders": rep.orders, "final_order": rep.orders[-1] if rep.orders else float("nan"),
                "lambdas": lam, "pre_floor_lambdas": pre_floor_lambdas(E, lam, res.floor),
                "phases": res.phases, "message": res.message,
            }
            start, end = res.initial, res.pair
            all_records = res.records
        else:
            res = run_baseline(method, g, u0, grid, wp, sc.baseline_config())
            code = EXIT_OK if res.converged else EXIT_DIVERGED if res.status in ("diverged", "not_converged") \
                else EXIT_SOLVER
            summary = {
                "method": method, "status": res.status, "exit_code": code, "converged": res.converged,
                "iterations": res.iterations, "restarts": 0, "s_final": res.s,
                "E0": res.E0, "E_final": res.pair.E_value, "sqrtE_final": math.sqrt(res.pair.E_value),
                "tolE": res.tolE, "terminal_norm": res.terminal_norm, "u0_norm": u0n,
                "terminal_ratio": res.terminal_norm / u0n if u0n > 0 else 0.0,
                "classification": res.classification(), "step_norms": res.step_norms, "message": res.message,
            }
            start, end = res.initial, res.pair
            all_records = res.records
    seconds = time.perf_counter() - t0
    ws = WeightSet(wp.with_s(summary["s_final"]))
    summary["smallness_condition"] = {"c": ws.c, "beta": g.beta, "status": "not checkable"}
    summary["nonlinearity"] = g.describe()
    summary["grid"] = grid.summary()
    summary["seed"] = sc.seed
    summary["timing"] = {"seconds": seconds}
    summary = _jsonable(summary)
    if out_dir is not None:
        _write_artifacts(Path(out_dir), sc, summary, all_records, method, start, end)
    return RunOutcome(code, summary, out_dir)


def _write_artifacts(out: Path, sc, summary, records, method, start, end) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.lock").write_text(scn.lock_text(sc))
    with open(out / "iterations.csv", "w") as fh:
        if method == "leastsquares":
            fh.write(IterationRecord.CSV_HEADER + "\n")
            for r in records:
                fh.write(r.csv_row() + "\n")
        else:
            fh.write("method," + IterationRecord.CSV_HEADER + "\n")
            for r in records:
                fh.write(f"{method}," + r.csv_row() + "\n")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if start is not None:
        dump_field_csv(start.y, out / "y_start.csv")
        dump_field_csv(start.f, out / "f_start.csv")
    dump_field_csv(end.y, out / "y_end.csv")
    dump_field_csv(end.f, out / "f_end.csv")
    dump_field_binary(end.y, out / "y_end.bin")
    ks = [r.k for r in records]
    series = {"sqrtE": (ks, [math.sqrt(r.E) if math.isfinite(r.E) else float("nan") for r in records]),
              "y_sup": (ks, [r.y_sup for r in records])}
    if method == "leastsquares":
        series["lambda"] = (ks[1:], [r.lam for r in records[1:]])
        series["order"] = (list(range(1, 1 + len(summary["orders"]))), summary["orders"])
    write_long_csv(out / "trace.csv", series)
    (out / "report.md").write_text(_report_md(summary))


def _report_md(summary: dict) -> str:
    lines = [f"# Run report: {summary['method']}", "", f"status: {summary['status']} "
             f"(exit {summary['exit_code']})", ""]
    rows = [{k: summary.get(k, "") for k in ("iterations", "E0", "sqrtE_final", "terminal_norm", "terminal_ratio",
                                              "s_final")}]
    lines.append(markdown_table(rows))
    if summary["method"] == "leastsquares":
        lines += ["", "## Convergence", "",
                  markdown_table([{k: summary.get(k, "") for k in ("fitted_c1", "k0_predicted", "k0_observed",
                                                                  "final_order", "floor")}])]
    if summary.get("message"):
        lines += ["", f"message: {summary['message']}"]
    return "\n".join(lines) + "\n"


# verbs -------------------------------------------------------------------
def cmd_run(args) -> int:
    sc = scn.load(args.scenario)
    out = sc.output_dir(args.out)
    outcome = execute(sc, out, args.deterministic)
    s = outcome.summary
    print(f"{s['method']}: {s['status']} after {s['iterations']} iteration(s), sqrt E = {s['sqrtE_final']}, "
          f"terminal norm = {s['terminal_norm']}; artifacts in {out}")
    return outcome.exit_code


def load_summary(run_dir) -> dict:
    p = Path(run_dir) / "summary.json"
    if not p.is_file():
        raise scn.ConfigError(f"missing artifacts: {p}")
    return json.loads(p.read_text())


def compare_rows(run_dirs) -> list[dict]:
    if len(run_dirs) < 2:
        raise scn.ConfigError("compare needs at least two completed runs")
    rows = []
    for d in run_dirs:
        s = load_summary(d)
        row = {"run": str(d)}
        for k in COMPARE_KEYS:
            row[k] = s["timing"]["seconds"] if k == "seconds" else s.get(k)
        row["status"] = s.get("status")
        rows.append(row)
    return rows


def cmd_compare(args) -> int:
    rows = compare_rows(args.runs)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        write_refinement_table(rows, out / "comparison.csv", out / "comparison.md")
    print(markdown_table(rows), end="")
    return EXIT_OK


def refine_rows(sc: scn.Scenario, meshes, deterministic: bool = False) -> list[dict]:
    def run_one(n):
        sub = copy.deepcopy(sc)
        sub.grid.nx = sub.grid.nt = int(n)
        o = execute(sub, None, deterministic)
        s = o.summary
        grid = sub.build_grid()
        wp = sub.build_weights(grid)
        ws = WeightSet(wp.with_s(float(s["s_final"])))
        lin = initialize_linear(sub.build_u0(), grid, ws, sub.build_nonlinearity())[1]
        return {"terminal_norm": s["terminal_norm"], "E_floor": s.get("floor", float("nan")),
                "sqrtE_final": s["sqrtE_final"], "iterations": s["iterations"],
                "estimate_ratio": lin.estimate_ratio, "status": s["status"]}
    return refinement_study(run_one, meshes)


def cmd_refine(args) -> int:
    sc = scn.load(args.scenario)
    sc.validate()
    meshes = [int(m) for m in args.meshes.split(",")]
    rows = refine_rows(sc, meshes, args.deterministic)
    out = Path(args.out) if args.out else sc.output_dir() / "refinement"
    out.mkdir(parents=True, exist_ok=True)
    write_refinement_table(rows, out / "refinement.csv", out / "refinement.md")
    print(markdown_table(rows), end="")
    return EXIT_OK


def cmd_weights_dump(args) -> int:
    sc = scn.load(args.scenario)
    sc.validate()
    grid = sc.build_grid()
    wp = sc.build_weights(grid)
    if args.textbook:
        wp = WeightParams.textbook(T=wp.T, omega=wp.omega, lambda0=wp.lambda0, T1=wp.T1, s0=wp.s0, xstar=wp.xstar)
    ws = WeightSet(wp.with_s(args.s if args.s is not None else wp.s0))
    rows = ws.dump_rows(grid)
    out = Path(args.out) if args.out else sc.output_dir() / "weights.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "theta", "phi", "xi", "log_rho", "log_rho0", "log_rho1"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    print(f"{len(rows)} rows written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatnull", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run one scenario and write its artifacts")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", help="output directory (default: the scenario's output key)")
    r.add_argument("--deterministic", action="store_true", help="single-threaded linear algebra")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="tabulate completed runs")
    c.add_argument("runs", nargs="*")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    f = sub.add_parser("refine", help="rerun a scenario on several meshes")
    f.add_argument("--scenario", required=True)
    f.add_argument("--meshes", default="16,32,64")
    f.add_argument("--out")
    f.add_argument("--deterministic", action="store_true")
    f.set_defaults(func=cmd_refine)
    w = sub.add_parser("weights-dump", help="write the weights on the quadrature lattice")
    w.add_argument("--scenario", required=True)
    w.add_argument("--s", type=float)
    w.add_argument("--textbook", action="store_true", help="unscaled, uncapped weights")
    w.add_argument("--out")
    w.set_defaults(func=cmd_weights_dump)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except scn.ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, EnergyError, FloatingPointError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
