"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict in RESULTS; conftest prints them at the
end of the session (run directly with python to print them without pytest).
"""
import math
import time

import numpy as np
import pytest

from heatnull import scenario as scn
from heatnull.cli import execute
from heatnull.diagnostics import fit_c1, observed_onset, order_estimate
from heatnull.grid import make_grid
from heatnull.leastsquares import (LSConfig, directional_derivative, initialize_linear, make_pair, minimal_pair,
                                   predicted_k0, solve)
from heatnull.linear_control import (LinearControlProblem, random_test_field, reconstruct, solve_adjoint,
                                     transposition_residual, verify_optimality)
from heatnull.nonlinearity import lipschitz_sin, loglim
from heatnull.weights import WeightParams, WeightSet

from test_leastsquares import random_pair

RESULTS: dict[int, str] = {}
OMEGA = (0.2, 0.8)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def sine(amp=1.0):
    return lambda x: amp * np.sin(np.pi * np.asarray(x, dtype=float))


def u0_norm(amp=1.0):
    return amp * math.sqrt(0.5)


def ls_scenario(g, amp, n=32, tolE=None, s_init=1.0, method="leastsquares"):
    sc = scn.Scenario(name="acceptance", solver=method)
    sc.grid = scn.GridSpec(nx=n, nt=n, T=0.5, omega=OMEGA)
    sc.nonlinearity = scn.NonlinearityCfg(g=g)
    sc.u0 = scn.U0Spec(preset="sine", amplitude=amp)
    sc.solver_options = scn.SolverSpec(tolE=tolE, s_init=s_init)
    return sc


_RUNS: dict = {}


def run(g, amp, n=32, tolE=None, s_init=1.0):
    key = (g, amp, n, tolE, s_init)
    if key not in _RUNS:
        grid = make_grid(n, n, 0.5, OMEGA)
        spec = scn.Scenario(nonlinearity=scn.NonlinearityCfg(g=g)).build_nonlinearity()
        _RUNS[key] = (solve(LSConfig(tolE=tolE, s_init=s_init), spec, sine(amp), grid), spec)
    return _RUNS[key]


def pre_floor(res):
    """(E trace, lambdas of steps that started above the floor) of the final phase."""
    recs = res.phase_records()
    E = [r.E for r in recs]
    lam = [r.lam for r, e in zip(recs[1:], E) if e > res.floor]
    return E, lam


# 1 -----------------------------------------------------------------------
def test_criterion_1_weight_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst, strict = 0.0, True
    for s in (1.0, 10.0):
        ws = WeightSet(WeightParams.textbook(T=0.5, omega=OMEGA).with_s(s))
        x, t = rng.uniform(0, 1, 10_000), rng.uniform(0, 0.5, 10_000)
        phi, xi, lr, lr0, lr1 = ws.phi_xi_rho(x, t)
        # identities in log space against an independent evaluation of xi
        lxi = np.log(ws.theta(t)) + ws.lam * (ws.psi_tilde(x) + 6)
        worst = max(worst, np.max(np.abs(lr0 - (lr - 1.5 * lxi)) / np.abs(lr0)),
                    np.max(np.abs(lr1 - (lr - lxi)) / np.abs(lr1)))
        strict &= bool(np.all(lr0 > 0) and np.all(lr0 <= lr1) and np.all(lr1 <= lr)
                       and np.all(lr0 >= 1.5 * s) and np.all(phi >= 1.5 * xi))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-12 and strict and dt < 1.0,
           f"max identity error {worst:.2e}, inequalities {'hold' if strict else 'violated'}, {dt:.3f} s")


# 2 -----------------------------------------------------------------------
def test_criterion_2_linear_null_control():
    out = {}
    for n in (64, 128):
        grid = make_grid(n, n, 0.5, OMEGA)
        ws = WeightSet(WeightParams(T=0.5, omega=grid.omega))
        pr = LinearControlProblem(grid, ws, None, None, sine())
        out[n] = (pr, reconstruct(pr, solve_adjoint(pr)))
    r64 = out[64][1].terminal_norm / u0_norm()
    r128 = out[128][1].terminal_norm / u0_norm()
    grid = make_grid(32, 32, 0.5, OMEGA)
    ws = WeightSet(WeightParams(T=0.5, omega=grid.omega))
    pr = LinearControlProblem(grid, ws, None, None, sine())
    sol = reconstruct(pr, solve_adjoint(pr))
    rng = np.random.default_rng(1)
    trans = max(transposition_residual(pr, sol, random_test_field(grid, rng)) for _ in range(10))
    opt = verify_optimality(pr, sol, n=10, seed=0)
    ok = r64 <= 1e-3 and r64 >= 3 * r128 and trans <= 1e-8 and all(i > 0 for i in opt.increases)
    record(2, ok, f"ratio 64: {r64:.2e}, 128: {r128:.2e}; transposition {trans:.2e}; "
                  f"min J increase {min(opt.increases):.2e}")


# 3 -----------------------------------------------------------------------
def test_criterion_3_derivative_identity():
    grid = make_grid(32, 32, 0.5, OMEGA)
    ws = WeightSet(WeightParams(T=0.5, omega=grid.omega).with_s(2.0))
    worst = 0.0
    for gfun in (loglim(0.0, 0.5), lipschitz_sin(1.0)):
        for seed in range(5):
            p = random_pair(grid, ws, gfun, seed)
            d = minimal_pair(p, ws, gfun)
            worst = max(worst, abs(directional_derivative(p, d, gfun, ws, 1e-4) / (2 * p.E_value) - 1))
    record(3, worst <= 1e-3, f"max relative error {worst:.2e} over 10 iterates")


# 4 -----------------------------------------------------------------------
MONOTONE_CASES = [("loglim(0,0.5)", 1.0, 0.0), ("loglim(0,0.5)", 1.0, None), ("lipschitz_sin(1)", 2.0, 0.0),
                  ("loglim(0,1)", 100.0, None), ("saturated_tanh(3)", 5.0, 0.0), ("loglim(0,-1)", 20.0, 0.0)]


def test_criterion_4_monotone_decay():
    bad = []
    for g, amp, tol in MONOTONE_CASES:
        res, _ = run(g, amp, tolE=tol)
        for ph in range(res.restarts + 1):
            E = [r.E for r in res.records if r.restart == ph]
            if any(b > a for a, b in zip(E, E[1:])):
                bad.append(f"{g} x{amp} phase {ph}")
    record(4, not bad, f"{len(MONOTONE_CASES)} runs" + (f"; violations: {bad}" if bad else ", E never increases"))


# 5 -----------------------------------------------------------------------
def test_criterion_5_geometric_decay_p0():
    res, spec = run("lipschitz_sin(1)", 2.0, tolE=0.0)
    E, _ = pre_floor(res)
    ratios = [math.sqrt(b / a) for a, b in zip(E, E[1:]) if a > res.floor]
    c1 = []
    for s in (1.0, 1.5):
        r, _ = run("lipschitz_sin(1)", 2.0, tolE=0.0, s_init=s)
        recs = r.phase_records()
        c1.append(fit_c1([x.E for x in recs], [x.lam for x in recs[1:]], 0.0, r.floor))
    ok = bool(ratios) and max(ratios) <= 0.9 and all(map(math.isfinite, c1)) and c1[1] < c1[0]
    record(5, ok, f"max ratio {max(ratios) if ratios else float('nan'):.2e}; c1(s=1) {c1[0]:.3e}, "
                  f"c1(s=1.5) {c1[1]:.3e}")


# 6 -----------------------------------------------------------------------
def test_criterion_6_superlinear_order_p1():
    res, spec = run("loglim(0,0.5)", 1.0, tolE=0.0)
    E, lam = pre_floor(res)
    recs = res.phase_records()
    q = order_estimate(E, res.floor)
    c1 = fit_c1(E, [r.lam for r in recs[1:]], 1.0, res.floor)
    k0 = predicted_k0(E[0], c1, 1.0) if math.isfinite(c1) and c1 > 0 else None
    onset = observed_onset(E, res.floor)
    ok = bool(q) and q[-1] >= 1.8 and k0 is not None and onset is not None and abs(k0 - onset) <= 2
    record(6, ok, f"E trace {['%.2e' % e for e in E]}, floor {res.floor:.1e}; orders {q}; "
                  f"predicted k0 {k0}, observed onset {onset}")


# 7 -----------------------------------------------------------------------
def test_criterion_7_unit_steps():
    res, _ = run("loglim(0,0.5)", 1.0, tolE=0.0)
    _, lam = pre_floor(res)
    last = lam[-5:]
    ok = bool(last) and max(abs(l - 1) for l in last) <= 0.1
    record(7, ok, f"last pre-floor lambdas {last}")


# 8 -----------------------------------------------------------------------
def test_criterion_8_baseline_contrast():
    tried = []
    found = None
    for c in (0.5, 1.0, -1.0):
        for amp in (10.0, 30.0, 100.0, 300.0):
            g = f"loglim(0,{c:g})"
            pic = execute(ls_scenario(g, amp, method="PicardGtilde"))
            ls = execute(ls_scenario(g, amp))
            s = ls.summary
            tried.append(f"{g} x{amp:g}: Picard {pic.summary['status']}")
            if (pic.summary["status"] == "diverged" and ls.exit_code == 0
                    and s["terminal_norm"] <= 1e-3 * s["u0_norm"]):
                found = (g, amp)
                break
        if found:
            break
    record(8, found is not None, f"contrast at {found}" if found else "no divergent Picard run: " + "; ".join(tried))


# 9 -----------------------------------------------------------------------
def test_criterion_9_recursion_consistency():
    worst, steps = 0.0, 0
    for g, amp in (("loglim(0,0.5)", 1.0), ("loglim(0,1)", 100.0), ("lipschitz_sin(1)", 2.0)):
        res, _ = run(g, amp)
        worst = max(worst, res.max_recursion_error)
        steps += sum(1 for r in res.records if r.k > 0)
    record(9, worst <= 1e-8, f"max recursion error {worst:.2e} over {steps} steps")


# 10 ----------------------------------------------------------------------
def _scalars(d, prefix=""):
    out = {}
    for k, v in d.items():
        if k == "timing":
            continue
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_scalars(v, key + "."))
        elif isinstance(v, list):
            for i, x in enumerate(v):
                if isinstance(x, dict):
                    out.update(_scalars(x, f"{key}[{i}]."))
                else:
                    out[f"{key}[{i}]"] = x
        else:
            out[key] = v
    return out


def test_criterion_10_reproducibility():
    sc = ls_scenario("loglim(0,0.5)", 5.0)
    a = _scalars(execute(sc, deterministic=True).summary)
    b = _scalars(execute(sc, deterministic=True).summary)
    diffs = []
    for k in sorted(set(a) | set(b)):
        x, y = a.get(k), b.get(k)
        if isinstance(x, float) and isinstance(y, float):
            if not (x == y or abs(x - y) <= 1e-12 * max(abs(x), abs(y))):
                diffs.append(k)
        elif x != y:
            diffs.append(k)
    record(10, not diffs, f"{len(a)} summary scalars compared" + (f"; differing: {diffs}" if diffs else ""))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
