import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatnull.galerkin import slab_operators
from heatnull.grid import CellField, Field, make_grid
from heatnull.leastsquares import (ControlPair, LSConfig, StepModel, a0_norm, cutoff_profile, directional_derivative,
                                   initialize_cutoff, initialize_linear, line_search, make_pair, minimal_pair,
                                   predicted_k0, recursion_error, residual_floor, solve)
from heatnull.nonlinearity import linear, lipschitz_sin, loglim, saturated_tanh, zero
from heatnull.weights import WeightParams, WeightSet

from oracles import full_dofs, mass_matrix, weighted_half_square


def sine(x):
    return np.sin(np.pi * x)


def setup(n=16, s=2.0):
    g = make_grid(n, n, 0.5, (0.2, 0.8))
    return g, WeightSet(WeightParams(T=0.5, omega=g.omega).with_s(s))


def random_pair(g, ws, gfun, seed, amp=0.3):
    """Linear pair plus smooth perturbations of y (zero at t = 0) and f."""
    rng = np.random.default_rng(seed)
    base, _ = initialize_linear(sine, g, ws, gfun)
    a = rng.normal(size=3) * amp
    dy = Field.interpolate(g, lambda x, t: t * (a[0] * np.sin(np.pi * x) + a[1] * np.sin(2 * np.pi * x)) + 0 * x)
    fd = np.zeros_like(base.f.dofs)
    fd[:, g.omega_x] = a[2] * rng.normal(size=(g.nt, len(g.omega_x)))
    return make_pair(base.y + dy, base.f + CellField(g, fd), gfun, ws)


# energy -----------------------------------------------------------------
def test_energy_of_zero_pair():
    g, ws = setup()
    p = make_pair(Field.zeros(g), CellField.zeros(g), loglim(0, 0.5), ws)
    assert p.E_value == 0.0


def test_energy_of_linear_pair_is_projection_noise():
    g, ws = setup()
    p, _ = initialize_linear(sine, g, ws, zero())
    assert p.E_value <= 1e3 * residual_floor(p, zero(), ws)


@pytest.mark.parametrize("seed", [0, 1])
def test_energy_matches_independent_quadrature(seed):
    g, ws = setup()
    p = random_pair(g, ws, saturated_tanh(2.0), seed)
    rows = full_dofs(g, p.rh)
    assert weighted_half_square(g, ws, rows, g.nq) == pytest.approx(p.E_value, rel=1e-12)
    # a finer rule only changes the integration error of the steep start-up profile of the weight
    assert weighted_half_square(g, ws, rows, 8) == pytest.approx(p.E_value, rel=1e-2)


def test_initial_energy_oracle_lipschitz_sin():
    g, ws = setup()
    gfun = lipschitz_sin(5.0)
    p, sol = initialize_linear(sine, g, ws, gfun)
    # the linear pair solves the scheme, so r_h is the cell projection of g(y0)
    ops = slab_operators(g)
    loads = ops.loads(gfun.g(sol.z.values()))
    rh = np.linalg.solve(mass_matrix(g), loads.T).T / g.dt
    E = weighted_half_square(g, ws, full_dofs(g, rh), g.nq)
    assert E == pytest.approx(p.E_value, rel=1e-10)


@pytest.mark.filterwarnings("ignore:overflow")
def test_energy_error_names_point():
    g, ws = setup()
    y = Field.interpolate(g, lambda x, t: 1e307 * np.sin(np.pi * x) + 0 * t)
    from heatnull.leastsquares import EnergyError
    with pytest.raises(EnergyError, match="x="):
        make_pair(y, CellField.zeros(g), loglim(0, 0.5), ws)


# direction ---------------------------------------------------------------
def test_minimal_pair_of_zero_residual_is_zero():
    g, ws = setup()
    p = make_pair(Field.zeros(g), CellField.zeros(g), loglim(0, 0.5), ws, "A0")
    d = minimal_pair(p, ws, loglim(0, 0.5))
    assert np.all(d.Y.dofs == 0) and np.all(d.F.dofs == 0) and d.norm_A0 == 0


@pytest.mark.parametrize("gfun", [saturated_tanh(2.0), loglim(0.0, 0.5)], ids=lambda g: g.name)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_directional_derivative_is_twice_E(gfun, seed):
    g, ws = setup()
    p = random_pair(g, ws, gfun, seed)
    d = minimal_pair(p, ws, gfun)
    assert directional_derivative(p, d, gfun, ws, 1e-4) == pytest.approx(2 * p.E_value, rel=1e-3)


def test_direction_norm_bounded_by_sqrtE_under_refinement():
    ratios = []
    for n in (16, 32):
        g, ws = setup(n)
        gfun = saturated_tanh(2.0)
        p = random_pair(g, ws, gfun, 0)
        ratios.append(minimal_pair(p, ws, gfun).norm_A0 / p.sqrtE)
    assert max(ratios) / min(ratios) < 2.0


def test_a0_norm_positive_homogeneous():
    g, ws = setup()
    p = random_pair(g, ws, saturated_tanh(2.0), 0)
    d = minimal_pair(p, ws, saturated_tanh(2.0))
    assert a0_norm(d.Y * 3.0, d.F * 3.0, ws) == pytest.approx(3 * d.norm_A0, rel=1e-12)


# line search ---------------------------------------------------------------
def test_line_search_linear_g_takes_unit_step():
    g, ws = setup()
    gfun = linear(-1.0)
    p = random_pair(g, ws, gfun, 0)
    d = minimal_pair(p, ws, gfun)
    model = StepModel(p, d, gfun, ws)
    lam = line_search(model)
    assert lam == pytest.approx(1.0, abs=1e-4)
    for mu in (0.0, 0.3, 1.7):
        assert model(mu) == pytest.approx((1 - mu) ** 2 * p.E_value, rel=1e-9, abs=1e-12 * p.E_value)


def test_line_search_never_worse_than_zero_or_one():
    g, ws = setup()
    gfun = loglim(0.0, 0.5)
    p = random_pair(g, ws, gfun, 3, amp=3.0)
    model = StepModel(p, minimal_pair(p, ws, gfun), gfun, ws)
    lam = line_search(model, m=2.0)
    assert 0 <= lam <= 2
    assert model(lam) <= model(1.0) and model(lam) <= model(0.0)


class _Quadratic:
    """Stand-in step model with a known minimizer."""

    def __init__(self, c):
        self.c, self.evals = c, 0

    def __call__(self, lam):
        self.evals += 1
        return (lam - self.c) ** 2 + 1.0


@given(st.floats(0.0, 2.0))
def test_line_search_locates_minimizer(c):
    lam = line_search(_Quadratic(c), m=2.0, tol=1e-6)
    assert abs(lam - c) < 1e-4 or (_Quadratic(c)(lam) <= _Quadratic(c)(c) + 1e-8)


def test_recursion_matches_direct_evaluation():
    g, ws = setup()
    gfun = loglim(0.0, 0.5)
    p = random_pair(g, ws, gfun, 1, amp=2.0)
    d = minimal_pair(p, ws, gfun)
    model = StepModel(p, d, gfun, ws)
    for lam in (0.25, 1.0, 1.5):
        direct = make_pair(p.y - d.Y * lam, p.f - d.F * lam, gfun, ws)
        assert recursion_error(model, lam, direct) <= 1e-8
        assert model(lam) == pytest.approx(direct.E_value, rel=1e-6, abs=1e-14 * p.E_value)


# initializations ----------------------------------------------------------
def test_initialize_linear_zero_datum():
    g, ws = setup()
    p, _ = initialize_linear(None, g, ws, loglim(0, 0.5))
    assert p.E_value == 0 and np.all(p.y.dofs == 0)


def test_cutoff_profile_and_pair():
    T = 0.5
    t = np.linspace(0, T, 101)
    c = cutoff_profile(t, T)
    assert c[0] == 1.0 and np.all(c[t >= T / 2] == 0.0)
    assert np.all(np.diff(c) <= 0)
    g, ws = setup()
    p = initialize_cutoff(sine, g, ws, zero())
    nodal = p.y.nodal_values()
    assert np.allclose(nodal[0], sine(g.x_nodes), atol=1e-12)
    assert np.all(nodal[g.t_nodes >= T / 2] == 0.0)
    assert np.all(p.f.dofs == 0)
    assert initialize_cutoff(None, g, ws, zero()).E_value == 0


# k0 -------------------------------------------------------------------------
@pytest.mark.parametrize("c2sqrtE0,expected", [(0.3, 1), (0.5, 1), (1.0, 3), (2.5, 9)])
def test_predicted_k0_p1(c2sqrtE0, expected):
    assert predicted_k0(c2sqrtE0**2, 1.0, 1.0) == expected


def test_predicted_k0_rejects_p0():
    with pytest.raises(ValueError):
        predicted_k0(1.0, 1.0, 0.0)


# full iteration ---------------------------------------------------------------
def test_zero_nonlinearity_converges_immediately():
    g, _ = setup()
    res = solve(LSConfig(), zero(), sine, g)
    assert res.converged and res.iterations == 0


@pytest.mark.parametrize("gfun,amp", [(loglim(0.0, 0.5), 5.0), (saturated_tanh(3.0), 3.0),
                                      (lipschitz_sin(5.0), 2.0)], ids=lambda v: getattr(v, "name", str(v)))
def test_solve_monotone_and_update_algebra(gfun, amp):
    g, _ = setup()
    u0 = lambda x: amp * sine(x)
    res = solve(LSConfig(tolE=0.0), gfun, u0, g)
    E = [r.E for r in res.phase_records()]
    assert all(b <= a for a, b in zip(E, E[1:]))
    assert res.converged
    assert res.max_recursion_error <= 1e-8 or res.iterations >= 1
    # the pair is y0 - sum lambda_j Y_j: its initial level is still u0
    y0 = res.initial.y.dofs[0]
    assert np.allclose(res.pair.y.dofs[0], y0, rtol=0, atol=1e-10 * np.abs(y0).max())


def test_update_algebra_series():
    g, ws = setup()
    gfun = loglim(0.0, 0.5)
    p0 = random_pair(g, ws, gfun, 4, amp=2.0)
    pair, Ys, Fs, lams = p0, [], [], []
    for _ in range(3):
        d = minimal_pair(pair, ws, gfun)
        lam = line_search(StepModel(pair, d, gfun, ws))
        pair = make_pair(pair.y - d.Y * lam, pair.f - d.F * lam, gfun, ws)
        Ys.append(d.Y)
        Fs.append(d.F)
        lams.append(lam)
        if pair.E_value == 0:
            break
    y = p0.y.dofs - sum(l * Y.dofs for l, Y in zip(lams, Ys))
    f = p0.f.dofs - sum(l * F.dofs for l, F in zip(lams, Fs))
    assert np.allclose(y, pair.y.dofs, rtol=0, atol=1e-10 * np.abs(pair.y.dofs).max())
    assert np.allclose(f, pair.f.dofs, rtol=0, atol=1e-10 * max(np.abs(pair.f.dofs).max(), 1e-300))


def test_config_validation():
    for kw in (dict(m=0.5), dict(s_growth=1.0), dict(max_iter=-1)):
        with pytest.raises(ValueError):
            LSConfig(**kw)


def test_restart_raises_s_to_required_value():
    g, _ = setup()
    res = solve(LSConfig(max_restarts=2), loglim(0.0, 0.5), lambda x: 200 * sine(x), g)
    assert res.converged
    if res.restarts:
        assert res.s > 1.0 and res.phases[0]["reason"]
