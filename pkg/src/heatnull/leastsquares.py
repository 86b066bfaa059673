"""Weighted least-squares (damped Newton) iteration for the semilinear null-control problem.

Iterates are pairs (y, f): y a Field with y(0) = u0 (or 0 for directions) and
f a cell-wise constant control on omega.  The functional is

    E(y, f) = 1/2 |rho0 r_h|^2,

where r_h = M^-1 R_n / dt is the projected residual of the Galerkin scheme for
d_t y - d_xx y + g(y) - f 1_omega.  The direction (Y, F) is the optimal pair of
the linear problem with potential g'(y), source R (the residual loads) and zero
initial datum.  It satisfies the linearized scheme exactly, so along the step

    r_h(lambda) = (1 - lambda) r_h + M^-1 loads(l(lambda)) / dt,
    l(lambda) = g(y - lambda Y) - g(y) + lambda g'(y) Y

holds at the discrete level and the line search only needs g-evaluations.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .galerkin import forward_solve, initial_level, slab_operators
from .grid import CellField, Field, SpaceTimeGrid
from .linear_control import LinearControlProblem, NeedLargerS, SolverFailure, reconstruct, solve_adjoint
from .nonlinearity import NonlinearitySpec
from .weights import WeightParams, WeightSet

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class EnergyError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LSConfig:
    """Settings of the damped Newton iteration (tolE None means 1e-8 (1 + sqrt E0))."""
    m: float = 2.0
    tolE: float | None = None
    max_iter: int = 50
    s_init: float = 1.0
    s_growth: float = 1.5
    max_restarts: int = 5
    M_cap: float = 1e6
    line_search_evals: int = 40
    line_search_tol: float = 1e-4
    stall_limit: int = 2

    def __post_init__(self):
        if not self.m >= 1:
            raise ValueError("line-search cap m must be >= 1")
        if not self.s_growth > 1:
            raise ValueError("s_growth must exceed 1")
        if self.max_iter < 0 or self.max_restarts < 0:
            raise ValueError("iteration limits must be non-negative")


@dataclass
class ControlPair:
    """A state-control pair with its cached projected residual.

    tag is "A" when y(0) = u0 and "A0" when y(0) = 0.
    """
    y: Field
    f: CellField
    R: np.ndarray
    rh: np.ndarray
    r_values: np.ndarray
    E_value: float
    tag: str = "A"

    @property
    def sqrtE(self) -> float:
        return math.sqrt(self.E_value)


def _quad_residual(pair_y: Field, f: CellField, g: NonlinearitySpec) -> tuple[np.ndarray, np.ndarray]:
    grid = pair_y.grid
    yv = pair_y.values()
    gy = g.g(yv)
    if not np.all(np.isfinite(gy)):
        i, j = np.argwhere(~np.isfinite(gy))[0]
        raise EnergyError(f"g(y) is not finite at x={grid.xq[j]:.6g}, t={grid.tq[i]:.6g} (y={yv[i, j]:.6g})")
    return yv, gy - f.values() * grid.chi[None, :]


def weighted_energy(values: np.ndarray, grid: SpaceTimeGrid, log_rho0: np.ndarray) -> float:
    """1/2 int rho0^2 u^2 with the tensor Gauss rule, evaluated in log space."""
    mask = (grid.W > 0) & (values != 0)
    if not mask.any():
        return 0.0
    lw = np.log(grid.W[mask]) + 2 * log_rho0[mask] + 2 * np.log(np.abs(values[mask]))
    lse = logsumexp(lw)
    out = 0.5 * math.exp(lse) if lse < 709 else math.inf
    if not math.isfinite(out):
        raise EnergyError("weighted energy overflows")
    return out


def make_pair(y: Field, f: CellField, g: NonlinearitySpec, ws: WeightSet, tag: str = "A") -> ControlPair:
    grid = y.grid
    ops = slab_operators(grid)
    _, zero_order = _quad_residual(y, f, g)
    R = ops.residual_vectors(y, zero_order)
    rh = ops.project_cells(R)
    rv = ops.cell_values(rh)
    if not np.all(np.isfinite(rv)):
        raise EnergyError("residual is not finite")
    E = weighted_energy(rv, grid, ws.on_grid(grid).log_rho0)
    return ControlPair(y, f, R, rh, rv, E, tag)


def energy(pair: ControlPair, ws: WeightSet, g: NonlinearitySpec) -> float:
    """E recomputed from the pair's fields."""
    return make_pair(pair.y, pair.f, g, ws, pair.tag).E_value


def residual_floor(pair: ControlPair, g: NonlinearitySpec, ws: WeightSet) -> float:
    """E-size of the rounding noise in the residual: eps times the magnitudes of its parts."""
    grid = pair.y.grid
    ops = slab_operators(grid)
    yv = pair.y.values()
    lin = np.abs(ops.K0) @ np.abs(pair.y.free())
    zo = np.asarray(ops.Pt @ ((grid.W * (np.abs(g.g(yv)) + np.abs(pair.f.values()) * grid.chi)) @ np.abs(ops.Exf)))
    mag = ops.cell_values(np.abs(ops.project_cells(lin.reshape(grid.nt, -1) + zo)))
    return weighted_energy(8 * _EPS * mag, grid, ws.on_grid(grid).log_rho0)


@dataclass
class Direction:
    Y: Field
    F: CellField
    norm_A0: float
    solver_residual: float
    A_sup: float


def a0_norm(Y: Field, F: CellField, ws: WeightSet) -> float:
    """sqrt(|rho Y|^2 + |rho0 F|^2_{q_T} + |rho0 (d_t - d_xx) Y|^2), the heat part projected."""
    grid = Y.grid
    qw = ws.on_grid(grid)
    ops = slab_operators(grid)
    heat = ops.cell_values(ops.project_cells((ops.K0 @ Y.free()).reshape(grid.nt, -1)))
    parts = [2 * weighted_energy(Y.values(), grid, qw.log_rho),
             2 * weighted_energy(F.values() * grid.chi[None, :], grid, qw.log_rho0),
             2 * weighted_energy(heat, grid, qw.log_rho0)]
    return math.sqrt(sum(parts))


def minimal_pair(pair: ControlPair, ws: WeightSet, g: NonlinearitySpec) -> Direction:
    """Optimal null-controlled pair of the linearized equation driven by the residual.

    Raises NeedLargerS when s < max(|g'(y)|^(2/3), s0).
    """
    grid = pair.y.grid
    if pair.E_value == 0.0:
        return Direction(Field.zeros(grid), CellField.zeros(grid), 0.0, 0.0, 0.0)
    A = g.gprime(pair.y.values())
    problem = LinearControlProblem(grid, ws, A, pair.R, None, True, B_is_load=True)
    adj = solve_adjoint(problem)
    sol = reconstruct(problem, adj)
    Y, F = sol.z, sol.v
    return Direction(Y, F, a0_norm(Y, F, ws), adj.residual, problem.A_sup)


class StepModel:
    """phi(lambda) = E((y, f) - lambda (Y, F)) through the residual recursion."""

    def __init__(self, pair: ControlPair, d: Direction, g: NonlinearitySpec, ws: WeightSet):
        self.pair, self.d, self.g = pair, d, g
        grid = pair.y.grid
        self.grid = grid
        self.ops = slab_operators(grid)
        self.log_rho0 = ws.on_grid(grid).log_rho0
        self.yv = pair.y.values()
        self.Yv = d.Y.values()
        self.gy = g.g(self.yv)
        self.gpY = g.gprime(self.yv) * self.Yv
        self.evals = 0
        self._cache: dict[float, float] = {}

    def residual(self, lam: float) -> np.ndarray:
        """Quadrature values of r_h(lambda)."""
        ell = self.g.g(self.yv - lam * self.Yv) - self.gy + lam * self.gpY
        corr = self.ops.cell_values(self.ops.project_cells(self.ops.loads(ell)))
        return (1 - lam) * self.pair.r_values + corr

    def __call__(self, lam: float) -> float:
        lam = float(lam)
        if lam not in self._cache:
            self.evals += 1
            self._cache[lam] = weighted_energy(self.residual(lam), self.grid, self.log_rho0)
        return self._cache[lam]


def line_search(model: StepModel, m: float = 2.0, tol: float = 1e-4, max_evals: int = 40) -> float:
    """Minimize phi on [0, m]: golden-section steps with parabolic interpolation, seeded at 1.

    The returned lambda never does worse than lambda = 1 or lambda = 0.
    """
    golden = 0.5 * (3 - math.sqrt(5))
    a, b = 0.0, float(m)
    x = w = v = min(1.0, b)
    fx = fw = fv = model(x)
    d = e = 0.0
    start = model.evals
    while model.evals - start < max_evals - 1:
        mid = 0.5 * (a + b)
        tol1 = tol * 0.5
        if abs(x - mid) <= 2 * tol1 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if u - a < 2 * tol1 or b - u < 2 * tol1:
                    d = tol1 if mid >= x else -tol1
                use_golden = False
        if use_golden:
            e = (a - x) if x >= mid else (b - x)
            d = golden * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d))
        fu = model(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w, fv, fw = w, u, fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    best = min([(fx, x), (model(1.0), 1.0), (model(0.0), 0.0)])
    return best[1]


def initialize_linear(u0, grid: SpaceTimeGrid, ws: WeightSet, g: NonlinearitySpec):
    """Pair of the linear problem (g = 0) null-controlled from u0; returns (pair, linear solution)."""
    problem = LinearControlProblem(grid, ws, None, None, u0, check_s=False)
    sol = reconstruct(problem, solve_adjoint(problem))
    return make_pair(sol.z, sol.v, g, ws), sol


def cutoff_profile(t, T: float) -> np.ndarray:
    """Smooth step equal to 1 at t = 0 and 0 on [T/2, T] (exp(-1/x) blend)."""
    t = np.asarray(t, dtype=float)
    u = np.clip(t / (0.5 * T), 0.0, 1.0)

    def bump(z):
        with np.errstate(divide="ignore"):
            return np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)

    a, b = bump(1 - u), bump(u)
    return a / (a + b)


def initialize_cutoff(u0, grid: SpaceTimeGrid, ws: WeightSet, g: NonlinearitySpec) -> ControlPair:
    """(phi(t) y_free, 0) where y_free is the uncontrolled heat evolution of u0."""
    free = forward_solve(grid, None, None, u0)
    levels = free.dofs * cutoff_profile(grid.t_nodes, grid.T)[:, None]
    return make_pair(Field.from_levels(grid, levels), CellField.zeros(grid), g, ws)


def directional_derivative(pair: ControlPair, d: Direction, g: NonlinearitySpec, ws: WeightSet,
                           eta: float = 1e-4) -> float:
    """Central difference of E along (Y, F)."""
    plus = make_pair(pair.y + d.Y * eta, pair.f + d.F * eta, g, ws)
    minus = make_pair(pair.y - d.Y * eta, pair.f - d.F * eta, g, ws)
    return (plus.E_value - minus.E_value) / (2 * eta)


def predicted_k0(E0: float, c2: float, p: float) -> int:
    """k0 = floor((1+p)/p ((1+p)^(1/p) c2 sqrt(E0) - 1)) + 1, or 1 when the bracket is <= 0."""
    if not 0 < p <= 1:
        raise ValueError("k0 is defined for p in (0, 1]")
    arg = (1 + p) ** (1 / p) * c2 * math.sqrt(E0) - 1
    if arg <= 0:
        return 1
    return int(math.floor((1 + p) / p * arg)) + 1


@dataclass
class IterationRecord:
    k: int
    E: float
    lam: float
    y_sup: float
    s: float
    order_estimate: float
    c1: float
    wall_time: float
    recursion_error: float = 0.0
    restart: int = 0
    direction_norm: float = 0.0

    CSV_HEADER = "k,E,sqrtE,lambda,y_sup,s,order,c1,seconds"

    def csv_row(self) -> str:
        vals = [self.k, self.E, math.sqrt(self.E), self.lam, self.y_sup, self.s, self.order_estimate,
                self.c1, self.wall_time]
        return ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LSResult:
    pair: ControlPair
    initial: ControlPair
    records: list
    converged: bool
    status: str
    restarts: int
    s: float
    E0: float
    tolE: float
    floor: float
    terminal_norm: float
    max_recursion_error: float
    message: str = ""
    phases: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.records if r.restart == self.restarts and r.k > 0)

    def phase_records(self) -> list:
        return [r for r in self.records if r.restart == self.restarts]


def recursion_error(model: StepModel, lam: float, direct: ControlPair) -> float:
    """|rho0 (r_rec - r_direct)| relative to |rho0 r| before the step."""
    grid = model.grid
    diff = model.residual(lam) - direct.r_values
    ref = model.pair.E_value
    if ref == 0:
        return 0.0
    return math.sqrt(weighted_energy(diff, grid, model.log_rho0) / ref)


def _running_diagnostics(records: list, p: float) -> tuple[float, float]:
    from .diagnostics import fit_c1, order_estimate
    E = [r.E for r in records]
    q = order_estimate(E)
    c1 = fit_c1(E, [r.lam for r in records[1:]], p) if len(E) >= 2 else float("nan")
    return (q[-1] if q else float("nan")), c1


def solve(config: LSConfig, g: NonlinearitySpec, u0, grid: SpaceTimeGrid,
          weight_params: WeightParams | None = None, init: str = "linear",
          force_unit_step: bool = False) -> LSResult:
    """Damped Newton iteration with adaptive s.

    A phase runs at fixed s.  The iteration restarts from the initial pair
    with s * s_growth (or the s the linear solver asks for, if larger) when
    |y|_inf exceeds M_cap, when the linear solver reports that s is too small
    for |g'(y)|, or when E stalls above tolerance for stall_limit consecutive
    steps.  force_unit_step gives undamped Newton.
    """
    base = weight_params or WeightParams(T=grid.T, omega=grid.omega)
    s = max(config.s_init, base.s0)
    restarts = 0
    records: list[IterationRecord] = []
    phases = []
    t_start = time.perf_counter()
    while True:
        ws = WeightSet(base.with_s(s))
        pair0 = initialize_linear(u0, grid, ws, g)[0] if init == "linear" else initialize_cutoff(u0, grid, ws, g)
        E0 = pair0.E_value
        tolE = config.tolE if config.tolE is not None else 1e-8 * (1 + math.sqrt(E0))
        floor = max(1e-2 * tolE**2, residual_floor(pair0, g, ws))
        pair = pair0
        phase = [IterationRecord(0, E0, float("nan"), pair0.y.sup_norm(), s, float("nan"), float("nan"),
                                 time.perf_counter() - t_start, 0.0, restarts)]
        records.append(phase[0])
        reason = None
        needed = 0.0
        stalls = 0
        max_rec = 0.0
        for k in range(1, config.max_iter + 1):
            if math.sqrt(pair.E_value) <= tolE or pair.E_value <= floor:
                break
            try:
                d = minimal_pair(pair, ws, g)
            except NeedLargerS as err:
                reason = f"need larger s ({err})"
                needed = err.required
                break
            model = StepModel(pair, d, g, ws)
            lam = 1.0 if force_unit_step else line_search(model, config.m, config.line_search_tol,
                                                          config.line_search_evals)
            new = make_pair(pair.y - d.Y * lam, pair.f - d.F * lam, g, ws)
            if not force_unit_step and new.E_value > pair.E_value:
                # rounding noise beat the model: keep the current pair
                if pair.E_value > 4 * floor:
                    reason = "E stalled above tolerance"
                break
            rec_err = recursion_error(model, lam, new)
            max_rec = max(max_rec, rec_err)
            rec = IterationRecord(k, new.E_value, lam, new.y.sup_norm(), s, float("nan"), float("nan"),
                                  time.perf_counter() - t_start, rec_err, restarts, d.norm_A0)
            phase.append(rec)
            records.append(rec)
            rec.order_estimate, rec.c1 = _running_diagnostics(phase, g.p)
            if not force_unit_step and new.E_value >= pair.E_value * (1 - 1e-12):
                stalls += 1
            else:
                stalls = 0
            pair = new
            floor = max(floor, residual_floor(pair, g, ws))
            if rec.y_sup > config.M_cap:
                reason = f"|y|_inf = {rec.y_sup:.3g} exceeds M_cap"
                break
            if stalls >= config.stall_limit:
                if pair.E_value <= 4 * floor:
                    break
                reason = "E stalled above tolerance"
                break
            if force_unit_step and not math.isfinite(pair.E_value):
                reason = "non-finite energy"
                break
        phases.append({"s": s, "E0": E0, "tolE": tolE, "iterations": len(phase) - 1, "reason": reason})
        converged = reason is None and (math.sqrt(pair.E_value) <= tolE or pair.E_value <= 4 * floor)
        if converged or reason is None:
            status = "converged" if converged else "max_iter"
            return LSResult(pair, pair0, records, converged, status, restarts, s, E0, tolE, floor,
                            pair.y.terminal_l2(), max_rec, "", phases)
        if restarts >= config.max_restarts:
            return LSResult(pair, pair0, records, False, "failed", restarts, s, E0, tolE, floor,
                            pair.y.terminal_l2(), max_rec, reason, phases)
        s_next = max(s * config.s_growth, needed * (1 + 1e-9))
        log.info("restarting with s=%g: %s", s_next, reason)
        restarts += 1
        s = s_next
