"""Weighted null control of d_t z - d_xx z + A z = v 1_omega + B, z(0) = z0, z(T) ~ 0.

The state z is a discrete solution of the Galerkin scheme (Hermite in x,
continuous piecewise linear in t) and the control v is constant in time on
each cell and carried by the Hermite dofs of the control nodes.  Among all
such pairs the solver returns the minimizer of

    J(z, v) = 1/2 sum_j tau_j int rho^2(x, t_j) z_j^2 + 1/2 s^-3 lam^-4 int_{q_T} rho0^2 v^2,

where z_j are the time levels (the initial level is data) and tau_j the
trapezoidal weights.  The optimality system is solved through its multiplier
p (one Hermite profile per cell):

    S p = b,   S = K Hz^-1 K^T + L Hv^-1 L^T,
    z = Hz^-1 K^T p,   v = -Hv^-1 L^T p,

with K the scheme acting on the unknown levels, L the load of the control,
Hz, Hv the weighted mass matrices and b the data (B and the initial level).
Hz is block diagonal over time levels and Hv over cells, so S is block
tridiagonal in time and is factored by a block Cholesky sweep.  All weights
enter through their logarithms; every block is rescaled by the exponential
of its smallest weight exponent before anything is exponentiated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.special import logsumexp

from .galerkin import initial_level, slab_operators
from .grid import CellField, Field, SpaceTimeGrid
from .weights import WeightSet

log = logging.getLogger(__name__)

_BAND = 3  # half bandwidth of Hermite mass matrices (two dofs per node)


class NeedLargerS(RuntimeError):
    def __init__(self, s: float, required: float):
        super().__init__(f"s={s:g} is below max(|A|^(2/3), s0)={required:g}")
        self.s, self.required = s, required


class SolverFailure(RuntimeError):
    pass


@dataclass
class LinearControlProblem:
    """Data of one linear control problem.

    B holds quadrature values of the source, or per-cell load vectors when
    B_is_load is set; z0 is a callable of x, a dof vector, or None.
    """
    grid: SpaceTimeGrid
    weights: WeightSet
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    z0: Callable | np.ndarray | None = None
    check_s: bool = True
    B_is_load: bool = False

    def __post_init__(self):
        g = self.grid
        if self.A is not None:
            self.A = np.broadcast_to(np.asarray(self.A, dtype=float), g.shape_q)
        if self.B is not None and not self.B_is_load:
            self.B = np.broadcast_to(np.asarray(self.B, dtype=float), g.shape_q)
        if self.check_s and self.weights.s < self.required_s() * (1 - 1e-12):
            raise NeedLargerS(self.weights.s, self.required_s())

    @property
    def A_sup(self) -> float:
        return 0.0 if self.A is None else float(np.abs(self.A).max())

    def required_s(self) -> float:
        return max(self.A_sup ** (2 / 3), self.weights.params.s0)

    def z0_free(self) -> np.ndarray:
        g = self.grid
        if self.z0 is None or callable(self.z0):
            return initial_level(g, self.z0)
        z0 = np.asarray(self.z0, dtype=float)
        return z0[g.free_x] if z0.size == g.ndx else z0

    def z0_values(self) -> np.ndarray:
        """Values of the initial level at the spatial quadrature points."""
        g = self.grid
        return g.Ex(0)[:, g.free_x] @ self.z0_free()

    def data_loads(self) -> np.ndarray:
        """Per-cell load vectors of B, shape (nt, nf)."""
        g = self.grid
        ops = slab_operators(g)
        if self.B is None:
            return np.zeros((g.nt, ops.nf))
        if self.B_is_load:
            return np.asarray(self.B, dtype=float).reshape(g.nt, ops.nf)
        return ops.loads(self.B)


def _banded(M: sp.spmatrix, u: int = _BAND) -> np.ndarray:
    """Upper banded storage of a symmetric sparse matrix for cholesky_banded."""
    M = sp.csr_matrix(M)
    ab = np.zeros((u + 1, M.shape[0]))
    for k in range(u + 1):
        ab[u - k, k:] = M.diagonal(k)
    return ab


def _banded_upper_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """U x for an upper triangular banded factor stored as by cholesky_banded."""
    u, n = ab.shape[0] - 1, ab.shape[1]
    out = np.zeros(n)
    for k in range(u + 1):
        out[:n - k] += ab[u - k, k:] * x[k:]
    return out


def _scale(a: np.ndarray, log_factor: np.ndarray) -> np.ndarray:
    """a * exp(log_factor) row-wise without forming the exponential on its own."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(a)) + np.asarray(log_factor)[:, None]
    if np.any(lg > 700):
        raise SolverFailure("scaled data overflows; lower the exponent scale or cap theta")
    return np.sign(a) * np.exp(lg)


@dataclass
class PSystem:
    """Scaled block-tridiagonal multiplier system.

    The physical multiplier of cell c is p_c = exp(gamma_c / 2) d_c * p_hat_c
    where p_hat solves  D S D p_hat = D b  with D = diag(exp(gamma / 2) d).
    diag[c] and upper[c] (coupling of cells c and c+1) are blocks of D S D.
    """
    grid: SpaceTimeGrid
    diag: list
    upper: list
    rhs: np.ndarray
    gamma: np.ndarray
    d: np.ndarray
    level_chol: list
    level_shift: np.ndarray
    control_chol: list
    control_shift: np.ndarray
    Kl: list
    Kd: list
    Lc: sp.csr_matrix
    control_idx: np.ndarray

    @property
    def block_size(self) -> int:
        return self.diag[0].shape[0]

    def to_dense(self) -> np.ndarray:
        """Full scaled matrix (small grids only)."""
        nb, n = len(self.diag), self.block_size
        M = np.zeros((nb * n, nb * n))
        for c in range(nb):
            M[c * n:(c + 1) * n, c * n:(c + 1) * n] = self.diag[c]
            if c + 1 < nb:
                M[c * n:(c + 1) * n, (c + 1) * n:(c + 2) * n] = self.upper[c]
                M[(c + 1) * n:(c + 2) * n, c * n:(c + 1) * n] = self.upper[c].T
        return M

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Product with the scaled matrix, carried out in the precision of x."""
        X = x.reshape(len(self.diag), -1)
        dt = X.dtype
        out = np.array([D.astype(dt) @ xc for D, xc in zip(self.diag, X)])
        for c, U in enumerate(self.upper):
            U = U.astype(dt)
            out[c] += U @ X[c + 1]
            out[c + 1] += U.T @ X[c]
        return out.ravel()


def assemble_p_system(problem: LinearControlProblem, weight_perturbation=None) -> PSystem:
    """Build the scaled multiplier system.

    weight_perturbation, if given, is a pair (eta_levels, eta_quad) added to
    2 log rho at the level points (shape (nt, NX)) and to 2 log rho0 at the
    quadrature points (shape (NT, NX)); it is used to build feasible
    competitors that minimize a different cost.
    """
    g, ws = problem.grid, problem.weights
    ops = slab_operators(g)
    nt, nf = g.nt, ops.nf
    s, lam = ws.s, ws.lam
    qw = ws.on_grid(g)
    clip = ws.clip_time(g)

    # state cost at levels 1..nt
    tl = np.minimum(g.t_nodes[1:], clip)
    X, Tl = np.meshgrid(g.xq, tl)
    _, _, log_rho_lv, _, _ = ws.phi_xi_rho(X, Tl, clip)
    tau = np.full(nt, g.dt)
    tau[-1] = 0.5 * g.dt
    wz = 2 * log_rho_lv + np.log(tau)[:, None]
    if weight_perturbation is not None:
        wz = wz + weight_perturbation[0]
    level_shift = wz.max(axis=1)
    Exf = ops.Exf
    level_chol = []
    for j in range(nt):
        H = Exf.T @ sp.diags(g.wx * np.exp(wz[j] - level_shift[j])) @ Exf
        level_chol.append(la.cholesky_banded(_banded(H)))

    # control cost per cell on the control nodes
    idx = g.omega_x
    Ew = g.Ex(0)[:, idx].tocsr()
    inside = g.chi > 0
    w0 = 2 * qw.log_rho0 + np.log(g.wt)[:, None]
    if weight_perturbation is not None:
        w0 = w0 + weight_perturbation[1]
    w0 = logsumexp(w0.reshape(nt, g.nq, -1), axis=1) - np.log(s**3 * lam**4)  # (nt, NX)
    control_shift = w0[:, inside].max(axis=1)
    Ewi = Ew[inside]
    control_chol = []
    for c in range(nt):
        H = Ewi.T @ sp.diags(g.wx[inside] * np.exp(w0[c, inside] - control_shift[c])) @ Ewi
        control_chol.append(la.cholesky_banded(_banded(H)))
    Lc = (g.dt * (Exf.T @ sp.diags(g.wx * g.chi) @ Ew)).tocsr()  # (nf, n_omega)

    # scheme blocks: cell c couples levels c and c+1
    K = ops.operator(problem.A).tocsr()
    Kl = [K[c * nf:(c + 1) * nf, c * nf:(c + 1) * nf].tocsr() for c in range(nt)]
    Kd = [K[c * nf:(c + 1) * nf, (c + 1) * nf:(c + 2) * nf].tocsr() for c in range(nt)]

    b = problem.data_loads().copy()
    b[0] -= Kl[0] @ problem.z0_free()

    # gamma_c is the smallest weight exponent touching cell c
    gamma = np.minimum(level_shift, control_shift)
    gamma[1:] = np.minimum(gamma[1:], level_shift[:-1])

    LcT = Lc.T.toarray()
    diag, upper = [], []
    for c in range(nt):
        Y = la.cho_solve_banded((level_chol[c], False), Kd[c].T.toarray())
        Dc = np.exp(gamma[c] - level_shift[c]) * (Kd[c] @ Y)
        if c > 0:
            Z = la.cho_solve_banded((level_chol[c - 1], False), Kl[c].T.toarray())
            Dc += np.exp(gamma[c] - level_shift[c - 1]) * (Kl[c] @ Z)
        V = la.cho_solve_banded((control_chol[c], False), LcT)
        Dc += np.exp(gamma[c] - control_shift[c]) * (Lc @ V)
        diag.append(0.5 * (Dc + Dc.T))
    for c in range(nt - 1):
        e = 0.5 * (gamma[c] + gamma[c + 1]) - level_shift[c]
        Z = la.cho_solve_banded((level_chol[c], False), Kl[c + 1].T.toarray())
        upper.append(np.exp(e) * (Kd[c] @ Z))
    # Jacobi balancing inside the blocks
    d = np.empty((nt, nf))
    for c in range(nt):
        dd = np.diag(diag[c]).copy()
        if np.any(dd <= 0) or not np.all(np.isfinite(dd)):
            raise SolverFailure(f"non-positive diagonal in block {c}")
        d[c] = 1.0 / np.sqrt(dd)
    for c in range(nt):
        diag[c] = d[c][:, None] * diag[c] * d[c][None, :]
        if c + 1 < nt:
            upper[c] = d[c][:, None] * upper[c] * d[c + 1][None, :]
    rhs = _scale(b, 0.5 * gamma) * d
    return PSystem(g, diag, upper, rhs, gamma, d, level_chol, level_shift, control_chol,
                   control_shift, Kl, Kd, Lc, idx)


@dataclass
class BlockCholesky:
    """Factor of a symmetric positive definite block-tridiagonal matrix."""
    L: list
    B: list

    @classmethod
    def factor(cls, diag: list, upper: list) -> "BlockCholesky":
        Ls, Bs = [], [None]
        for c, D in enumerate(diag):
            if c > 0:
                Bc = la.solve_triangular(Ls[c - 1], upper[c - 1], lower=True).T
                Bs.append(Bc)
                D = D - Bc @ Bc.T
            try:
                Ls.append(la.cholesky(D, lower=True))
            except la.LinAlgError:
                raise SolverFailure(f"multiplier system not positive definite at block {c}") from None
        return cls(Ls, Bs)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        nb = len(self.L)
        R = rhs.reshape(nb, -1)
        y = np.empty_like(R)
        for c in range(nb):
            r = R[c] if c == 0 else R[c] - self.B[c] @ y[c - 1]
            y[c] = la.solve_triangular(self.L[c], r, lower=True)
        x = np.empty_like(R)
        for c in range(nb - 1, -1, -1):
            r = y[c] if c == nb - 1 else y[c] - self.B[c + 1].T @ x[c + 1]
            x[c] = la.solve_triangular(self.L[c], r, lower=True, trans="T")
        return x.ravel()


@dataclass
class BlockLU:
    """Pivoted block elimination for the same structure; used when Cholesky breaks down."""
    lus: list
    upper: list

    @classmethod
    def factor(cls, diag: list, upper: list) -> "BlockLU":
        lus = []
        for c, D in enumerate(diag):
            if c > 0:
                D = D - upper[c - 1].T @ la.lu_solve(lus[c - 1], upper[c - 1])
            lus.append(la.lu_factor(D))
        return cls(lus, upper)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        nb = len(self.lus)
        R = rhs.reshape(nb, -1)
        w = np.empty_like(R)
        for c in range(nb):
            w[c] = R[c] if c == 0 else R[c] - self.upper[c - 1].T @ la.lu_solve(self.lus[c - 1], w[c - 1])
        x = np.empty_like(R)
        for c in range(nb - 1, -1, -1):
            r = w[c] if c == nb - 1 else w[c] - self.upper[c] @ x[c + 1]
            x[c] = la.lu_solve(self.lus[c], r)
        return x.ravel()


def _factor(system: PSystem):
    try:
        return BlockCholesky.factor(system.diag, system.upper), "block-cholesky"
    except SolverFailure as err:
        log.warning("%s; retrying with pivoted block elimination", err)
        return BlockLU.factor(system.diag, system.upper), "block-lu"


@dataclass
class AdjointSolution:
    p: CellField
    p_scaled: np.ndarray
    residual: float
    method: str
    system: PSystem = field(repr=False)


def solve_adjoint(problem: LinearControlProblem, system: PSystem | None = None) -> AdjointSolution:
    """Multiplier with relative algebraic residual <= 1e-10 (block Cholesky plus refinement)."""
    system = system or assemble_p_system(problem)
    g = problem.grid
    rhs = system.rhs.ravel()
    bn = np.linalg.norm(rhs)
    if bn == 0:
        ph, res, method = np.zeros_like(rhs), 0.0, "trivial"
    else:
        fac, method = _factor(system)
        # iterative refinement with residuals and iterate in extended precision
        x = fac.solve(rhs).astype(np.longdouble)
        rl = rhs.astype(np.longdouble)
        for k in range(6):
            r = rl - system.matvec(x)
            if np.linalg.norm(r.astype(float)) <= 1e-15 * bn:
                break
            x += fac.solve(r.astype(float))
            if k == 0:
                method += "+refine"
        res = float(np.linalg.norm((rl - system.matvec(x)).astype(float)) / bn)
        ph = x.astype(float)
    if res > 1e-10:
        raise SolverFailure(f"multiplier residual {res:.3e} exceeds 1e-10")
    P = ph.reshape(g.nt, -1) * system.d
    dofs = np.zeros((g.nt, g.ndx))
    dofs[:, g.free_x] = P * np.exp(np.minimum(0.5 * system.gamma, 700.0))[:, None]
    return AdjointSolution(CellField(g, dofs), ph, res, method, system)


@dataclass
class ControlledSolution:
    """Optimal pair with log-safe scaled copies.

    zeta[j] = exp(level_shift[j] / 2) z_{j+1} and nu[c] = exp(control_shift[c] / 2) v_c
    keep the information that the physical arrays lose to underflow.
    """
    z: Field
    v: CellField
    zeta: np.ndarray
    nu: np.ndarray
    J_value: float
    log_J: float
    terminal_norm: float
    log_terminal_norm: float
    estimate_ratio: float
    duality_gap: float
    adjoint: AdjointSolution = field(repr=False)

    def report(self) -> dict:
        return {"J": self.J_value, "log_J": self.log_J, "terminal_norm": self.terminal_norm,
                "log_terminal_norm": self.log_terminal_norm, "estimate_ratio": self.estimate_ratio,
                "duality_gap": self.duality_gap, "z_sup": self.z.sup_norm(), "v_sup": self.v.sup_norm(),
                "solver": self.adjoint.method, "solver_residual": self.adjoint.residual}


def _quad_forms(system: PSystem, zeta: np.ndarray, nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-level and per-cell squares zeta^T H zeta and nu^T H nu with the scaled mass matrices."""
    qz = np.array([np.sum(_banded_upper_matvec(U, x) ** 2) for U, x in zip(system.level_chol, zeta)])
    qv = np.array([np.sum(_banded_upper_matvec(U, x) ** 2) for U, x in zip(system.control_chol, nu)])
    return qz, qv


def _log_cost(qz: np.ndarray, qv: np.ndarray) -> float:
    tot = 0.5 * (qz.sum() + qv.sum())
    return float(np.log(tot)) if tot > 0 else -np.inf


def reconstruct(problem: LinearControlProblem, adj: AdjointSolution) -> ControlledSolution:
    g = problem.grid
    sysm = adj.system
    nt = g.nt
    P = adj.p_scaled.reshape(nt, -1) * sysm.d
    gam, ls, cs = sysm.gamma, sysm.level_shift, sysm.control_shift
    zeta = np.zeros_like(P)
    for j in range(nt):  # level j+1 is shared by cells j and j+1
        w = np.exp(0.5 * gam[j] - 0.5 * ls[j]) * (sysm.Kd[j].T @ P[j])
        if j + 1 < nt:
            w += np.exp(0.5 * gam[j + 1] - 0.5 * ls[j]) * (sysm.Kl[j + 1].T @ P[j + 1])
        zeta[j] = la.cho_solve_banded((sysm.level_chol[j], False), w)
    nu = np.zeros((nt, len(sysm.control_idx)))
    for c in range(nt):
        w = np.exp(0.5 * gam[c] - 0.5 * cs[c]) * (sysm.Lc.T @ P[c])
        nu[c] = -la.cho_solve_banded((sysm.control_chol[c], False), w)
    levels = np.zeros((nt + 1, g.ndx))
    levels[0, g.free_x] = problem.z0_free()
    levels[1:, g.free_x] = zeta * np.exp(-0.5 * ls)[:, None]
    z = Field.from_levels(g, levels)
    vd = np.zeros((nt, g.ndx))
    vd[:, sysm.control_idx] = nu * np.exp(-0.5 * cs)[:, None]
    v = CellField(g, vd)
    qz, qv = _quad_forms(sysm, zeta, nu)
    log_J = _log_cost(qz, qv)
    J = float(np.exp(log_J)) if np.isfinite(log_J) else 0.0
    # duality: J = p.b / 2
    pb = float(adj.p_scaled @ sysm.rhs.ravel())
    if np.isfinite(log_J) and pb > 0:
        gap = abs(np.expm1(np.log(0.5 * pb) - log_J))
    else:
        gap = 0.0 if (pb == 0 and not np.isfinite(log_J)) else np.inf
    M = g.mass_x[g.free_x][:, g.free_x]
    tq = float(zeta[-1] @ (M @ zeta[-1]))
    log_term = 0.5 * (np.log(tq) - ls[-1]) if tq > 0 else -np.inf
    term = float(np.exp(log_term)) if np.isfinite(log_term) else 0.0
    ratio = _estimate_ratio(problem, qz, qv)
    return ControlledSolution(z, v, zeta, nu, J, log_J, term, float(log_term), ratio, float(gap), adj)


def _estimate_ratio(problem, qz, qv) -> float:
    """(|rho z| + |rho0 v|) s^1.5 / (|rho0 B| + e^{c s} |z0|), monitored only."""
    g, ws = problem.grid, problem.weights
    s, lam = ws.s, ws.lam
    num = np.sqrt(qz.sum()) + np.sqrt(s**3 * lam**4 * qv.sum())
    num = np.log(num) + 1.5 * np.log(s) if num > 0 else -np.inf
    terms = []
    if problem.B is not None and not problem.B_is_load:
        nB = ws.on_grid(g).norm(problem.B, "rho0")
        if nB > 0:
            terms.append(np.log(nB))
    n0 = float(np.sqrt(np.sum(g.wx * problem.z0_values() ** 2)))
    if n0 > 0:
        terms.append(ws.params.exponent_scale * ws.c * s + np.log(n0))
    if not terms or not np.isfinite(num):
        return 0.0
    return float(np.exp(num - logsumexp(terms)))


def solve_null_control(A, B, z0, weights: WeightSet, grid: SpaceTimeGrid, check_s: bool = True,
                       B_is_load: bool = False) -> ControlledSolution:
    problem = LinearControlProblem(grid, weights, A, B, z0, check_s, B_is_load)
    return reconstruct(problem, solve_adjoint(problem))


def control_loads(grid: SpaceTimeGrid, v: CellField) -> np.ndarray:
    """Per-cell load vectors of v 1_omega, shape (nt, nf)."""
    ops = slab_operators(grid)
    return np.asarray(ops.Pt @ (grid.W * v.values() * grid.chi[None, :]) @ ops.Exf)


def transposition_residual(problem: LinearControlProblem, sol: ControlledSolution, q: CellField) -> float:
    """Relative defect of the discrete transposition identity for a test function q.

    With q constant in time on each cell the identity reads
    sum_c <(K z)_c, q_c> = sum_c <(L v)_c, q_c> + sum_c <B_c, q_c>, the initial level
    being part of K z.  Cell c is weighted by exp(-gamma_c / 2), the scale at
    which the solver resolves it.
    """
    g = problem.grid
    ops = slab_operators(g)
    sysm = sol.adjoint.system
    Q = _scale(q.dofs[:, g.free_x], -0.5 * sysm.gamma)
    Kz = (ops.operator(problem.A) @ sol.z.free()).reshape(g.nt, ops.nf)
    parts = [Kz * Q, control_loads(g, sol.v) * Q, problem.data_loads() * Q]
    scale = max(np.abs(p).sum() for p in parts)
    if scale == 0:
        return 0.0
    return float(abs(parts[0].sum() - parts[1].sum() - parts[2].sum()) / scale)


def random_test_field(grid: SpaceTimeGrid, rng: np.random.Generator, modes: int = 4) -> CellField:
    """Random cell-wise Hermite profiles vanishing at x = 0, 1 (sine modes, random per cell)."""
    k = np.arange(1, modes + 1)
    a = rng.normal(size=(grid.nt, modes))
    x = grid.x_nodes
    dofs = np.zeros((grid.nt, grid.ndx))
    dofs[:, 0::2] = a @ np.sin(np.pi * k[:, None] * x[None, :])
    dofs[:, 1::2] = a @ (np.pi * k[:, None] * np.cos(np.pi * k[:, None] * x[None, :]))
    dofs[:, 0] = dofs[:, 2 * grid.nx] = 0.0
    return CellField(grid, dofs)


def _rescaled(sol: ControlledSolution, system: PSystem) -> tuple[np.ndarray, np.ndarray]:
    """Scaled copies of sol expressed with the shifts of another system."""
    own = sol.adjoint.system
    zeta = sol.zeta * np.exp(0.5 * (system.level_shift - own.level_shift))[:, None]
    nu = sol.nu * np.exp(0.5 * (system.control_shift - own.control_shift))[:, None]
    return zeta, nu


def J_of(sol: ControlledSolution, system: PSystem | None = None) -> float:
    """J of sol measured with the (possibly different) weights of system."""
    sysm = system or sol.adjoint.system
    lj = _log_cost(*_quad_forms(sysm, *_rescaled(sol, sysm)))
    return float(np.exp(lj)) if np.isfinite(lj) else 0.0


def _inner(sysm: PSystem, az, av, bz, bv) -> float:
    """Weighted inner product of two scaled pairs."""
    tot = 0.0
    for U, a, b in zip(sysm.level_chol, az, bz):
        tot += _banded_upper_matvec(U, a) @ _banded_upper_matvec(U, b)
    for U, a, b in zip(sysm.control_chol, av, bv):
        tot += _banded_upper_matvec(U, a) @ _banded_upper_matvec(U, b)
    return float(tot)


@dataclass
class OptimalityReport:
    J: float
    increases: list
    first_order: list
    passed: bool


def verify_optimality(problem: LinearControlProblem, sol: ControlledSolution, n: int = 10,
                      seed: int = 0, amplitude: float = 1.0) -> OptimalityReport:
    """Compare J against feasible competitors obtained with randomly distorted weights.

    Each competitor satisfies the same constraints (same A, B, z0) but minimizes
    a different weighted cost, so its difference with sol is a null-controlled
    pair of the homogeneous problem.  Reports the relative increases of J and
    the first-order terms <sol, competitor - sol> / (2 J), which must vanish.
    """
    g = problem.grid
    rng = np.random.default_rng(seed)
    sysm = sol.adjoint.system
    J0 = J_of(sol)
    X, Tl = np.meshgrid(g.xq, g.t_nodes[1:])
    Xq, Tq = np.meshgrid(g.xq, g.tq)
    incs, firsts = [], []
    for _ in range(n):
        k = rng.integers(1, 4, size=4)
        ph = rng.uniform(0, 2 * np.pi, size=4)
        e1 = amplitude * rng.normal() * np.sin(np.pi * k[0] * X + ph[0]) * np.cos(np.pi * k[1] * Tl / g.T + ph[1])
        e2 = amplitude * rng.normal() * np.sin(np.pi * k[2] * Xq + ph[2]) * np.cos(np.pi * k[3] * Tq / g.T + ph[3])
        other = reconstruct(problem, solve_adjoint(problem, assemble_p_system(problem, (e1, e2))))
        J1 = J_of(other, sysm)
        incs.append((J1 - J0) / J0 if J0 > 0 else J1)
        oz, ov = _rescaled(other, sysm)
        cross = _inner(sysm, sol.zeta, sol.nu, oz - sol.zeta, ov - sol.nu)
        norm = _inner(sysm, sol.zeta, sol.nu, sol.zeta, sol.nu)
        firsts.append(cross / norm if norm > 0 else cross)
    passed = all(i >= -1e-8 for i in incs)
    return OptimalityReport(J0, incs, firsts, passed)
