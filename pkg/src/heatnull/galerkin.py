"""Time-slab Galerkin form of the state equation on the Hermite x P1 space.

For a field y (continuous, linear in time on each cell) and each time cell
I_n = (t_{n-1}, t_n), the residual vector is

    R_n(psi) = (y_n - y_{n-1}, psi) + dt (d_x y_n, d_x psi) + int_{I_n} (N(y), psi) dt

for all Hermite test functions psi with psi(0) = psi(1) = 0; N collects the
zero-order terms (potential, nonlinearity, sources, control), integrated with
the tensor Gauss rule.  Diffusion is implicit at the end of the cell (theta = 1
in the theta-scheme; theta = 1/2 gives the Crank-Nicolson Galerkin scheme).
The implicit choice damps high spatial frequencies, which keeps the discrete
control problems well posed under refinement.  The projected residual
r_h = M^{-1} R_n / dt is a spatial Hermite function, constant on each cell,
and is the residual that the least-squares functional weighs.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import CellField, Field, SpaceTimeGrid


class SlabOperators:
    """Sparse operators of the Galerkin scheme on one grid (Dirichlet-free dofs only)."""

    def __init__(self, grid: SpaceTimeGrid, theta: float = 1.0):
        self.grid = grid
        self.theta = theta
        f = grid.free_x
        self.nf = len(f)
        self.M = grid.mass_x[f][:, f].tocsc()
        self.S = grid.stiff_x[f][:, f].tocsc()
        self.Exf = grid.Ex(0)[:, f].tocsr()
        nt = grid.nt
        self.Pt = sp.csr_matrix((np.ones(nt * grid.nq), (grid.element_of_tq, np.arange(nt * grid.nq))),
                                shape=(nt, nt * grid.nq))
        D = sp.diags([-np.ones(nt), np.ones(nt)], [0, 1], shape=(nt, nt + 1))
        Avg = sp.diags([np.full(nt, (1 - theta) * grid.dt), np.full(nt, theta * grid.dt)], [0, 1],
                       shape=(nt, nt + 1))
        self.K0 = (sp.kron(D, self.M) + sp.kron(Avg, self.S)).tocsr()
        self.Evals = sp.kron(grid.Et(0), self.Exf).tocsr()
        self.Test = sp.kron(self.Pt, self.Exf.T).tocsr()

    @cached_property
    def mass_lu(self):
        return spla.splu(self.M)

    def loads(self, u: np.ndarray) -> np.ndarray:
        """Per-cell Galerkin load vectors of quadrature data u, shape (nt, nf)."""
        g = self.grid
        Wu = g.W * u
        return np.asarray(self.Pt @ (Wu @ self.Exf))

    def operator(self, A: np.ndarray | None = None) -> sp.csr_matrix:
        """Matrix of y -> R(y) for the linear equation with potential A (all levels)."""
        K = self.K0
        if A is not None:
            wA = (self.grid.W * np.broadcast_to(A, self.grid.shape_q)).ravel()
            K = K + self.Test @ sp.diags(wA) @ self.Evals
        return K.tocsr()

    def solve(self, A, source: np.ndarray, y0_free: np.ndarray, source_is_load: bool = False) -> np.ndarray:
        """March the linear scheme: returns all free level dofs, shape (nt+1, nf).

        source holds quadrature values of the right-hand side (or, with
        source_is_load, the per-cell load vectors directly).
        """
        nf = self.nf
        K = self.operator(A).tocsc()
        rhs = source if source_is_load else self.loads(source)
        rhs = np.asarray(rhs).ravel() - K[:, :nf] @ y0_free
        Ku = K[:, nf:]
        Y = spla.splu(Ku.tocsc()).solve(rhs)
        return np.vstack([y0_free, Y.reshape(self.grid.nt, nf)])

    def residual_vectors(self, y: Field, zero_order: np.ndarray) -> np.ndarray:
        """R_n for a field y with pointwise zero-order term zero_order, shape (nt, nf)."""
        Rlin = (self.K0 @ y.free()).reshape(self.grid.nt, self.nf)
        return Rlin + self.loads(zero_order)

    def project_cells(self, R: np.ndarray) -> np.ndarray:
        """Spatial dofs of the cell-wise residual functions r_h = M^{-1} R_n / dt."""
        return self.mass_lu.solve(np.asarray(R).T).T / self.grid.dt

    def cell_values(self, rh: np.ndarray) -> np.ndarray:
        """Quadrature values of a cell-wise constant-in-time Hermite function."""
        vals = np.asarray(self.Exf @ rh.T).T  # (nt, NX)
        return vals[self.grid.element_of_tq]


_OPS: dict = {}


def slab_operators(grid: SpaceTimeGrid) -> SlabOperators:
    key = (grid.nx, grid.nt, grid.T, grid.omega, grid.nq)
    if key not in _OPS:
        if len(_OPS) > 8:
            _OPS.clear()
        _OPS[key] = SlabOperators(grid)
    return _OPS[key]


def initial_level(grid: SpaceTimeGrid, z0) -> np.ndarray:
    """Free dofs of the Hermite interpolant of z0 (callable of x, or None for zero)."""
    if z0 is None:
        return np.zeros(len(grid.free_x))
    x = grid.x_nodes
    eps = 1e-6
    dofs = np.empty(grid.ndx)
    dofs[0::2] = np.asarray(z0(x), dtype=float) * np.ones_like(x)
    dofs[1::2] = (np.asarray(z0(x + eps)) - np.asarray(z0(x - eps))) / (2 * eps) * np.ones_like(x)
    return dofs[grid.free_x]


def forward_solve(grid: SpaceTimeGrid, A, source, z0=None) -> Field:
    """State of d_t z - d_xx z + A z = source, z(0) = z0, z = 0 on the boundary."""
    ops = slab_operators(grid)
    A = None if A is None else np.broadcast_to(np.asarray(A, dtype=float), grid.shape_q)
    src = np.zeros(grid.shape_q) if source is None else np.broadcast_to(source, grid.shape_q)
    levels = ops.solve(A, src, initial_level(grid, z0))
    return Field.from_free(grid, levels.ravel())


def project_control(grid: SpaceTimeGrid, v: np.ndarray) -> CellField:
    """L2(q_T) projection of quadrature data v onto cell-constant fields carried by the control nodes.

    Dofs of nodes outside the closed control interval are exactly zero.
    """
    idx = grid.omega_x
    Ew = grid.Ex(0)[:, idx]
    wchi = grid.wx * grid.chi
    Mw = (Ew.T @ sp.diags(wchi) @ Ew).toarray()
    ops = slab_operators(grid)
    cell_avg = np.asarray(ops.Pt @ (grid.wt[:, None] * v)) / grid.dt  # (nt, NX)
    rhs = np.asarray(Ew.T @ (wchi[:, None] * cell_avg.T))
    dofs = np.zeros((grid.nt, grid.ndx))
    dofs[:, idx] = np.linalg.solve(Mw, rhs).T
    return CellField(grid, dofs)
