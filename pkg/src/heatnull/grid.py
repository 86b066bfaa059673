"""Space-time tensor meshes, C1-in-space fields and Gauss quadrature on (0,1)x(0,T).

Space uses cubic Hermite elements (value and slope at every node), time uses
continuous piecewise-linear elements.  Every integral is a tensor Gauss rule,
so all pointwise data (weights, potentials, residuals) live on the array of
quadrature points with shape (nt*nq, nx*nq), time first.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    pass


def hermite_basis(xi: np.ndarray, h: float, deriv: int = 0) -> np.ndarray:
    """The four cubic Hermite shape functions on an element of length h.

    Order is (value left, slope left, value right, slope right); returns an
    array of shape (4, len(xi)) holding the requested x-derivative.
    """
    xi = np.asarray(xi, dtype=float)
    if deriv == 0:
        return np.array([
            1 - 3 * xi**2 + 2 * xi**3,
            h * (xi - 2 * xi**2 + xi**3),
            3 * xi**2 - 2 * xi**3,
            h * (-xi**2 + xi**3),
        ])
    if deriv == 1:
        return np.array([
            (-6 * xi + 6 * xi**2) / h,
            1 - 4 * xi + 3 * xi**2,
            (6 * xi - 6 * xi**2) / h,
            -2 * xi + 3 * xi**2,
        ])
    if deriv == 2:
        return np.array([
            (-6 + 12 * xi) / h**2,
            (-4 + 6 * xi) / h,
            (6 - 12 * xi) / h**2,
            (-2 + 6 * xi) / h,
        ])
    raise ValueError("deriv must be 0, 1 or 2")


def gauss_rule(nq: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0,1]."""
    z, w = np.polynomial.legendre.leggauss(nq)
    return 0.5 * (z + 1.0), 0.5 * w


@dataclass(frozen=True)
class SpaceTimeGrid:
    nx: int
    nt: int
    T: float
    omega: tuple[float, float]
    nq: int = 4
    requested_omega: tuple[float, float] | None = field(default=None, compare=False)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def ndx(self) -> int:
        """Spatial dofs per time level, boundary values included."""
        return 2 * (self.nx + 1)

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx + 1)

    @cached_property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @cached_property
    def omega_nodes(self) -> tuple[int, int]:
        a, b = self.omega
        return int(round(a * self.nx)), int(round(b * self.nx))

    # quadrature --------------------------------------------------------
    @cached_property
    def _rule(self):
        return gauss_rule(self.nq)

    @cached_property
    def xq(self) -> np.ndarray:
        xi, _ = self._rule
        return ((np.arange(self.nx)[:, None] + xi[None, :]) * self.hx).ravel()

    @cached_property
    def tq(self) -> np.ndarray:
        tau, _ = self._rule
        return ((np.arange(self.nt)[:, None] + tau[None, :]) * self.dt).ravel()

    @cached_property
    def wx(self) -> np.ndarray:
        _, w = self._rule
        return np.tile(w * self.hx, self.nx)

    @cached_property
    def wt(self) -> np.ndarray:
        _, w = self._rule
        return np.tile(w * self.dt, self.nt)

    @cached_property
    def W(self) -> np.ndarray:
        """Tensor quadrature weights, shape (NT, NX)."""
        return np.outer(self.wt, self.wx)

    @cached_property
    def chi(self) -> np.ndarray:
        """Indicator of the control region at the spatial quadrature points."""
        a, b = self.omega
        return ((self.xq > a) & (self.xq < b)).astype(float)

    @property
    def shape_q(self) -> tuple[int, int]:
        return (self.nt * self.nq, self.nx * self.nq)

    # evaluation operators ----------------------------------------------
    @cached_property
    def _Ex(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        xi, _ = self._rule
        nq, nx = self.nq, self.nx
        rows = (np.arange(nx)[:, None] * nq + np.arange(nq)[None, :])
        mats = []
        for d in range(3):
            B = hermite_basis(xi, self.hx, d)  # (4, nq)
            r = np.repeat(rows[:, :, None], 4, axis=2)
            c = 2 * np.arange(nx)[:, None, None] + np.arange(4)[None, None, :]
            c = np.broadcast_to(c, r.shape)
            v = np.broadcast_to(B.T[None, :, :], r.shape)
            mats.append(sp.csr_matrix((v.ravel(), (r.ravel(), c.ravel())),
                                      shape=(nx * nq, self.ndx)))
        return tuple(mats)

    def Ex(self, deriv: int = 0) -> sp.csr_matrix:
        """Spatial dofs -> values (or x-derivatives) at the spatial quadrature points."""
        return self._Ex[deriv]

    @cached_property
    def _Et(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        tau, _ = self._rule
        nq, nt = self.nq, self.nt
        r = np.repeat(np.arange(nt * nq), 2)
        e = np.repeat(np.arange(nt), nq)
        c = np.stack([e, e + 1], axis=1).ravel()
        v0 = np.stack([np.tile(1 - tau, nt), np.tile(tau, nt)], axis=1).ravel()
        v1 = np.tile([-1.0 / self.dt, 1.0 / self.dt], nt * nq)
        shape = (nt * nq, nt + 1)
        return sp.csr_matrix((v0, (r, c)), shape=shape), sp.csr_matrix((v1, (r, c)), shape=shape)

    def Et(self, deriv: int = 0) -> sp.csr_matrix:
        """Time-level values -> values (or t-derivative) at the time quadrature points."""
        return self._Et[deriv]

    @cached_property
    def element_of_tq(self) -> np.ndarray:
        return np.repeat(np.arange(self.nt), self.nq)

    @cached_property
    def free_x(self) -> np.ndarray:
        """Spatial dof indices left free by homogeneous Dirichlet conditions."""
        keep = np.ones(self.ndx, dtype=bool)
        keep[0] = keep[2 * self.nx] = False
        return np.flatnonzero(keep)

    @cached_property
    def omega_x(self) -> np.ndarray:
        """Spatial dof indices of the nodes lying in the closed control interval."""
        ia, ib = self.omega_nodes
        return np.arange(2 * ia, 2 * ib + 2)

    @cached_property
    def mass_x(self) -> sp.csr_matrix:
        E = self.Ex(0)
        return (E.T @ sp.diags(self.wx) @ E).tocsr()

    @cached_property
    def stiff_x(self) -> sp.csr_matrix:
        E = self.Ex(1)
        return (E.T @ sp.diags(self.wx) @ E).tocsr()

    def summary(self) -> dict:
        return {"nx": self.nx, "nt": self.nt, "T": self.T, "omega": list(self.omega), "nq": self.nq}


def make_grid(nx: int, nt: int, T: float, omega, nq: int = 4) -> SpaceTimeGrid:
    """Build a grid, snapping the control interval endpoints to the nearest nodes."""
    if int(nx) != nx or int(nt) != nt or nx < 4 or nt < 4:
        raise GridError(f"need integer nx, nt >= 4, got nx={nx}, nt={nt}")
    if not np.isfinite(T) or T <= 0:
        raise GridError(f"horizon must be positive, got T={T}")
    if nq < 3:
        raise GridError("at least 3 Gauss points per direction are required")
    try:
        a, b = (float(v) for v in omega)
    except (TypeError, ValueError):
        raise GridError(f"control interval must be a pair (a, b), got {omega!r}") from None
    if not (0.0 < a < b < 1.0):
        raise GridError(f"control interval ({a}, {b}) must satisfy 0 < a < b < 1")
    ia, ib = int(round(a * nx)), int(round(b * nx))
    if ia <= 0 or ib >= nx or ia >= ib:
        raise GridError(f"control interval ({a}, {b}) collapses or touches the boundary on nx={nx}")
    return SpaceTimeGrid(int(nx), int(nt), float(T), (ia / nx, ib / nx), int(nq), (a, b))


class Field:
    """Scalar function on the space-time grid.

    dofs has shape (nt+1, 2(nx+1)); row j holds the (value, slope) pairs of
    time level j.  Fields are treated as immutable.
    """

    def __init__(self, grid: SpaceTimeGrid, dofs: np.ndarray | None = None, dirichlet: bool = True):
        self.grid = grid
        if dofs is None:
            dofs = np.zeros((grid.nt + 1, grid.ndx))
        dofs = np.array(dofs, dtype=float).reshape(grid.nt + 1, grid.ndx)
        if dirichlet:
            dofs[:, 0] = 0.0
            dofs[:, 2 * grid.nx] = 0.0
        dofs.setflags(write=False)
        self.dofs = dofs
        self.dirichlet = dirichlet

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "Field":
        return cls(grid)

    @classmethod
    def interpolate(cls, grid: SpaceTimeGrid, fun: Callable, dfun: Callable | None = None,
                    dirichlet: bool = True) -> "Field":
        """Nodal Hermite interpolant of fun(x, t) (slopes by central differences if dfun is None)."""
        X, Tt = np.meshgrid(grid.x_nodes, grid.t_nodes)
        vals = np.asarray(fun(X, Tt), dtype=float) * np.ones_like(X)
        if dfun is None:
            eps = 1e-6
            slopes = (np.asarray(fun(X + eps, Tt)) - np.asarray(fun(X - eps, Tt))) / (2 * eps)
        else:
            slopes = np.asarray(dfun(X, Tt), dtype=float)
        dofs = np.empty((grid.nt + 1, grid.ndx))
        dofs[:, 0::2] = vals
        dofs[:, 1::2] = slopes * np.ones_like(X)
        return cls(grid, dofs, dirichlet)

    @classmethod
    def from_levels(cls, grid: SpaceTimeGrid, levels: np.ndarray, dirichlet: bool = True) -> "Field":
        return cls(grid, levels, dirichlet)

    @classmethod
    def from_free(cls, grid: SpaceTimeGrid, free: np.ndarray) -> "Field":
        """Field from a vector over the Dirichlet-free dofs (time-major)."""
        dofs = np.zeros((grid.nt + 1, grid.ndx))
        dofs[:, grid.free_x] = np.asarray(free).reshape(grid.nt + 1, -1)
        return cls(grid, dofs)

    def free(self) -> np.ndarray:
        return self.dofs[:, self.grid.free_x].ravel()

    def _eval(self, dx: int, dt: int) -> np.ndarray:
        g = self.grid
        tmp = g.Et(dt) @ self.dofs
        return np.asarray((g.Ex(dx) @ tmp.T).T)

    def values(self) -> np.ndarray:
        return self._eval(0, 0)

    def dx(self) -> np.ndarray:
        return self._eval(1, 0)

    def dxx(self) -> np.ndarray:
        return self._eval(2, 0)

    def dt(self) -> np.ndarray:
        return self._eval(0, 1)

    def level_values(self, j: int) -> np.ndarray:
        """Values of time level j at the spatial quadrature points."""
        return self.grid.Ex(0) @ self.dofs[j]

    def nodal_values(self) -> np.ndarray:
        """Values on the nodal lattice, shape (nt+1, nx+1)."""
        return self.dofs[:, 0::2].copy()

    def sup_norm(self) -> float:
        return float(max(np.abs(self.values()).max(), np.abs(self.dofs[:, 0::2]).max()))

    def level_l2(self, j: int) -> float:
        v = self.level_values(j)
        return float(np.sqrt(np.sum(self.grid.wx * v * v)))

    def terminal_l2(self) -> float:
        return self.level_l2(self.grid.nt)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.dofs + other.dofs, self.dirichlet and other.dirichlet)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.dofs - other.dofs, self.dirichlet and other.dirichlet)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, float(c) * self.dofs, self.dirichlet)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0


class CellField:
    """Control-type function: cubic Hermite in space, constant in time on each cell.

    dofs has shape (nt, 2(nx+1)); row n is the spatial profile on cell n.
    No boundary condition is imposed.
    """

    def __init__(self, grid: SpaceTimeGrid, dofs: np.ndarray | None = None):
        self.grid = grid
        if dofs is None:
            dofs = np.zeros((grid.nt, grid.ndx))
        dofs = np.array(dofs, dtype=float).reshape(grid.nt, grid.ndx)
        dofs.setflags(write=False)
        self.dofs = dofs

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "CellField":
        return cls(grid)

    @property
    def t_mid(self) -> np.ndarray:
        return (np.arange(self.grid.nt) + 0.5) * self.grid.dt

    def cell_values(self) -> np.ndarray:
        """Values at the spatial quadrature points, one row per cell."""
        return np.asarray((self.grid.Ex(0) @ self.dofs.T).T)

    def values(self) -> np.ndarray:
        return self.cell_values()[self.grid.element_of_tq]

    def nodal_values(self) -> np.ndarray:
        """Nodal values per cell, shape (nt, nx+1)."""
        return self.dofs[:, 0::2].copy()

    def sup_norm(self) -> float:
        return float(max(np.abs(self.cell_values()).max(), np.abs(self.dofs[:, 0::2]).max()))

    def __add__(self, other: "CellField") -> "CellField":
        return CellField(self.grid, self.dofs + other.dofs)

    def __sub__(self, other: "CellField") -> "CellField":
        return CellField(self.grid, self.dofs - other.dofs)

    def __mul__(self, c: float) -> "CellField":
        return CellField(self.grid, float(c) * self.dofs)

    __rmul__ = __mul__

    def __neg__(self) -> "CellField":
        return self * -1.0


def heat_operator(y: Field) -> np.ndarray:
    """Pointwise dt y - dxx y at the quadrature points."""
    return y.dt() - y.dxx()


def weighted_l2_norm(u, grid: SpaceTimeGrid | None = None, weight=None, region: str = "QT",
                     log_weight=None) -> float:
    """Gauss approximation of (int w^2 u^2)^(1/2) over Q_T or q_T.

    u is a Field or an array of quadrature values; the weight may be given
    directly or through its logarithm (preferred for Carleman weights).
    """
    if isinstance(u, Field):
        grid = u.grid
        u = u.values()
    if grid is None:
        raise ValueError("grid required when u is an array")
    u = np.broadcast_to(np.asarray(u, dtype=float), grid.shape_q)
    W = grid.W
    if region == "qT":
        W = W * grid.chi[None, :]
    elif region != "QT":
        raise ValueError(f"unknown region {region!r}")
    if log_weight is None:
        w = 1.0 if weight is None else np.asarray(weight, dtype=float)
        return float(np.sqrt(np.sum(W * (w * u) ** 2)))
    lw = np.broadcast_to(np.asarray(log_weight, dtype=float), grid.shape_q)
    mask = (W > 0) & (u != 0)
    if not mask.any():
        return 0.0
    la = lw[mask] + np.log(np.abs(u[mask]))
    m = la.max()
    return float(np.exp(m) * np.sqrt(np.sum(W[mask] * np.exp(2 * (la - m)))))


# dumps -------------------------------------------------------------------
BINARY_MAGIC = b"HNFIELD1"


def dump_field_csv(f, path) -> None:
    """Nodal values as rows x,t,value (cell midpoints in t for a CellField)."""
    g = f.grid
    vals = f.nodal_values()
    X, Tt = np.meshgrid(g.x_nodes, f.t_mid if isinstance(f, CellField) else g.t_nodes)
    data = np.column_stack([X.ravel(), Tt.ravel(), vals.ravel()])
    np.savetxt(path, data, delimiter=",", header="x,t,value", comments="", fmt="%.17g")


def dump_field_binary(f: Field, path) -> None:
    """Magic, nx (int32), nt (int32), T (float64), then nodal values row-major (t outer)."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<iid", g.nx, g.nt, g.T))
        fh.write(np.ascontiguousarray(f.nodal_values(), dtype="<f8").tobytes())


def load_field_binary(path) -> tuple[int, int, float, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(BINARY_MAGIC)) != BINARY_MAGIC:
            raise ValueError("not a field dump")
        nx, nt, T = struct.unpack("<iid", fh.read(16))
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(nt + 1, nx + 1)
    return nx, nt, T, vals
