"""Independent re-implementations used as test oracles (dense, loop-based, no shared caches)."""
import numpy as np

from heatnull.grid import gauss_rule, hermite_basis


def full_dofs(grid, free_rows):
    out = np.zeros((free_rows.shape[0], grid.ndx))
    out[:, grid.free_x] = free_rows
    return out


def eval_cells(grid, dofs_rows, nq):
    """Values of cell-wise Hermite profiles (one row of full dofs per time cell) on an nq-point rule.

    Returns (x, w_x, values) with values of shape (nt, nx * nq).
    """
    xi, w = gauss_rule(nq)
    B = hermite_basis(xi, grid.hx)
    xs, ws, vals = [], [], []
    for e in range(grid.nx):
        loc = dofs_rows[:, 2 * e:2 * e + 4]
        vals.append(loc @ B)
        xs.append((e + xi) * grid.hx)
        ws.append(w * grid.hx)
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(vals, axis=1)


def mass_matrix(grid, nq=6):
    """Dense Hermite mass matrix on the free dofs."""
    xi, w = gauss_rule(nq)
    B = hermite_basis(xi, grid.hx)
    M = np.zeros((grid.ndx, grid.ndx))
    for e in range(grid.nx):
        sl = slice(2 * e, 2 * e + 4)
        M[sl, sl] += (B * (w * grid.hx)) @ B.T
    f = grid.free_x
    return M[np.ix_(f, f)]


def weighted_half_square(grid, ws, rows, nq):
    """1/2 int rho0^2 r^2 for cell-constant-in-time Hermite rows, with an nq x nq Gauss rule."""
    x, wx, vals = eval_cells(grid, rows, nq)
    tau, wt = gauss_rule(nq)
    total = 0.0
    for c in range(grid.nt):
        t = (c + tau) * grid.dt
        X, Tt = np.meshgrid(x, t)
        _, _, _, lr0, _ = ws.phi_xi_rho(X, Tt)
        total += 0.5 * np.sum(np.outer(wt * grid.dt, wx) * np.exp(2 * lr0) * vals[c][None, :] ** 2)
    return total
