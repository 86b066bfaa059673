"""Carleman weight family theta, phi, xi and rho, rho0, rho1, carried in log space.

    phi = theta(t) (lam e^{12 lam} - e^{lam psihat(x)}),   xi = theta(t) e^{lam psihat(x)}
    log rho = scale * s * phi,  log rho0 = log rho - 1.5 log xi,  log rho1 = log rho - log xi

scale = 1 with theta_max = inf reproduces the textbook weights.  Those span
hundreds of thousands of e-folds at s = 1, so the solvers run by default with
exponent scale 1e-6 and theta capped at 32.  The cap keeps the jump of log rho
between consecutive time levels near T of order one on desk-scale meshes;
without it the discrete control problems lose positive definiteness in double
precision.  WeightParams.textbook() gives the unscaled family.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .grid import Field, SpaceTimeGrid


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightParams:
    s: float = 1.0
    T: float = 0.5
    omega: tuple[float, float] = (0.2, 0.8)
    lambda0: float = 1.0
    T1: float | None = None
    s0: float = 1.0
    xstar: float | None = None
    exponent_scale: float = 1e-6
    theta_max: float = 32.0

    def __post_init__(self):
        if not self.s >= 1.0:
            raise WeightError(f"s must be >= 1, got {self.s}")
        if not self.lambda0 >= 1.0:
            raise WeightError(f"lambda0 must be >= 1, got {self.lambda0}")
        if not self.s0 >= 1.0:
            raise WeightError(f"s0 must be >= 1, got {self.s0}")
        if not self.T > 0:
            raise WeightError("T must be positive")
        a, b = self.omega
        if not 0 < a < b < 1:
            raise WeightError(f"bad control interval {self.omega}")
        T1_cap = min(0.25, 3 * self.T / 8)
        if self.T1 is None:
            object.__setattr__(self, "T1", 0.5 * T1_cap)
        if not 0 < self.T1 < T1_cap:
            raise WeightError(f"T1 must lie in (0, {T1_cap}), got {self.T1}")
        if self.xstar is None:
            object.__setattr__(self, "xstar", 0.5 * (a + b))
        if not a < self.xstar < b:
            raise WeightError(f"xstar={self.xstar} must lie inside the control interval {self.omega}")
        if not self.exponent_scale > 0:
            raise WeightError("exponent_scale must be positive")
        if not self.theta_max >= 2.0:
            raise WeightError("theta_max must be >= 2 (theta(0) = 2)")

    @classmethod
    def textbook(cls, **kw) -> "WeightParams":
        """Unscaled, uncapped weights (for identity checks, not for solving)."""
        return cls(exponent_scale=1.0, theta_max=np.inf, **kw)

    @property
    def mu(self) -> float:
        return self.s * self.lambda0**2 * np.exp(2 * self.lambda0)

    def with_s(self, s: float) -> "WeightParams":
        return replace(self, s=float(s))


def make_psi_tilde(omega, xstar: float) -> tuple[Callable, Callable]:
    """C1 profile vanishing at 0 and 1 with its only critical point at xstar.

    Returns (psi, dpsi).  Each side of xstar is a parabola reaching 0.99 at
    xstar, so for xstar = 1/2 this is 3.96 x (1 - x).
    """
    a, b = omega
    if not a < xstar < b:
        raise WeightError(f"xstar={xstar} must lie in ({a}, {b})")
    left, right = xstar, 1.0 - xstar

    def psi(x):
        x = np.asarray(x, dtype=float)
        u = np.where(x < xstar, (x - xstar) / left, (x - xstar) / right)
        return 0.99 * (1.0 - u * u)

    def dpsi(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < xstar, -1.98 * (x - xstar) / left**2, -1.98 * (x - xstar) / right**2)

    return psi, dpsi


def _quintic_bridge(T1: float) -> np.ndarray:
    """Coefficients of h(tau), tau in [0,1], joining (1,0,0) to (1/T1, 1/T1, 2/T1) in (h, h', h'')."""
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    rhs = np.array([1.0, 0.0, 0.0, 1 / T1, 1 / T1, 2 / T1])
    return np.linalg.solve(A, rhs)


def _bridge_is_monotone(c: np.ndarray) -> bool:
    tau = np.linspace(0, 1, 2001)
    d = np.polynomial.polynomial.polyval(tau, np.polynomial.polynomial.polyder(c))
    return bool(np.all(d >= -1e-12))


class WeightSet:
    """Evaluators for the weight family at arbitrary points and on quadrature grids."""

    def __init__(self, params: WeightParams):
        self.params = params
        T1 = params.T1
        coef = _quintic_bridge(T1)
        while not _bridge_is_monotone(coef):
            T1 *= 0.8
            coef = _quintic_bridge(T1)
        self.T1 = T1
        self._bridge = coef
        self.psi_tilde, self.dpsi_tilde = make_psi_tilde(params.omega, params.xstar)
        self._cache: dict = {}

    @property
    def s(self) -> float:
        return self.params.s

    @property
    def lam(self) -> float:
        return self.params.lambda0

    def psi_hat(self, x):
        return self.psi_tilde(x) + 6.0

    def theta(self, t, clip: float | None = None):
        """Time profile; clip (a time < T) freezes theta beyond it, theta_max caps it."""
        p = self.params
        T, T1 = p.T, self.T1
        t = np.asarray(t, dtype=float)
        if np.any(t >= T) or np.any(t < 0):
            raise WeightError("theta is defined on [0, T)")
        if clip is not None:
            t = np.minimum(t, clip)
        out = np.ones_like(t)
        early = t <= T / 4
        base = np.clip(1.0 - 4.0 * t[early] / T, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            out[early] = 1.0 + np.exp(p.mu * np.log(base))
        mid = (t > T - 2 * T1) & (t < T - T1)
        tau = (t[mid] - (T - 2 * T1)) / T1
        out[mid] = np.polynomial.polynomial.polyval(tau, self._bridge)
        late = t >= T - T1
        out[late] = 1.0 / (T - t[late])
        return np.minimum(out, p.theta_max)

    def phi_xi(self, x, t, clip: float | None = None):
        lam = self.lam
        th = self.theta(t, clip)
        e = np.exp(lam * self.psi_hat(x))
        phi = th * (lam * np.exp(12 * lam) - e)
        log_xi = np.log(th) + lam * self.psi_hat(x)
        return phi, log_xi

    def phi_xi_rho(self, x, t, clip: float | None = None):
        """Return (phi, xi, log_rho, log_rho0, log_rho1) at broadcast points (x, t)."""
        phi, log_xi = self.phi_xi(x, t, clip)
        log_rho = self.params.exponent_scale * self.s * phi
        return phi, np.exp(log_xi), log_rho, log_rho - 1.5 * log_xi, log_rho - log_xi

    @cached_property
    def c(self) -> float:
        """sup_x phi(x, 0)."""
        x = np.linspace(0, 1, 4001)
        phi, _ = self.phi_xi(x, np.zeros_like(x))
        return float(phi.max())

    def clip_time(self, grid: SpaceTimeGrid) -> float:
        return grid.T * (1.0 - 1.0 / (2 * grid.nt))

    def on_grid(self, grid: SpaceTimeGrid) -> "QuadWeights":
        key = (grid.nx, grid.nt, grid.T, grid.omega, grid.nq)
        if key not in self._cache:
            if abs(grid.T - self.params.T) > 1e-14 * grid.T:
                raise WeightError("grid horizon differs from the weight horizon")
            self._cache[key] = QuadWeights(self, grid)
        return self._cache[key]

    def dump_rows(self, grid: SpaceTimeGrid) -> np.ndarray:
        """Rows x, t, theta, phi, xi, log_rho, log_rho0, log_rho1 on the quadrature lattice."""
        X, Tt = np.meshgrid(grid.xq, grid.tq)
        clip = self.clip_time(grid)
        th = self.theta(Tt, clip)
        phi, xi, lr, lr0, lr1 = self.phi_xi_rho(X, Tt, clip)
        return np.column_stack([a.ravel() for a in (X, Tt, th, phi, xi, lr, lr0, lr1)])


class QuadWeights:
    """Weight arrays at the quadrature points of one grid (shape (NT, NX))."""

    def __init__(self, ws: WeightSet, grid: SpaceTimeGrid):
        self.ws, self.grid = ws, grid
        X, Tt = np.meshgrid(grid.xq, grid.tq)
        clip = ws.clip_time(grid)
        self.theta = ws.theta(grid.tq, clip)
        self.phi, self.xi, self.log_rho, self.log_rho0, self.log_rho1 = ws.phi_xi_rho(X, Tt, clip)
        for a in (self.phi, self.xi, self.log_rho, self.log_rho0, self.log_rho1):
            a.setflags(write=False)
        # weights of the initial slice t = 0 at the spatial quadrature points
        _, _, self.log_rho_t0, _, _ = ws.phi_xi_rho(grid.xq, np.zeros_like(grid.xq))

    def norm(self, u, which: str = "rho0", region: str = "QT") -> float:
        from .grid import weighted_l2_norm
        lw = {"rho": self.log_rho, "rho0": self.log_rho0, "rho1": self.log_rho1,
              "one": None}[which]
        if isinstance(u, Field):
            u = u.values()
        if lw is None:
            return weighted_l2_norm(u, self.grid, region=region)
        return weighted_l2_norm(u, self.grid, region=region, log_weight=lw)


def _log_integral(W, log_w, u) -> float:
    """log of sum W exp(log_w) u^2, -inf when the integrand vanishes."""
    mask = (W > 0) & (u != 0)
    if not mask.any():
        return -np.inf
    return float(logsumexp(np.log(W[mask]) + log_w[mask] + 2 * np.log(np.abs(u[mask]))))


def carleman_ratio(p: Field, A, weights: WeightSet) -> float:
    """Ratio of the two sides of the Carleman inequality for a test function p.

    Left: int rho^-2(0)|p_x(0)|^2 + s^3 lam^4 e^{14 lam} int rho^-2(0)|p(0)|^2
          + s lam^2 int rho1^-2 |p_x|^2 + s^3 lam^4 int rho0^-2 |p|^2.
    Right: int rho^-2 |-p_t - p_xx + A p|^2 + s^3 lam^4 int_{q_T} rho0^-2 |p|^2.
    Zero when p vanishes.
    """
    g = p.grid
    qw = weights.on_grid(g)
    s, lam = weights.s, weights.lam
    A = np.broadcast_to(np.asarray(A.values() if isinstance(A, Field) else A, dtype=float), g.shape_q)
    pv, px = p.values(), p.dx()
    Lp = -p.dt() - p.dxx() + A * pv
    p0, p0x = g.Ex(0) @ p.dofs[0], g.Ex(1) @ p.dofs[0]
    c3 = np.log(s**3 * lam**4)
    lhs = [
        _log_integral(g.wx, -2 * qw.log_rho_t0, p0x),
        c3 + 14 * lam + _log_integral(g.wx, -2 * qw.log_rho_t0, p0),
        np.log(s * lam**2) + _log_integral(g.W, -2 * qw.log_rho1, px),
        c3 + _log_integral(g.W, -2 * qw.log_rho0, pv),
    ]
    rhs = [
        _log_integral(g.W, -2 * qw.log_rho, Lp),
        c3 + _log_integral(g.W * g.chi[None, :], -2 * qw.log_rho0, pv),
    ]
    l, r = logsumexp(lhs), logsumexp(rhs)
    if not np.isfinite(l):
        return 0.0
    return float(np.exp(l - r))
