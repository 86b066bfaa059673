"""Competing linearizations of the semilinear control problem.

Every step solves one linear null-control problem with the minimal weighted
cost and returns the controlled pair:

    PicardGtilde / WeightedPicard  A = g~(y_k),          B = 0,                    z0 = u0
    NewtonUndamped                 the least-squares direction with unit step
    ControlledVariant              A = g'(y_k),          B = g'(y_k) y_k - g(y_k), z0 = u0
    FixedPointK                    A = 0,                B = -g(z_k),              z0 = u0

The linear solves need s >= max(|A|^(2/3), s0).  WeightedPicard keeps s fixed
and stops with a failure when a step violates the bound; the other methods
raise s to the required value before the step.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import CellField, Field, SpaceTimeGrid
from .leastsquares import (ControlPair, EnergyError, IterationRecord, initialize_linear, make_pair,
                           minimal_pair)
from .linear_control import LinearControlProblem, NeedLargerS, SolverFailure, reconstruct, solve_adjoint
from .nonlinearity import NonlinearitySpec
from .weights import WeightParams, WeightSet


class BaselineKind(str, enum.Enum):
    PicardGtilde = "PicardGtilde"
    NewtonUndamped = "NewtonUndamped"
    ControlledVariant = "ControlledVariant"
    FixedPointK = "FixedPointK"
    WeightedPicard = "WeightedPicard"

    @classmethod
    def parse(cls, name: str) -> "BaselineKind":
        key = name.replace("_", "").replace("-", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        aliases = {"picard": cls.PicardGtilde, "newton": cls.NewtonUndamped, "variant": cls.ControlledVariant,
                   "fixedpoint": cls.FixedPointK, "k": cls.FixedPointK, "lambdas": cls.WeightedPicard}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown baseline {name!r}")


@dataclass(frozen=True)
class BaselineConfig:
    """max_steps caps the run; |y|_inf > 10 M_cap classifies it as divergent."""
    max_steps: int = 50
    M_cap: float = 1e6
    tolE: float | None = None
    step_tol: float = 1e-12
    s_init: float = 1.0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if not self.M_cap > 0:
            raise ValueError("M_cap must be positive")


def _solve(grid, ws, A, B, z0, check_s=True):
    problem = LinearControlProblem(grid, ws, A, B, z0, check_s)
    return reconstruct(problem, solve_adjoint(problem))


def picard_step(y_k: Field, u0, ws: WeightSet, g: NonlinearitySpec, check_s: bool = True):
    """Controlled pair of d_t y - d_xx y + g~(y_k) y = f 1_omega, y(0) = u0."""
    sol = _solve(y_k.grid, ws, g.gtilde(y_k.values()), None, u0, check_s)
    return sol.z, sol.v


def newton_step(pair: ControlPair, ws: WeightSet, g: NonlinearitySpec) -> ControlPair:
    """(y, f) - (Y, F) with the least-squares direction and no line search."""
    d = minimal_pair(pair, ws, g)
    return make_pair(pair.y - d.Y, pair.f - d.F, g, ws)


def variant_step(y_k: Field, u0, ws: WeightSet, g: NonlinearitySpec):
    """Controlled pair of d_t y - d_xx y + g'(y_k) y = f 1_omega + g'(y_k) y_k - g(y_k)."""
    yv = y_k.values()
    gp = g.gprime(yv)
    sol = _solve(y_k.grid, ws, gp, gp * yv - g.g(yv), u0)
    return sol.z, sol.v


def fixedpointK_step(z_k: Field, u0, ws: WeightSet, g: NonlinearitySpec):
    """Controlled pair of d_t y - d_xx y = f 1_omega - g(z_k)."""
    sol = _solve(z_k.grid, ws, None, -g.g(z_k.values()), u0, check_s=False)
    return sol.z, sol.v


def contraction_ratio(z1: Field, z2: Field, u0, ws: WeightSet, g: NonlinearitySpec) -> float:
    """|rho (K z1 - K z2)| / |rho (z1 - z2)| for the fixed-point operator K."""
    qw = ws.on_grid(z1.grid)
    k1, _ = fixedpointK_step(z1, u0, ws, g)
    k2, _ = fixedpointK_step(z2, u0, ws, g)
    den = qw.norm((z1 - z2).values(), "rho")
    return qw.norm((k1 - k2).values(), "rho") / den if den > 0 else 0.0


def _required_s(kind: BaselineKind, y: Field, g: NonlinearitySpec, s0: float) -> float:
    if kind is BaselineKind.FixedPointK:
        return s0
    A = g.gtilde(y.values()) if kind in (BaselineKind.PicardGtilde, BaselineKind.WeightedPicard) \
        else g.gprime(y.values())
    return max(float(np.abs(A).max()) ** (2 / 3), s0)


@dataclass
class BaselineResult:
    method: str
    pair: ControlPair
    records: list
    status: str  # converged | diverged | not_converged | failed
    s: float
    E0: float
    tolE: float
    terminal_norm: float
    message: str = ""
    step_norms: list = field(default_factory=list)
    initial: ControlPair | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def diverged(self) -> bool:
        return self.status in ("diverged", "not_converged")

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    def classification(self) -> dict:
        return {"method": self.method, "status": self.status, "iterations": self.iterations,
                "message": self.message, "final_y_sup": self.records[-1].y_sup if self.records else float("nan")}


def run_baseline(kind, g: NonlinearitySpec, u0, grid: SpaceTimeGrid, weight_params: WeightParams | None = None,
                 config: BaselineConfig | None = None) -> BaselineResult:
    """Iterate one baseline from the linear controlled pair until convergence, divergence or the cap."""
    kind = BaselineKind.parse(kind) if isinstance(kind, str) else kind
    cfg = config or BaselineConfig()
    base = weight_params or WeightParams(T=grid.T, omega=grid.omega)
    s = max(cfg.s_init, base.s0)
    ws = WeightSet(base.with_s(s))
    t0 = time.perf_counter()
    pair, _ = initialize_linear(u0, grid, ws, g)
    first = pair
    E0 = pair.E_value
    tolE = cfg.tolE if cfg.tolE is not None else 1e-8 * (1 + math.sqrt(E0))
    records = [IterationRecord(0, E0, float("nan"), pair.y.sup_norm(), s, float("nan"), float("nan"),
                               time.perf_counter() - t0)]
    steps = []
    status, msg = "not_converged", f"no convergence within {cfg.max_steps} steps"
    guard = cfg.M_cap if kind is BaselineKind.WeightedPicard else 10 * cfg.M_cap
    for k in range(1, cfg.max_steps + 1):
        if math.sqrt(pair.E_value) <= tolE:
            status, msg = "converged", ""
            break
        try:
            if kind is not BaselineKind.WeightedPicard:
                need = _required_s(kind, pair.y, g, base.s0)
                if need > s:
                    s = need * (1 + 1e-9)
                    ws = WeightSet(base.with_s(s))
                    pair = make_pair(pair.y, pair.f, g, ws)
            if kind is BaselineKind.PicardGtilde:
                y, f = picard_step(pair.y, u0, ws, g)
            elif kind is BaselineKind.WeightedPicard:
                y, f = picard_step(pair.y, u0, ws, g)
            elif kind is BaselineKind.ControlledVariant:
                y, f = variant_step(pair.y, u0, ws, g)
            elif kind is BaselineKind.FixedPointK:
                y, f = fixedpointK_step(pair.y, u0, ws, g)
            else:
                new = newton_step(pair, ws, g)
                y, f = new.y, new.f
        except NeedLargerS as err:
            status, msg = "failed", str(err)
            break
        except SolverFailure as err:
            status, msg = "failed", f"linear solver: {err}"
            break
        y_sup = y.sup_norm()
        if not math.isfinite(y_sup) or y_sup > guard:
            records.append(IterationRecord(k, float("inf"), 1.0, y_sup, s, float("nan"), float("nan"),
                                           time.perf_counter() - t0))
            status, msg = "diverged", f"|y|_inf = {y_sup:.3g} exceeds {guard:.3g} at step {k}"
            break
        try:
            new = make_pair(y, f, g, ws)
        except (EnergyError, FloatingPointError) as err:
            status, msg = "diverged", f"residual overflow at step {k}: {err}"
            break
        qw = ws.on_grid(grid)
        step = qw.norm((new.y - pair.y).values(), "rho")
        ref = qw.norm(new.y.values(), "rho")
        steps.append(step)
        pair = new
        records.append(IterationRecord(k, pair.E_value, 1.0, y_sup, s, float("nan"), float("nan"),
                                       time.perf_counter() - t0))
        if kind is not BaselineKind.NewtonUndamped and step <= cfg.step_tol * max(ref, 1e-300):
            # fixed point reached: converged only if it solves the semilinear problem
            if math.sqrt(pair.E_value) <= tolE:
                status, msg = "converged", ""
            else:
                status, msg = "not_converged", f"stagnated at sqrt E = {pair.sqrtE:.3g}"
            break
    else:
        if math.sqrt(pair.E_value) <= tolE:
            status, msg = "converged", ""
    return BaselineResult(kind.value, pair, records, status, s, E0, tolE, pair.y.terminal_l2(), msg, steps, first)
