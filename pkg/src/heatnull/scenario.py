"""Scenario files: a TOML subset describing one run.

Layout (all sections optional except [grid] with omega):

    name = "loglim_small"
    method = "leastsquares"        # or PicardGtilde, NewtonUndamped, ControlledVariant,
                                   #    FixedPointK, WeightedPicard
    seed = 0
    output = "runs/loglim_small"   # relative to the scenario file

    [grid]      nx, nt, T, omega = [a, b], nq
    [weights]   s0, lambda0, T1, xstar, exponent_scale, theta_max
    [nonlinearity]  g = "loglim(0,0.5)" or an expression in r; gprime; p
    [u0]        expr = "sin(pi*x)"  or  preset = "sine" | "two_modes" | "bump"; amplitude
    [solver]    m, tolE, max_iter, s_init, s_growth, max_restarts, M_cap, init, max_steps

Keys are validated; unknown keys are configuration errors.  The lock file is
the same layout with every default filled in.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import expr
from .baselines import BaselineConfig, BaselineKind
from .grid import GridError, SpaceTimeGrid, make_grid
from .leastsquares import LSConfig
from .nonlinearity import NonlinearityError, NonlinearitySpec, resolve
from .weights import WeightError, WeightParams


class ConfigError(ValueError):
    pass


PRESETS = {
    "sine": "sin(pi*x)",
    "two_modes": "sin(pi*x) + 0.5*sin(2*pi*x)",
    "bump": "16*x^2*(1-x)^2",
}


@dataclass
class GridSpec:
    nx: int = 32
    nt: int = 32
    T: float = 0.5
    omega: tuple = ()
    nq: int = 4


@dataclass
class WeightSpec:
    s0: float = 1.0
    lambda0: float = 1.0
    T1: float | None = None
    xstar: float | None = None
    exponent_scale: float = 1e-6
    theta_max: float = 32.0


@dataclass
class NonlinearityCfg:
    g: str = "zero"
    gprime: str = ""
    p: float | None = None


@dataclass
class U0Spec:
    expr: str = ""
    preset: str = "sine"
    amplitude: float = 1.0

    def source(self) -> str:
        base = self.expr or PRESETS.get(self.preset)
        if base is None:
            raise ConfigError(f"unknown u0 preset {self.preset!r}; choose from {sorted(PRESETS)}")
        return base if self.amplitude == 1.0 else f"{self.amplitude!r}*({base})"


@dataclass
class SolverSpec:
    m: float = 2.0
    tolE: float | None = None
    max_iter: int = 50
    s_init: float = 1.0
    s_growth: float = 1.5
    max_restarts: int = 5
    M_cap: float = 1e6
    init: str = "linear"
    max_steps: int = 50


@dataclass
class Scenario:
    name: str = "scenario"
    solver: str = "leastsquares"
    seed: int = 0
    output: str = ""
    grid: GridSpec = field(default_factory=GridSpec)
    weights: WeightSpec = field(default_factory=WeightSpec)
    nonlinearity: NonlinearityCfg = field(default_factory=NonlinearityCfg)
    u0: U0Spec = field(default_factory=U0Spec)
    solver_options: SolverSpec = field(default_factory=SolverSpec)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    # builders -------------------------------------------------------------
    def build_grid(self) -> SpaceTimeGrid:
        g = self.grid
        try:
            return make_grid(g.nx, g.nt, g.T, tuple(g.omega), g.nq)
        except GridError as err:
            raise ConfigError(str(err)) from None

    def build_weights(self, grid: SpaceTimeGrid) -> WeightParams:
        w = self.weights
        try:
            return WeightParams(T=grid.T, omega=grid.omega, lambda0=w.lambda0, T1=w.T1, s0=w.s0,
                                xstar=w.xstar, exponent_scale=w.exponent_scale, theta_max=w.theta_max)
        except WeightError as err:
            raise ConfigError(str(err)) from None

    def build_nonlinearity(self) -> NonlinearitySpec:
        n = self.nonlinearity
        try:
            spec = resolve(n.g, n.gprime or None, 1.0 if n.p is None else n.p)
        except NonlinearityError as err:
            raise ConfigError(str(err)) from None
        if n.p is not None and abs(n.p - spec.p) > 0 and spec.name.startswith(("loglim", "lipschitz", "linear",
                                                                                  "zero", "saturated")):
            spec = replace(spec, p=float(n.p))
        return spec

    def build_u0(self):
        try:
            f = expr.parse(self.u0.source(), ("x",))
        except expr.ExprError as err:
            raise ConfigError(f"u0: {err}") from None
        ends = np.asarray(f(np.array([0.0, 1.0])), dtype=float)
        if not np.all(np.isfinite(ends)) or np.max(np.abs(ends)) > 1e-10 * max(1.0, abs(self.u0.amplitude)):
            raise ConfigError(f"u0 must vanish at x = 0 and x = 1, got {ends.tolist()}")
        return f

    def ls_config(self) -> LSConfig:
        o = self.solver_options
        try:
            return LSConfig(m=o.m, tolE=o.tolE, max_iter=o.max_iter, s_init=o.s_init, s_growth=o.s_growth,
                            max_restarts=o.max_restarts, M_cap=o.M_cap)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def baseline_config(self) -> BaselineConfig:
        o = self.solver_options
        try:
            return BaselineConfig(max_steps=o.max_steps, M_cap=o.M_cap, tolE=o.tolE, s_init=o.s_init)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def method(self) -> str:
        if self.solver.lower() in ("leastsquares", "ls"):
            return "leastsquares"
        try:
            return BaselineKind.parse(self.solver).value
        except ValueError:
            raise ConfigError(f"unknown solver {self.solver!r}") from None

    def output_dir(self, override=None) -> Path:
        if override:
            return Path(override)
        if self.output:
            p = Path(self.output)
            return p if p.is_absolute() else self.base_dir / p
        return self.base_dir / "runs" / self.name

    def validate(self) -> "Scenario":
        """Build every object once so that configuration errors surface before any solve."""
        if not self.grid.omega:
            raise ConfigError("grid.omega (the control interval) is required")
        if self.solver_options.init not in ("linear", "cutoff"):
            raise ConfigError(f"solver.init must be 'linear' or 'cutoff', got {self.solver_options.init!r}")
        grid = self.build_grid()
        self.build_weights(grid)
        self.build_nonlinearity()
        self.build_u0()
        self.method()
        self.ls_config()
        self.baseline_config()
        return self

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        def clean(d):
            return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}
        return {"name": self.name, "solver": self.solver, "seed": self.seed, "output": self.output,
                "grid": clean(asdict(self.grid)), "weights": clean(asdict(self.weights)),
                "nonlinearity": clean(asdict(self.nonlinearity)), "u0": clean(asdict(self.u0)),
                "solver_options": clean(asdict(self.solver_options))}


_SECTIONS = {"grid": GridSpec, "weights": WeightSpec, "nonlinearity": NonlinearityCfg, "u0": U0Spec,
             "solver": SolverSpec}
_TOP = {"name": str, "method": str, "seed": int, "output": str}


def _coerce(cls, table, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, val in table.items():
        if key not in known:
            raise ConfigError(f"unknown key {where}.{key}")
        default = known[key].default
        if key == "omega":
            if not (isinstance(val, list) and len(val) == 2):
                raise ConfigError("grid.omega must be a list [a, b]")
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
                raise ConfigError("grid.omega entries must be numbers")
            val = tuple(float(v) for v in val)
        elif isinstance(default, int):
            if isinstance(val, bool):
                raise ConfigError(f"{where}.{key} must be an integer")
            if isinstance(val, float) and val.is_integer():
                val = int(val)
            if not isinstance(val, int):
                raise ConfigError(f"{where}.{key} must be an integer")
        elif isinstance(default, float) or default is None:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"{where}.{key} must be a number")
            val = float(val)
            if math.isnan(val):
                raise ConfigError(f"{where}.{key} is NaN")
        elif isinstance(default, str) and not isinstance(val, str):
            raise ConfigError(f"{where}.{key} must be a string")
        kw[key] = val
    return cls(**kw)


def from_dict(data: dict, base_dir: Path = Path(".")) -> Scenario:
    data = dict(data)
    # "solver" may be the method name (string) or the options table
    method = data.pop("method", None)
    solver = data.pop("solver", None)
    opts = {}
    if isinstance(solver, str):
        method = method or solver
    elif isinstance(solver, dict):
        opts = solver
    elif solver is not None:
        raise ConfigError("solver must be a method name or a table")
    top = {}
    for key in list(data):
        if key in _SECTIONS:
            continue
        if key not in _TOP:
            raise ConfigError(f"unknown key {key}")
        val = data.pop(key)
        if not isinstance(val, _TOP[key]) or isinstance(val, bool):
            raise ConfigError(f"{key} must be of type {_TOP[key].__name__}")
        top[key] = val
    if "method" in opts:
        method = method or opts.pop("method")
    if method is not None and not isinstance(method, str):
        raise ConfigError("method must be a string")
    sc = Scenario(name=str(top.get("name", "scenario")), solver=str(method or "leastsquares"),
                  seed=int(top.get("seed", 0)), output=str(top.get("output", "")), base_dir=base_dir)
    sc.grid = _coerce(GridSpec, data.get("grid", {}), "grid")
    sc.weights = _coerce(WeightSpec, data.get("weights", {}), "weights")
    sc.nonlinearity = _coerce(NonlinearityCfg, data.get("nonlinearity", {}), "nonlinearity")
    sc.u0 = _coerce(U0Spec, data.get("u0", {}), "u0")
    sc.solver_options = _coerce(SolverSpec, opts, "solver")
    return sc


def loads(text: str, base_dir: Path = Path(".")) -> Scenario:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"cannot parse scenario: {err}") from None
    return from_dict(data, base_dir)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read scenario {path}: {err}") from None
    return loads(text, path.parent)


def lock_text(sc: Scenario) -> str:
    """Resolved scenario with all defaults, loadable by load()."""
    d = sc.to_dict()
    out = {"name": d["name"], "method": sc.method(), "seed": d["seed"], "output": d["output"],
           "grid": d["grid"], "weights": d["weights"], "nonlinearity": d["nonlinearity"], "u0": d["u0"],
           "solver": d["solver_options"]}
    return tomli_w.dumps(out)
