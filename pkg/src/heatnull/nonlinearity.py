"""Catalog of nonlinearities g with g(0) = 0, their derivatives and growth/Hoelder data."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr


class NonlinearityError(ValueError):
    pass


def _log32(r):
    return np.log1p(np.abs(r)) ** 1.5


@dataclass(frozen=True)
class NonlinearitySpec:
    name: str
    g: Callable
    gprime: Callable
    alpha: float
    beta: float
    p: float
    holder_seminorm: float
    gsecond: Callable | None = None
    params: dict = field(default_factory=dict)

    def gtilde(self, r):
        """g(r)/r, continuous through r = 0."""
        r = np.asarray(r, dtype=float)
        small = np.abs(r) < 1e-8
        safe = np.where(small, 1.0, r)
        # mean-value form g'(r/2) is second-order accurate on the tiny band
        return np.where(small, self.gprime(0.5 * r), self.g(safe) / safe)

    def growth(self, r):
        """psi(r) = alpha + beta ln^{3/2}(1+|r|)."""
        return self.alpha + self.beta * _log32(r)

    def remainder(self, y, dY):
        """g(y + dY) - g(y) - g'(y) dY."""
        return self.g(y + dY) - self.g(y) - self.gprime(y) * dY

    def describe(self) -> dict:
        return {"name": self.name, "alpha": self.alpha, "beta": self.beta, "p": self.p,
                "holder_seminorm": self.holder_seminorm, **{f"param_{k}": v for k, v in self.params.items()}}


def _sup_on_log_grid(fun, rmax=1e8, n=20001) -> float:
    r = np.concatenate([[0.0], np.logspace(-8, np.log10(rmax), n)])
    return float(np.max(np.abs(np.concatenate([fun(r), fun(-r)]))))


def zero() -> NonlinearitySpec:
    z = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    return NonlinearitySpec("zero", z, z, 0.0, 0.0, 1.0, 0.0, z)


def linear(b: float) -> NonlinearitySpec:
    b = float(b)
    return NonlinearitySpec(
        f"linear({b:g})",
        lambda r: b * np.asarray(r, dtype=float),
        lambda r: np.full_like(np.asarray(r, dtype=float), b),
        abs(b), 0.0, 1.0, 0.0,
        lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        {"b": b},
    )


def loglim(b: float, c: float) -> NonlinearitySpec:
    """g(r) = b r + c r ln^{3/2}(1+|r|)."""
    b, c = float(b), float(c)

    def g(r):
        r = np.asarray(r, dtype=float)
        return b * r + c * r * _log32(r)

    def gp(r):
        a = np.abs(np.asarray(r, dtype=float))
        L = np.log1p(a)
        return b + c * (L**1.5 + 1.5 * a * np.sqrt(L) / (1 + a))

    def gpp(r):
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        L = np.log1p(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(a > 0, 0.75 * a / np.sqrt(np.where(L > 0, L, 1.0)), 0.0)
        return np.sign(r) * c * (1.5 * np.sqrt(L) / (1 + a) + (1.5 * np.sqrt(L) + tail) / (1 + a) ** 2)

    # 1.5 sqrt(L) <= L^{3/2} + 1/sqrt(2) gives |g'| <= |b| + |c|/sqrt2 + 2|c| L^{3/2}
    return NonlinearitySpec(f"loglim({b:g},{c:g})", g, gp, abs(b) + abs(c) / np.sqrt(2), 2 * abs(c),
                            1.0, _sup_on_log_grid(gpp), gpp, {"b": b, "c": c})


def saturated_tanh(kappa: float) -> NonlinearitySpec:
    k = float(kappa)
    return NonlinearitySpec(
        f"saturated_tanh({k:g})",
        lambda r: k * np.tanh(r),
        lambda r: k * (1 - np.tanh(r) ** 2),
        abs(k), 0.0, 1.0, abs(k) * 4 / (3 * np.sqrt(3)),
        lambda r: -2 * k * np.tanh(r) * (1 - np.tanh(r) ** 2),
        {"kappa": k},
    )


def lipschitz_sin(kappa: float) -> NonlinearitySpec:
    k = float(kappa)
    return NonlinearitySpec(
        f"lipschitz_sin({k:g})",
        lambda r: k * np.sin(r),
        lambda r: k * np.cos(r),
        abs(k), 0.0, 0.0, 2 * abs(k),
        lambda r: -k * np.sin(r),
        {"kappa": k},
    )


_BUILTINS = {"zero": (zero, 0), "linear": (linear, 1), "loglim": (loglim, 2),
             "saturated_tanh": (saturated_tanh, 1), "lipschitz_sin": (lipschitz_sin, 1)}


def builtin(name: str) -> NonlinearitySpec:
    """Parse 'zero', 'linear(b)', 'loglim(b,c)', 'saturated_tanh(k)' or 'lipschitz_sin(k)'."""
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", name or "")
    if not m or m.group(1) not in _BUILTINS:
        raise NonlinearityError(f"unknown nonlinearity {name!r}")
    fn, arity = _BUILTINS[m.group(1)]
    args = [a for a in (m.group(2) or "").split(",") if a.strip()]
    if len(args) != arity:
        raise NonlinearityError(f"{m.group(1)} takes {arity} parameter(s), got {len(args)}")
    try:
        return fn(*(float(a) for a in args))
    except ValueError:
        raise NonlinearityError(f"bad parameters in {name!r}") from None


def from_expression(g_src: str, gprime_src: str | None = None, p: float = 1.0,
                    R: float = 1e3, seed: int = 0) -> NonlinearitySpec:
    """User nonlinearity from an expression in r; g' by central differences (step 1e-6) if omitted."""
    g = expr.parse(g_src, ("r",))
    if abs(float(g(0.0))) > 1e-14:
        raise NonlinearityError(f"g(0) must vanish, got {float(g(0.0))}")
    if gprime_src:
        gp = expr.parse(gprime_src, ("r",))
    else:
        h = 1e-6

        def gp(r):
            r = np.asarray(r, dtype=float)
            return (g(r + h) - g(r - h)) / (2 * h)
    r = np.concatenate([[0.0], np.logspace(-6, 6, 2001)])
    d = np.maximum(np.abs(gp(r)), np.abs(gp(-r)))
    alpha = float(np.max(d[r <= 1.0]))
    beta = float(np.max(np.maximum(d[r > 1.0] - alpha, 0.0) / _log32(r[r > 1.0])))
    spec = NonlinearitySpec(f"expr({g_src})", g, gp, alpha, beta, float(p), np.nan,
                            params={"g": g_src, "gprime": gprime_src or ""})
    holder = estimate_holder(spec, p, R=R, seed=seed) if p > 0 else 2 * float(np.max(d))
    return NonlinearitySpec(spec.name, g, gp, alpha, beta, float(p), holder, params=spec.params)


def resolve(name: str, gprime: str | None = None, p: float = 1.0) -> NonlinearitySpec:
    """Builtin by name, otherwise an expression in r."""
    head = re.match(r"\s*([a-z_]+)", name or "")
    if head and head.group(1) in _BUILTINS:
        return builtin(name)
    try:
        return from_expression(name, gprime, p)
    except expr.ExprError as err:
        raise NonlinearityError(f"cannot interpret nonlinearity {name!r}: {err}") from None


def estimate_holder(spec: NonlinearitySpec, p: float, R: float = 1e3, n_pairs: int = 10_000,
                    seed: int = 0) -> float:
    """Empirical sup |g'(a)-g'(b)|/|a-b|^p over stratified random pairs in [-R, R].

    Pair centers are stratified over [-R, R] and separations are log-uniform
    on [1e-6, 2R]; the result is a lower bound of the true seminorm.
    """
    if not 0 < p <= 1:
        raise NonlinearityError("p must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    edges = np.linspace(-R, R, n_pairs + 1)
    a = edges[:-1] + rng.random(n_pairs) * np.diff(edges)
    delta = np.exp(rng.uniform(np.log(1e-6), np.log(2 * R), n_pairs)) * rng.choice([-1.0, 1.0], n_pairs)
    b = np.clip(a + delta, -R, R)
    keep = a != b
    a, b = a[keep], b[keep]
    ratio = np.abs(spec.gprime(a) - spec.gprime(b)) / np.abs(a - b) ** p
    return float(np.max(ratio)) if ratio.size else 0.0
