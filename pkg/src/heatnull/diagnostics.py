"""Convergence-order estimation, constant fitting and refinement tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def order_estimate(E_trace, floor: float = 0.0) -> list[float]:
    """q_k = ln(sqrt E_{k+1} / sqrt E_k) / ln(sqrt E_k / sqrt E_{k-1}).

    Uses only entries above floor; triples whose denominator is below 1e-12
    in absolute value are dropped.  Fewer than three valid points give [].
    """
    e = [float(x) for x in E_trace]
    valid = []
    for x in e:
        if not (x > floor and math.isfinite(x)):
            break
        valid.append(math.sqrt(x))
    out = []
    for k in range(1, len(valid) - 1):
        den = math.log(valid[k] / valid[k - 1])
        if abs(den) < 1e-12:
            continue
        out.append(math.log(valid[k + 1] / valid[k]) / den)
    return out


def order_indices(E_trace, floor: float = 0.0) -> list[tuple[int, float]]:
    """(k, q_k) pairs, k being the index of the middle entry of the triple."""
    e = [float(x) for x in E_trace]
    n = 0
    while n < len(e) and e[n] > floor and math.isfinite(e[n]):
        n += 1
    out = []
    for k in range(1, n - 1):
        a, b, c = (math.sqrt(e[k - 1]), math.sqrt(e[k]), math.sqrt(e[k + 1]))
        den = math.log(b / a)
        if abs(den) >= 1e-12:
            out.append((k, math.log(c / b) / den))
    return out


def c1_samples(E_trace, lambdas, p: float) -> np.ndarray:
    """(sqrt E_{k+1} - |1 - lam_k| sqrt E_k) / (lam_k^{1+p} sqrt E_k^{1+p}) per step."""
    e = np.sqrt(np.asarray(E_trace, dtype=float))
    lam = np.asarray(lambdas, dtype=float)
    n = min(len(e) - 1, len(lam))
    out = []
    for k in range(n):
        if e[k] > 0 and lam[k] > 0 and np.isfinite(e[k + 1]):
            out.append((e[k + 1] - abs(1 - lam[k]) * e[k]) / (lam[k] ** (1 + p) * e[k] ** (1 + p)))
    return np.array(out)


def fit_c1(E_trace, lambdas, p: float, floor: float = 0.0) -> float:
    """Least-squares c1 in sqrt E_{k+1} - |1-lam| sqrt E_k = c1 lam^{1+p} sqrt E_k^{1+p}.

    lambdas[k] is the step from E_trace[k] to E_trace[k+1]; steps landing
    below floor are ignored.  NaN without valid steps.
    """
    e = np.sqrt(np.asarray(E_trace, dtype=float))
    lam = np.asarray(lambdas, dtype=float)
    xs, ys = [], []
    for k in range(min(len(e) - 1, len(lam))):
        if not (e[k] > 0 and lam[k] > 0 and e[k + 1] ** 2 > floor and np.isfinite(e[k + 1])):
            continue
        xs.append(lam[k] ** (1 + p) * e[k] ** (1 + p))
        ys.append(e[k + 1] - abs(1 - lam[k]) * e[k])
    if not xs:
        return float("nan")
    x, y = np.array(xs), np.array(ys)
    return float(np.dot(x, y) / np.dot(x, x))


def c1_spread(E_trace, lambdas, p: float) -> tuple[float, float]:
    s = c1_samples(E_trace, lambdas, p)
    return (float(s.min()), float(s.max())) if s.size else (float("nan"), float("nan"))


@dataclass
class ConvergenceReport:
    orders: list
    fitted_c1: float
    lambda_trace: list
    E_trace: list
    k0_predicted: int | None
    k0_observed: int | None
    floor: float
    c1_range: tuple = (float("nan"), float("nan"))
    refinement: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"orders": self.orders, "fitted_c1": self.fitted_c1, "c1_range": list(self.c1_range),
                "k0_predicted": self.k0_predicted, "k0_observed": self.k0_observed, "floor": self.floor}


def observed_onset(E_trace, floor: float, threshold: float = 1.5) -> int | None:
    """First k whose order estimate q_k reaches threshold."""
    for k, q in order_indices(E_trace, floor):
        if q >= threshold:
            return k
    return None


def convergence_report(E_trace, lambdas, p: float, floor: float) -> ConvergenceReport:
    from .leastsquares import predicted_k0
    pre = [e for e in E_trace if e > floor]
    c1 = fit_c1(E_trace, lambdas, p, floor)
    k0 = None
    if 0 < p <= 1 and np.isfinite(c1) and c1 > 0 and E_trace:
        k0 = predicted_k0(E_trace[0], c1 ** (1 / p), p)
    return ConvergenceReport(order_estimate(E_trace, floor), c1, list(lambdas), list(E_trace), k0,
                             observed_onset(E_trace, floor) if p > 0 else None, floor,
                             c1_spread(pre, lambdas[:max(len(pre) - 1, 0)], p))


def pre_floor_lambdas(E_trace, lambdas, floor: float) -> list[float]:
    """Step lengths of steps that started above the floor and did not land below it."""
    out = []
    for k, lam in enumerate(lambdas):
        if k + 1 < len(E_trace) and E_trace[k] > floor and E_trace[k + 1] > floor:
            out.append(lam)
    return out


def write_long_csv(path, series: dict) -> None:
    """Plot-ready rows series,x,y."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "x", "y"])
        for name, (xs, ys) in series.items():
            for x, y in zip(xs, ys):
                w.writerow([name, repr(float(x)), repr(float(y))])


def write_refinement_table(rows: list[dict], path_csv, path_md=None) -> None:
    if not rows:
        raise ValueError("empty refinement table")
    keys = list(rows[0])
    with open(path_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    if path_md:
        Path(path_md).write_text(markdown_table(rows))


def markdown_table(rows: list[dict]) -> str:
    keys = list(rows[0])
    lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(r[k]) for k in keys) + " |")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def refinement_study(run_one, meshes) -> list[dict]:
    """Call run_one(n) -> dict for each mesh size n (at least three levels) and add ratio columns."""
    meshes = list(meshes)
    if len(meshes) < 3:
        raise ValueError("refinement study needs at least three mesh levels")
    rows = []
    for n in meshes:
        row = {"n": n, "h": 1.0 / n}
        row.update(run_one(n))
        rows.append(row)
    for prev, cur in zip(rows, rows[1:]):
        if prev.get("terminal_norm") and cur.get("terminal_norm"):
            cur["terminal_ratio"] = prev["terminal_norm"] / cur["terminal_norm"]
    rows[0].setdefault("terminal_ratio", float("nan"))
    for r in rows:
        r.setdefault("terminal_ratio", float("nan"))
    return rows
