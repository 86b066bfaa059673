"""Terminal norm of the linear null control (g = 0, u0 = sin(pi x)) on a sequence of meshes."""
import argparse
import time

import numpy as np

from heatnull import WeightParams, WeightSet, make_grid, solve_null_control


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--meshes", default="16,32,64,128")
    ap.add_argument("--s", type=float, default=1.0)
    args = ap.parse_args()
    u0 = lambda x: np.sin(np.pi * x)
    prev = None
    print(f"{'n':>5} {'|z(T)|/|u0|':>14} {'ratio':>10} {'J':>12} {'gap':>10} {'sec':>6}")
    for n in (int(m) for m in args.meshes.split(",")):
        grid = make_grid(n, n, 0.5, (0.2, 0.8))
        ws = WeightSet(WeightParams(T=0.5, omega=grid.omega).with_s(args.s))
        t0 = time.perf_counter()
        sol = solve_null_control(None, None, u0, ws, grid)
        rel = sol.terminal_norm / np.sqrt(0.5)
        ratio = prev / rel if prev else float("nan")
        print(f"{n:5d} {rel:14.3e} {ratio:10.3g} {sol.J_value:12.4e} {sol.duality_gap:10.2e} "
              f"{time.perf_counter() - t0:6.2f}")
        prev = rel


if __name__ == "__main__":
    main()
