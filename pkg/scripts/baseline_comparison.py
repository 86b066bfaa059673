"""Least squares against the baseline linearizations on logarithmic nonlinearities with growing data."""
import argparse

import numpy as np

from heatnull import BaselineConfig, BaselineKind, LSConfig, make_grid, resolve, run_baseline, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--g", default="loglim(0,1)")
    ap.add_argument("--amplitudes", default="1,10,100,1000")
    args = ap.parse_args()
    grid = make_grid(args.n, args.n, 0.5, (0.2, 0.8))
    g = resolve(args.g)
    kinds = [BaselineKind.PicardGtilde, BaselineKind.NewtonUndamped, BaselineKind.ControlledVariant,
             BaselineKind.WeightedPicard]
    print(f"{'amp':>7} {'method':>18} {'status':>14} {'iters':>5} {'sqrtE':>10} {'s':>7}")
    for amp in (float(a) for a in args.amplitudes.split(",")):
        u0 = lambda x, a=amp: a * np.sin(np.pi * x)
        res = solve(LSConfig(), g, u0, grid)
        print(f"{amp:7g} {'leastsquares':>18} {res.status:>14} {res.iterations:5d} {res.pair.sqrtE:10.2e} "
              f"{res.s:7.3g}")
        for kind in kinds:
            b = run_baseline(kind, g, u0, grid, config=BaselineConfig(max_steps=30))
            print(f"{amp:7g} {kind.value:>18} {b.status:>14} {b.iterations:5d} {b.pair.sqrtE:10.2e} {b.s:7.3g}")


if __name__ == "__main__":
    main()
