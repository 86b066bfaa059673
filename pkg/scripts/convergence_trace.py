"""Per-iteration trace (E, lambda, order estimate) of the least-squares iteration, with and without a floor stop."""
import argparse

import numpy as np

from heatnull import LSConfig, make_grid, order_estimate, resolve, solve
from heatnull.diagnostics import fit_c1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--g", default="loglim(0,0.5)")
    ap.add_argument("--amp", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--s", default="1,1.5,2.25")
    ap.add_argument("--init", default="linear", choices=["linear", "cutoff"])
    args = ap.parse_args()
    g = resolve(args.g)
    grid = make_grid(args.n, args.n, 0.5, (0.2, 0.8))
    u0 = lambda x: args.amp * np.sin(np.pi * x)
    for s in (float(v) for v in args.s.split(",")):
        res = solve(LSConfig(tolE=0.0, s_init=s), g, u0, grid, init=args.init)
        recs = res.phase_records()
        E = [r.E for r in recs]
        print(f"s = {s:g} (final {res.s:.4g}), floor {res.floor:.2e}, status {res.status}")
        for r in recs:
            print(f"  k={r.k:2d}  E={r.E:.3e}  lambda={r.lam:.4f}  |y|inf={r.y_sup:.3g}  rec.err={r.recursion_error:.1e}")
        print(f"  orders {order_estimate(E, res.floor)}  c1 {fit_c1(E, [r.lam for r in recs[1:]], g.p, res.floor):.3e}")


if __name__ == "__main__":
    main()
