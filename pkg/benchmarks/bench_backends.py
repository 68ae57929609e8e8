"""Compare the compiled Euler kernel with the numpy fallback.

Usage: python3 benchmarks/bench_backends.py [--iters 500] [--repeats 3]

Both backends run a fixed number of iterations (tolerances set to zero) on
the same seeded problem, so the timings measure per-iteration cost only.
"""
import argparse
import time

import numpy as np

from lpnn_lca import _fallback
from lpnn_lca.experiments import make_problem
from lpnn_lca.solvers import Variant

try:
    from lpnn_lca import _kernels
except ImportError:
    _kernels = None

SIZES = [(64, 32, 4), (512, 160, 15), (4096, 600, 100)]


def run(mod, problem, variant, mu, iters):
    u = np.zeros(problem.n)
    lam = np.zeros(problem.m)
    t0 = time.perf_counter()
    res = mod.euler_solve(problem.phi.entries, problem.b, u, lam, int(variant), mu, 1.0,
                          iters, 0.0, 0.0, None, None)
    return time.perf_counter() - t0, res, u


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=500)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--variant", default="improved-augmented")
    args = ap.parse_args()
    variant = Variant.parse(args.variant)
    if _kernels is None:
        print("compiled kernel not built; only the fallback is available")
    print(f"{'n':>6} {'m':>5} {'compiled ms/it':>15} {'python ms/it':>13} {'speedup':>8} {'max |du|':>9}")
    for n, m, omega in SIZES:
        p = make_problem(n, m, omega, 0.0, seed=0)
        times = {}
        states = {}
        for name, mod in (("compiled", _kernels), ("python", _fallback)):
            if mod is None:
                continue
            best = min(run(mod, p, variant, 0.1, args.iters)[0] for _ in range(args.repeats))
            times[name] = 1e3 * best / args.iters
            states[name] = run(mod, p, variant, 0.1, args.iters)[2]
        c, py = times.get("compiled", np.nan), times["python"]
        diff = (float(np.abs(states["compiled"] - states["python"]).max())
                if "compiled" in states else np.nan)
        print(f"{n:>6} {m:>5} {c:>15.4f} {py:>13.4f} {py / c:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
