"""Time the compiled and pure-Python sweep backends on the same chains.

Usage::

    python3 benchmarks/bench_sweep.py --iterations 2000 --sizes 25 100 400

Both backends consume identical random arrays, so the script also checks
that they return the same draws.
"""

import argparse
import time

import numpy as np

from mstar import kernels
from mstar.data import TrueParams, simulate_dataset, standardize
from mstar.graph import build_laplacian, generate_random_connected
from mstar.sampler import McmcConfig, run_chain
from mstar.spectral import CovarianceSpec, decompose


def best_of(repeats, fn):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--m", type=int, default=10, help="rows per area")
    parser.add_argument("--sizes", type=int, nargs="+", default=[25, 100, 400])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        parser.exit(1, "compiled backend not built; run `pip install -e . --no-build-isolation`\n")

    cfg = McmcConfig(iterations=args.iterations, burn_in=args.iterations // 5, thin=1, seed=1)
    print(f"{'n':>5} {'python s':>10} {'cython s':>10} {'speedup':>8} {'cython it/s':>12}  identical")
    for n in args.sizes:
        g = generate_random_connected(n, 0)
        spec = decompose(build_laplacian(g))
        ds, _ = simulate_dataset(spec, TrueParams(0.0, 1.0, CovarianceSpec(0.5, 0.5, 0.9)), "C2", args.m, 0)
        ds = standardize(ds)
        t_py, s_py = best_of(1, lambda: run_chain(ds, g, "spatial", cfg, spec=spec, backend="python"))
        t_cy, s_cy = best_of(args.repeats, lambda: run_chain(ds, g, "spatial", cfg, spec=spec, backend="cython"))
        same = np.array_equal(s_py.draws, s_cy.draws)
        print(f"{n:>5} {t_py:>10.3f} {t_cy:>10.4f} {t_py / t_cy:>7.0f}x {args.iterations / t_cy:>12.0f}  {same}")


if __name__ == "__main__":
    main()
