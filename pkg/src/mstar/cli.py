"""Command-line entry point.

Exit codes: 0 success, 2 bad input, 3 chain divergence, 4 oracle failure.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import validation
from .data import STRUCTURES, TrueParams, load_dataset, simulate_dataset, standardize, write_dataset
from .errors import ConfigError, DivergenceError, MstarError
from .graph import (build_laplacian, generate_grid_queen, generate_random_connected, is_connected,
                    load_adjacency, write_adjacency)
from .sampler import McmcConfig, run_chain, write_chain
from .simstudy import emit_results, grid_card, load_grid_config, run_grid
from .spectral import CovarianceSpec, decompose
from .threshold import conservative_m_star_unbalanced, threshold_report

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_ORACLE = 0, 2, 3, 4


class InputError(Exception):
    pass


def _err(msg):
    print(f"mstar: error: {msg}", file=sys.stderr)


def _connected_graph(path):
    g = load_adjacency(path)
    if not is_connected(g):
        raise InputError(f"adjacency map {path} is not connected")
    return g


def _read_xbar(path, n):
    with open(path, encoding="utf-8") as fh:
        tokens = [t for line in fh for t in line.split("#", 1)[0].replace(",", " ").split()]
    try:
        xbar = np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if xbar.shape[0] != n:
        raise InputError(f"{path}: expected {n} area means, got {xbar.shape[0]}")
    return xbar


def _parse_counts(text):
    try:
        counts = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"--min-m expects comma-separated integers, got {text!r}") from None
    if not counts:
        raise InputError("--min-m is empty")
    return np.array(counts)


def cmd_threshold(args):
    g = _connected_graph(args.adjacency)
    spec = decompose(build_laplacian(g))
    counts = None
    if args.data:
        ds = standardize(load_dataset(args.data, n=g.n))
        xbar = ds.area_means()
        if not ds.balanced:
            counts = ds.m_per_area
    else:
        xbar = _read_xbar(args.xbar, g.n)
    if args.min_m:
        counts = _parse_counts(args.min_m)
        if counts.shape[0] not in (1, g.n):
            raise InputError(f"--min-m needs 1 or {g.n} counts, got {counts.shape[0]}")
    if float(np.sum(xbar**2)) > g.n * (1 + 1e-8):
        raise InputError("sum of squared area means exceeds n; area means are not from a "
                         "covariate standardized to population variance one")
    cov = CovarianceSpec(args.sigma2, args.tau2, args.rho)
    report = threshold_report(spec, cov, args.gamma, xbar)
    if report.infinite:
        print("m* = INFINITE: spatial model required")
    else:
        print(f"m* = {int(report.m_star)}")
    print(f"n = {g.n}")
    print(f"rho = {args.rho:g}, tau2 = {args.tau2:g}, sigma2 = {args.sigma2:g}, "
          f"kappa = {report.kappa:.6g}, gamma = {args.gamma:g}")
    print(f"d_dot = {report.d_dot:.10g}")
    print(f"numerator_sum = {report.numerator_sum:.10g}")
    print("top projections (eigen-index: d_i, lambda_i):")
    for idx, val in report.top_projections(5):
        print(f"  {idx}: {val:.6g}, {spec.eigvals[idx - 1]:.6g}")
    if counts is not None:
        verdict = conservative_m_star_unbalanced(spec, cov, args.gamma, xbar, counts)
        print(f"verdict: {verdict.message}")
    return EXIT_OK


def cmd_fit(args):
    if args.model == "spatial" and not args.adjacency:
        raise InputError("--adjacency is required for the spatial model")
    g = _connected_graph(args.adjacency) if args.adjacency else None
    ds = load_dataset(args.data, n=g.n if g else None)
    if not ds.standardized:
        ds = standardize(ds)
        print("note: covariates centered and scaled to population SD 1", file=sys.stderr)
    try:
        cfg = McmcConfig(iterations=args.iters, burn_in=args.burnin, thin=args.thin, seed=args.seed)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    summary = run_chain(ds, g, args.model, cfg)
    print(f"model: {args.model}")
    print(f"retained draws: {summary.retained}")
    print(f"{'parameter':<10} {'mean':>14} {'sd':>14}")
    for name in summary.means:
        print(f"{name:<10} {summary.means[name]:>14.6g} {summary.sds[name]:>14.6g}")
    if summary.acceptance_rate_rho is not None:
        print(f"rho acceptance rate: {summary.acceptance_rate_rho:.4f}")
    if args.dump_chain:
        write_chain(summary, args.dump_chain, burn_in=cfg.burn_in, thin=cfg.thin)
        print(f"chain written to {args.dump_chain}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args):
    if args.graph == "grid":
        side = math.isqrt(args.n)
        if side * side != args.n:
            raise InputError("--graph grid needs --n to be a perfect square")
        g = generate_grid_queen(side, side)
    else:
        g = generate_random_connected(args.n, np.random.SeedSequence([args.seed, 1]))
    spec = decompose(build_laplacian(g))
    params = TrueParams(args.beta0, args.beta1, CovarianceSpec(args.sigma2, args.tau2, args.rho))
    ds, truth = simulate_dataset(spec, params, args.structure, args.m,
                                 np.random.SeedSequence([args.seed, 2]))
    write_adjacency(g, args.out + ".adj")
    write_dataset(ds, args.out + ".csv")
    th = truth.theta
    print(f"areas: {g.n}, rows: {ds.rows}, edges: {g.n_edges}")
    print(f"theta: mean {th.mean():.6g}, sd {th.std():.6g}, min {th.min():.6g}, max {th.max():.6g}")
    print(f"wrote {args.out}.adj and {args.out}.csv", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args):
    if args.cases < 1:
        raise InputError("--cases must be >= 1")
    cases = validation.run_oracle_suite(args.seed, args.cases)
    worst = max(c.max_rel_err for c in cases)
    bad = [c for c in cases if not c.max_rel_err <= validation.TOLERANCE]
    print(f"cases: {len(cases)}")
    print(f"max relative error: {worst:.3e}")
    if bad:
        for c in bad:
            print(f"FAIL seed={args.seed} case={c.case} n={c.n} m={c.m} rho={c.rho} "
                  f"tau2={c.tau2} sigma2={c.sigma2} rel_err={c.max_rel_err:.3e}")
        return EXIT_ORACLE
    print(f"all cases within {validation.TOLERANCE:g}")
    return EXIT_OK


def cmd_grid(args):
    grid = load_grid_config(args.config)
    if args.dry_run:
        print(grid_card(grid), end="")
        return EXIT_OK
    if not args.out:
        raise InputError("--out is required unless --dry-run")
    results = run_grid(grid, workers=args.workers, progress=sys.stderr)
    for path in emit_results(results, args.out):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mstar",
        description="Within-area sample-size threshold for spatial random effects.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="compute m* for a map and covariate")
    p.add_argument("--adjacency", required=True, help="edge-list file ('n <N>' header, 1-based pairs)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset CSV (area,y,x); covariate is standardized first")
    src.add_argument("--xbar", help="file of per-area means of the standardized covariate")
    p.add_argument("--rho", type=float, required=True, help="spatial correlation in [0, 1)")
    p.add_argument("--tau2", type=float, required=True, help="spatial variance")
    p.add_argument("--sigma2", type=float, required=True, help="observation variance")
    p.add_argument("--gamma", type=float, default=0.05, help="tolerance (default 0.05)")
    p.add_argument("--min-m", help="comma-separated per-area sample sizes for the conservative check")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("fit", help="fit the spatial or nonspatial model by MCMC")
    p.add_argument("--adjacency", help="edge-list file (required for the spatial model)")
    p.add_argument("--data", required=True, help="dataset CSV (area,y,x)")
    p.add_argument("--model", choices=("spatial", "nonspatial"), default="spatial")
    p.add_argument("--iters", type=int, default=75_000, help="total iterations (default 75000)")
    p.add_argument("--burnin", type=int, default=15_000, help="burn-in iterations (default 15000)")
    p.add_argument("--thin", type=int, default=5, help="keep every k-th draw (default 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-chain", help="write retained draws to this CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate a map and a dataset")
    p.add_argument("--n", type=int, required=True, help="number of areas")
    p.add_argument("--m", type=int, required=True, help="rows per area")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--tau2", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--beta0", type=float, default=0.0)
    p.add_argument("--beta1", type=float, default=1.0)
    p.add_argument("--structure", choices=STRUCTURES, default="C2")
    p.add_argument("--graph", choices=("random", "grid"), default="random",
                   help="random spanning tree or square queen grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix; writes <prefix>.adj and <prefix>.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check closed-form precisions against dense algebra")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=200)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("grid", help="run a simulation-study grid")
    p.add_argument("--config", required=True, help="key = value grid config file")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory for the result CSVs")
    p.add_argument("--dry-run", action="store_true", help="print the design card and exit")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        _err(str(exc))
        return EXIT_DIVERGED
    except (InputError, MstarError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
