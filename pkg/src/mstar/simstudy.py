"""Simulation-study harness: simulate, fit both models, aggregate per design cell.

Every replicate draws its own seed from a hash of the master seed, the cell
identifiers and the replicate index, so results do not depend on how tasks
are scheduled across workers.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .data import STRUCTURES, TrueParams, simulate_dataset, standardize
from .errors import ConfigError, DivergenceError, MstarError
from .graph import build_laplacian, generate_random_connected
from .sampler import McmcConfig, run_chain
from .spectral import CovarianceSpec, decompose
from .threshold import threshold_report

__all__ = [
    "Cell",
    "ExperimentGrid",
    "ReplicateResult",
    "CellResult",
    "CellFailure",
    "CrossingResult",
    "full_grid",
    "desk_grid",
    "replicate_seed",
    "run_replicate",
    "run_grid",
    "aggregate",
    "crossing_check",
    "emit_results",
    "parse_grid_config",
    "load_grid_config",
    "grid_card",
]

MAX_EXCLUDED_FRACTION = 0.2
CSV_COLUMNS = ["n", "rho", "tau2", "sigma2", "m", "structure", "stat",
               "mean", "lo95", "hi95", "replicates", "m_star_mean"]


class CellFailure(MstarError):
    """Too many diverged replicates in one design cell."""


@dataclass(frozen=True, order=True)
class Cell:
    n: int
    rho: float
    tau2: float
    sigma2: float
    m: int
    structure: str

    @property
    def cov(self) -> CovarianceSpec:
        return CovarianceSpec(self.sigma2, self.tau2, self.rho)


@dataclass(frozen=True)
class ExperimentGrid:
    """Factorial design. Each ``kappa_values`` entry is a ``(tau2, sigma2)`` pair summing to one."""

    n_values: tuple
    rho_values: tuple
    kappa_values: tuple
    m_values: tuple
    structures: tuple = STRUCTURES
    replicates: int = 100
    gamma: float = 0.05
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    seed: int = 0

    def __post_init__(self):
        for name in ("n_values", "rho_values", "kappa_values", "m_values", "structures"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigError(f"{name} must be nonempty")
            object.__setattr__(self, name, values)
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        for tau2, sigma2 in self.kappa_values:
            if tau2 <= 0 or sigma2 <= 0 or abs(tau2 + sigma2 - 1.0) > 1e-12:
                raise ConfigError(f"variance pair ({tau2}, {sigma2}) must be positive and sum to 1")
        for s in self.structures:
            if s not in STRUCTURES:
                raise ConfigError(f"unknown structure {s!r}")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")

    def cells(self) -> list[Cell]:
        return [
            Cell(int(n), float(rho), float(t2), float(s2), int(m), s)
            for n, rho, (t2, s2), m, s in itertools.product(
                self.n_values, self.rho_values, self.kappa_values, self.m_values, self.structures)
        ]


def full_grid(**overrides) -> ExperimentGrid:
    """Full factorial design: 3 x 3 x 3 x 9 x 3 = 729 cells, 100 datasets each."""
    base = dict(
        n_values=(25, 100, 400),
        rho_values=(0.05, 0.50, 0.95),
        kappa_values=((0.05, 0.95), (0.50, 0.50), (0.95, 0.05)),
        m_values=(1, 2, 5, 10, 20, 50, 80, 100, 200),
        structures=STRUCTURES,
        replicates=100,
        gamma=0.05,
        mcmc=McmcConfig(),
    )
    base.update(overrides)
    return ExperimentGrid(**base)


def desk_grid(**overrides) -> ExperimentGrid:
    """Small slice that runs in minutes: n=25, rho=0.95, kappa=1, shortened chains."""
    base = dict(
        n_values=(25,),
        rho_values=(0.95,),
        kappa_values=((0.5, 0.5),),
        m_values=(2, 5, 10, 20, 50),
        structures=("C2", "C3"),
        replicates=30,
        gamma=0.05,
        mcmc=McmcConfig(iterations=15_000, burn_in=3_000, thin=5),
    )
    base.update(overrides)
    return ExperimentGrid(**base)


def replicate_seed(master: int, cell: Cell, replicate: int) -> np.random.SeedSequence:
    key = repr((int(master), cell.n, cell.rho, cell.tau2, cell.sigma2, cell.m,
                cell.structure, int(replicate))).encode()
    digest = hashlib.sha256(key).digest()
    words = [int.from_bytes(digest[k:k + 4], "little") for k in range(0, 32, 4)]
    return np.random.SeedSequence(words)


@dataclass(frozen=True)
class ReplicateResult:
    var_spatial: float
    var_nonspatial: float
    mean_spatial: float
    mean_nonspatial: float
    m_star: float
    diverged: bool = False

    @property
    def rel_var(self) -> float:
        return abs(self.var_spatial - self.var_nonspatial) / self.var_nonspatial

    @property
    def abs_mean_diff(self) -> float:
        return abs(self.mean_spatial - self.mean_nonspatial)


def run_replicate(cell: Cell, replicate: int, mcmc: McmcConfig, gamma: float,
                  master_seed: int) -> ReplicateResult:
    """Simulate one dataset for ``cell`` and fit it with both models.

    The two chains share one dataset and one chain seed, so their random
    streams are coupled and the difference in posterior moments carries less
    Monte Carlo noise.
    """
    ss = replicate_seed(master_seed, cell, replicate)
    s_graph, s_beta, s_data, s_chain = ss.spawn(4)
    g = generate_random_connected(cell.n, s_graph)
    spec = decompose(build_laplacian(g))
    beta0, beta1 = np.random.default_rng(s_beta).standard_normal(2)
    ds, _ = simulate_dataset(spec, TrueParams(float(beta0), float(beta1), cell.cov),
                             cell.structure, cell.m, s_data)
    ds = standardize(ds)
    m_star = threshold_report(spec, cell.cov, gamma, ds.area_means()).m_star
    cfg = replace(mcmc, seed=int(s_chain.generate_state(1)[0]))
    try:
        sp = run_chain(ds, g, "spatial", cfg, spec=spec, keep_draws=False)
        ns = run_chain(ds, None, "nonspatial", cfg, keep_draws=False)
    except DivergenceError:
        nan = float("nan")
        return ReplicateResult(nan, nan, nan, nan, float(m_star), diverged=True)
    return ReplicateResult(sp.var_beta1, ns.var_beta1, sp.mean_beta1, ns.mean_beta1, float(m_star))


def _task(args):
    cell, rep, mcmc, gamma, seed = args
    return run_replicate(cell, rep, mcmc, gamma, seed)


@dataclass(frozen=True)
class CellResult:
    cell: Cell
    rel_var_mean: float
    rel_var_lo: float
    rel_var_hi: float
    mean_diff_mean: float
    mean_diff_lo: float
    mean_diff_hi: float
    m_star_mean: float
    replicates: int
    excluded: int = 0


def _mc_interval(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.shape[0] < 2:
        return mean, mean, mean
    half = 1.96 * float(values.std(ddof=1)) / math.sqrt(values.shape[0])
    return mean, mean - half, mean + half


def aggregate(cell: Cell, reps: list[ReplicateResult]) -> CellResult:
    ok = [r for r in reps if not r.diverged]
    excluded = len(reps) - len(ok)
    if not ok or excluded > MAX_EXCLUDED_FRACTION * len(reps):
        raise CellFailure(f"{excluded} of {len(reps)} replicates diverged in {cell}")
    rv = _mc_interval([r.rel_var for r in ok])
    md = _mc_interval([r.abs_mean_diff for r in ok])
    stars = np.array([r.m_star for r in ok])
    m_star_mean = math.inf if np.isinf(stars).any() else float(stars.mean())
    return CellResult(cell, *rv, *md, m_star_mean, len(ok), excluded)


def run_grid(grid: ExperimentGrid, workers: int = 1, progress=None) -> list[CellResult]:
    """Run every (cell, replicate) task and reduce to one result per cell.

    ``progress`` (e.g. ``sys.stderr``) receives one line per finished cell.
    """
    cells = grid.cells()
    tasks = [(c, r, grid.mcmc, grid.gamma, grid.seed)
             for c in cells for r in range(grid.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_task, tasks, chunksize=max(1, grid.replicates // 4)))
    else:
        flat = []
        for k, t in enumerate(tasks):
            flat.append(_task(t))
            if progress is not None and (k + 1) % grid.replicates == 0:
                print(f"cell {(k + 1) // grid.replicates}/{len(cells)} done", file=progress)
    results = []
    R = grid.replicates
    for k, cell in enumerate(cells):
        results.append(aggregate(cell, flat[k * R:(k + 1) * R]))
    if progress is not None and workers > 1:
        print(f"{len(cells)} cells done", file=progress)
    return results


@dataclass(frozen=True)
class CrossingResult:
    crossing_m: int | None
    m_star_mean: float
    ratio: float | None

    @property
    def censored(self) -> bool:
        return self.crossing_m is None


def crossing_check(results: list[CellResult], gamma: float) -> CrossingResult:
    """Smallest ``m >= 2`` whose mean relative variance difference is at most ``gamma``.

    ``results`` should be one (n, rho, kappa, structure) slice. The reference
    threshold is the mean of the per-cell mean ``m*`` over the slice's
    ``m >= 2`` cells; ``ratio`` is crossing / reference.
    """
    keys = {(r.cell.n, r.cell.rho, r.cell.tau2, r.cell.structure) for r in results}
    if len(keys) != 1:
        raise ValueError("crossing_check expects a single (n, rho, kappa, structure) slice")
    slice_ = sorted((r for r in results if r.cell.m >= 2), key=lambda r: r.cell.m)
    if not slice_:
        raise ValueError("slice has no cells with m >= 2")
    stars = [r.m_star_mean for r in slice_]
    ref = math.inf if any(math.isinf(s) for s in stars) else float(np.mean(stars))
    for r in slice_:
        if r.rel_var_mean <= gamma:
            ratio = None if math.isinf(ref) else r.cell.m / ref
            return CrossingResult(r.cell.m, ref, ratio)
    return CrossingResult(None, ref, None)


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return repr(v)
    return str(v)


def emit_results(results: list[CellResult], path) -> tuple[str, str]:
    """Write ``variance_differences.csv`` and ``mean_differences.csv`` into directory ``path``."""
    if not results:
        raise ValueError("no results to write")
    os.makedirs(path, exist_ok=True)
    ordered = sorted(results, key=lambda r: r.cell)
    out = []
    for fname, stat, attrs in (
        ("variance_differences.csv", "abs_rel_var", ("rel_var_mean", "rel_var_lo", "rel_var_hi")),
        ("mean_differences.csv", "abs_mean_diff", ("mean_diff_mean", "mean_diff_lo", "mean_diff_hi")),
    ):
        target = os.path.join(path, fname)
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for r in ordered:
                c = r.cell
                row = [c.n, c.rho, c.tau2, c.sigma2, c.m, c.structure, stat,
                       *(getattr(r, a) for a in attrs), r.replicates, r.m_star_mean]
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        out.append(target)
    return tuple(out)


# ----------------------------------------------------------------------------
# config files

_INT_KEYS = {"replicates", "iterations", "burn_in", "thin", "seed"}
_FLOAT_KEYS = {"gamma", "prior_a", "prior_b"}
_LIST_KEYS = {"n_values", "rho_values", "kappa_values", "m_values", "structures"}


def _kappa_pair(token: str) -> tuple[float, float]:
    """``"0.05/0.95"`` -> (0.05, 0.95); a bare ratio ``k`` -> (k/(1+k), 1/(1+k))."""
    if "/" in token:
        num, den = (float(Fraction(t.strip())) for t in token.split("/", 1))
        total = num + den
        return num / total, den / total
    k = float(token)
    return k / (1.0 + k), 1.0 / (1.0 + k)


def parse_grid_config(text: str) -> ExperimentGrid:
    """Flat ``key = value`` config; lists are comma-separated, ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _INT_KEYS | _FLOAT_KEYS | _LIST_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    missing = {"n_values", "rho_values", "kappa_values", "m_values"} - set(raw)
    if missing:
        raise ConfigError(f"missing keys: {sorted(missing)}")
    try:
        items = lambda k: [t.strip() for t in raw[k].split(",") if t.strip()]
        grid_kw = dict(
            n_values=tuple(int(t) for t in items("n_values")),
            rho_values=tuple(float(t) for t in items("rho_values")),
            kappa_values=tuple(_kappa_pair(t) for t in items("kappa_values")),
            m_values=tuple(int(t) for t in items("m_values")),
        )
        if "structures" in raw:
            grid_kw["structures"] = tuple(items("structures"))
        for k in ("replicates", "seed"):
            if k in raw:
                grid_kw[k] = int(raw[k])
        if "gamma" in raw:
            grid_kw["gamma"] = float(raw["gamma"])
        mcmc_kw = {k: int(raw[k]) for k in ("iterations", "burn_in", "thin") if k in raw}
        mcmc_kw.update({k: float(raw[k]) for k in ("prior_a", "prior_b") if k in raw})
        grid_kw["mcmc"] = McmcConfig(**mcmc_kw)
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return ExperimentGrid(**grid_kw)


def load_grid_config(path) -> ExperimentGrid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid_config(fh.read())


def grid_card(grid: ExperimentGrid) -> str:
    """Human-readable summary of a design, one setting per line."""
    kappas = ", ".join(f"{t:g}/{s:g}" for t, s in grid.kappa_values)
    n_cells = len(grid.cells())
    lines = [
        f"spatial units (n):        {', '.join(map(str, grid.n_values))}",
        f"spatial correlation:      {', '.join(f'{r:g}' for r in grid.rho_values)}",
        f"variance ratio (tau2/s2): {kappas}",
        f"within-area replication:  {', '.join(map(str, grid.m_values))}",
        f"covariate structures:     {', '.join(grid.structures)}",
        f"datasets per setting:     {grid.replicates}",
        f"tolerance gamma:          {grid.gamma:g}",
        f"chain:                    {grid.mcmc.iterations} iterations, burn-in {grid.mcmc.burn_in}, "
        f"thin {grid.mcmc.thin} -> {grid.mcmc.retained} draws",
        f"cells:                    {n_cells}",
        f"fits:                     {2 * n_cells * grid.replicates}",
    ]
    return "\n".join(lines) + "\n"
