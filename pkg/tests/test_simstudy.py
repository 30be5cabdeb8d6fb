import math

import numpy as np
import pytest

from mstar.errors import ConfigError
from mstar.sampler import McmcConfig
from mstar.simstudy import (Cell, CellFailure, CellResult, ExperimentGrid, ReplicateResult, aggregate,
                            crossing_check, desk_grid, emit_results, grid_card, full_grid,
                            parse_grid_config, replicate_seed, run_grid, run_replicate)

TINY = McmcConfig(iterations=600, burn_in=200, thin=2)


def tiny_grid(**kw):
    base = dict(n_values=(6,), rho_values=(0.9,), kappa_values=((0.5, 0.5),), m_values=(2, 5, 20),
                structures=("C2", "C3"), replicates=3, mcmc=TINY, seed=7)
    base.update(kw)
    return ExperimentGrid(**base)


def test_full_grid_size():
    grid = full_grid()
    cells = grid.cells()
    assert len(cells) == 729 and len(set(cells)) == 729
    assert grid.replicates == 100 and grid.mcmc.retained == 12000


def test_desk_grid():
    grid = desk_grid()
    assert len(grid.cells()) == 10
    assert {c.structure for c in grid.cells()} == {"C2", "C3"}


def test_grid_validation():
    with pytest.raises(ConfigError):
        tiny_grid(kappa_values=((0.5, 0.6),))
    with pytest.raises(ConfigError):
        tiny_grid(structures=("C9",))
    with pytest.raises(ConfigError):
        tiny_grid(m_values=())
    with pytest.raises(ConfigError):
        tiny_grid(replicates=0)


def test_replicate_seed_depends_on_every_field():
    cell = Cell(25, 0.95, 0.5, 0.5, 10, "C2")
    base = replicate_seed(1, cell, 0).generate_state(4).tolist()
    assert replicate_seed(1, cell, 0).generate_state(4).tolist() == base
    variants = [replicate_seed(2, cell, 0), replicate_seed(1, cell, 1),
                replicate_seed(1, Cell(25, 0.95, 0.5, 0.5, 20, "C2"), 0),
                replicate_seed(1, Cell(25, 0.95, 0.5, 0.5, 10, "C3"), 0)]
    assert all(v.generate_state(4).tolist() != base for v in variants)


def test_run_replicate_deterministic():
    cell = Cell(6, 0.9, 0.5, 0.5, 5, "C2")
    a = run_replicate(cell, 0, TINY, 0.05, 3)
    b = run_replicate(cell, 0, TINY, 0.05, 3)
    assert a == b and not a.diverged
    assert a.rel_var >= 0 and a.abs_mean_diff >= 0
    assert math.isinf(run_replicate(Cell(6, 0.9, 0.5, 0.5, 5, "C3"), 0, TINY, 0.05, 3).m_star)


def test_run_grid_serial_matches_parallel(tmp_path):
    grid = tiny_grid()
    serial = run_grid(grid, workers=1)
    parallel = run_grid(grid, workers=2)
    assert len(serial) == 6
    a = emit_results(serial, tmp_path / "a")
    b = emit_results(parallel, tmp_path / "b")
    for fa, fb in zip(a, b):
        assert open(fa, "rb").read() == open(fb, "rb").read()


def test_emit_format(tmp_path):
    results = run_grid(tiny_grid(m_values=(2, 5)))
    var_path, mean_path = emit_results(list(reversed(results)), tmp_path)
    lines = open(var_path).read().splitlines()
    assert lines[0] == "n,rho,tau2,sigma2,m,structure,stat,mean,lo95,hi95,replicates,m_star_mean"
    rows = [l.split(",") for l in lines[1:]]
    assert [(r[4], r[5]) for r in rows] == [("2", "C2"), ("2", "C3"), ("5", "C2"), ("5", "C3")]
    assert all(r[6] == "abs_rel_var" for r in rows)
    assert all(r[11] == "inf" for r in rows if r[5] == "C3")
    for r in rows:
        lo, mean, hi = float(r[8]), float(r[7]), float(r[9])
        assert lo <= mean <= hi
    assert open(mean_path).read().splitlines()[1].split(",")[6] == "abs_mean_diff"


def test_aggregate_interval_and_exclusion():
    cell = Cell(5, 0.5, 0.5, 0.5, 2, "C1")
    reps = [ReplicateResult(1.0 + k, 1.0, 0.0, 0.1 * k, 3.0) for k in range(10)]
    res = aggregate(cell, reps)
    rel = np.arange(10.0)
    half = 1.96 * rel.std(ddof=1) / math.sqrt(10)
    assert res.rel_var_mean == pytest.approx(4.5)
    assert res.rel_var_lo == pytest.approx(4.5 - half) and res.rel_var_hi == pytest.approx(4.5 + half)
    assert res.m_star_mean == 3.0 and res.replicates == 10
    nan = float("nan")
    bad = [ReplicateResult(nan, nan, nan, nan, 3.0, diverged=True)]
    assert aggregate(cell, reps[:8] + bad * 2).excluded == 2
    with pytest.raises(CellFailure):
        aggregate(cell, reps[:7] + bad * 3)


def result(m, rel, star, structure="C2"):
    return CellResult(Cell(25, 0.95, 0.5, 0.5, m, structure), rel, rel, rel, 0, 0, 0, star, 30)


def test_crossing_check():
    rows = [result(1, 0.01, 40), result(2, 0.2, 40), result(5, 0.1, 40), result(10, 0.04, 20)]
    res = crossing_check(rows, 0.05)
    assert res.crossing_m == 10 and res.m_star_mean == pytest.approx(100 / 3)
    assert res.ratio == pytest.approx(0.3)
    censored = crossing_check([result(2, 0.3, math.inf), result(5, 0.2, math.inf)], 0.05)
    assert censored.censored and censored.ratio is None and math.isinf(censored.m_star_mean)
    with pytest.raises(ValueError):
        crossing_check(rows + [result(2, 0.1, 40, "C3")], 0.05)


def test_parse_grid_config():
    grid = parse_grid_config("""
        # comment
        n_values = 25, 100
        rho_values = 0.05,0.95
        kappa_values = 0.05/0.95, 1
        m_values = 2, 5
        structures = C1
        replicates = 4
        iterations = 1000
        burn_in = 100
        thin = 3
        seed = 9
    """)
    assert grid.kappa_values == ((0.05, 0.95), (0.5, 0.5))
    assert grid.structures == ("C1",) and grid.seed == 9 and grid.mcmc.retained == 300
    assert len(grid.cells()) == 16
    for text in ("n_values = 1", "n_values = 2\nrho_values = 0.5\nkappa_values = 1\nm_values = 2\nfoo = 1",
                 "n_values 1", "n_values = a\nrho_values = 0.5\nkappa_values = 1\nm_values = 2"):
        with pytest.raises(ConfigError):
            parse_grid_config(text)


def test_grid_card():
    card = grid_card(full_grid())
    assert "cells:                    729" in card
    assert "12000 draws" in card
