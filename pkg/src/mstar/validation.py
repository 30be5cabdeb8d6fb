"""Random-instance check of the closed-form precisions against dense ``x^T Omega^{-1} x``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import threshold
from .data import MultilevelDataset, gen_covariate, standardize
from .graph import build_laplacian, generate_random_connected
from .spectral import CovarianceSpec, decompose, dense_omega

RHO_SET = (0.0, 0.3, 0.7, 0.95)
# tau2 / sigma2 pairs with unit total variance
KAPPA_SET = ((0.05, 0.95), (0.5, 0.5), (0.95, 0.05))
TOLERANCE = 1e-8


@dataclass(frozen=True)
class OracleCase:
    case: int
    n: int
    m: int
    rho: float
    tau2: float
    sigma2: float
    rel_err_spatial: float
    rel_err_nonspatial: float

    @property
    def max_rel_err(self) -> float:
        return max(self.rel_err_spatial, self.rel_err_nonspatial)


def oracle_case(seed: int, case: int, max_n: int = 10, max_m: int = 5) -> OracleCase:
    """Draw one random (map, covariate, parameters) instance and compare both routes."""
    rng = np.random.default_rng([seed, case])
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    rho = float(rng.choice(RHO_SET))
    tau2, sigma2 = KAPPA_SET[int(rng.integers(len(KAPPA_SET)))]
    structure = "C1" if rng.random() < 0.5 else "C2"
    g = generate_random_connected(n, rng)
    L = build_laplacian(g)
    spec = decompose(L)
    area = np.repeat(np.arange(n), m)
    x = gen_covariate(structure, n, m, rng)
    ds = standardize(MultilevelDataset(n=n, y=np.zeros(n * m), x=x, area=area))
    xs = ds.x[:, 0]
    cov = CovarianceSpec(sigma2, tau2, rho)
    cov0 = CovarianceSpec(sigma2, tau2, 0.0)
    dense_rho = float(xs @ np.linalg.solve(dense_omega(L, cov, area), xs))
    dense_0 = float(xs @ np.linalg.solve(dense_omega(L, cov0, area), xs))
    d = threshold.projections(spec, ds.area_means())
    closed_rho = threshold.precision_spatial(spec, cov, n, m, d)
    closed_0 = threshold.precision_nonspatial(cov, n, m, d)
    err_rho = abs(closed_rho - dense_rho) / abs(dense_rho)
    err_0 = abs(closed_0 - dense_0) / abs(dense_0)
    return OracleCase(case, n, m, rho, tau2, sigma2, err_rho, err_0)


def run_oracle_suite(seed: int = 0, cases: int = 200) -> list[OracleCase]:
    return [oracle_case(seed, k) for k in range(cases)]
