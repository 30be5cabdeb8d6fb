"""MCMC for the spatial (Leroux CAR) and nonspatial multilevel models.

The fitted algorithm keeps the random effects in the state and cycles

    beta -> theta (single-site, index order) -> sigma2 -> tau2 -> rho

each iteration. ``rho`` gets a random-walk Metropolis step on the logit scale
whose step size is tuned by Robbins-Monro during burn-in and frozen after.

The per-iteration work lives in :mod:`mstar.kernels` (compiled, with a
pure-Python fallback). The standalone ``*_conditional`` / ``gibbs_*``
functions below compute the same full conditionals directly from the data;
they are the readable reference the kernel is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .data import MultilevelDataset
from .errors import ConfigError, DatasetError, DivergenceError, SingularDesignError
from .graph import AreaGraph, build_laplacian, is_connected
from .errors import NotConnectedError
from .spectral import SpectralLaplacian, decompose, log_det_q, q_eigenvalues, theta_quadform

__all__ = [
    "McmcConfig",
    "ModelParams",
    "PosteriorSummary",
    "Design",
    "beta_conditional",
    "gibbs_beta",
    "theta_conditional",
    "gibbs_theta",
    "sigma2_conditional",
    "gibbs_sigma2",
    "tau2_conditional",
    "gibbs_tau2",
    "rho_log_density",
    "rho_log_accept_ratio",
    "metropolis_rho",
    "adapt_proposal",
    "initial_state",
    "run_chain",
    "batch_means_se",
    "write_chain",
]

MODELS = ("spatial", "nonspatial")
RHO_EPS = 1e-8


@dataclass(frozen=True)
class McmcConfig:
    """Run length, priors and Metropolis tuning. Defaults are the full-scale settings."""

    iterations: int = 75_000
    burn_in: int = 15_000
    thin: int = 5
    prior_a: float = 0.01
    prior_b: float = 0.01
    target_accept: float = 0.234
    seed: int = 0
    adapt_c: float = 1.0
    adapt_gamma: float = 0.6
    initial_log_scale: float = 0.0
    block_size: int = 1000

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(f"need 0 <= burn_in < iterations, got {self.burn_in}/{self.iterations}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if not 0 < self.target_accept < 1:
            raise ConfigError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.prior_a <= 0 or self.prior_b <= 0:
            raise ConfigError("inverse-gamma hyperparameters must be positive")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ModelParams:
    """One MCMC state. ``rho`` is ``None`` for the nonspatial model."""

    beta: np.ndarray
    theta: np.ndarray
    sigma2: float
    tau2: float
    rho: float | None = None

    def __post_init__(self):
        self.beta = np.array(self.beta, dtype=float)
        self.theta = np.array(self.theta, dtype=float)
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.tau2 > 0:
            raise ValueError(f"tau2 must be positive, got {self.tau2}")
        if self.rho is not None and not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")

    def copy(self) -> "ModelParams":
        return replace(self, beta=self.beta.copy(), theta=self.theta.copy())


class Design:
    """Design matrix ``[1, x]`` and the area-level sufficient statistics the sweep uses."""

    def __init__(self, ds: MultilevelDataset):
        n = ds.n
        X = np.column_stack([np.ones(ds.rows), ds.x])
        xtx = X.T @ X
        try:
            chol_xtx = np.linalg.cholesky(xtx)
        except np.linalg.LinAlgError:
            raise SingularDesignError("design matrix is rank deficient") from None
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise SingularDesignError("design matrix is rank deficient")
        eye = np.eye(X.shape[1])
        xtx_inv = np.linalg.solve(chol_xtx.T, np.linalg.solve(chol_xtx, eye))
        xtx_inv = 0.5 * (xtx_inv + xtx_inv.T)
        self.X = X
        self.p = X.shape[1]
        self.n = n
        self.area = ds.area
        self.y = ds.y
        self.m_i = ds.m_per_area.astype(float)
        self.ysum = np.bincount(ds.area, weights=ds.y, minlength=n)
        self.xsum = np.zeros((n, self.p))
        np.add.at(self.xsum, ds.area, X)
        self.xty = X.T @ ds.y
        self.xtx = xtx
        self.xtx_inv = xtx_inv
        self.chol = np.linalg.cholesky(xtx_inv)
        # within-area centered cross-products
        ybar = self.ysum / self.m_i
        xbar = self.xsum / self.m_i[:, None]
        yc = ds.y - ybar[ds.area]
        Xc = X - xbar[ds.area]
        self.wyy = float(yc @ yc)
        self.wxy = Xc.T @ yc
        self.wxx = Xc.T @ Xc

    @property
    def rows(self) -> int:
        return self.X.shape[0]


def _design(ds, design):
    return design if design is not None else Design(ds)


# ----------------------------------------------------------------------------
# full conditionals (reference implementations)


def beta_conditional(state: ModelParams, ds: MultilevelDataset, design: Design | None = None):
    """Mean and covariance of ``beta | rest``: ``N((X'X)^-1 X'r, sigma2 (X'X)^-1)``, ``r = Y - Z theta``."""
    design = _design(ds, design)
    r = ds.y - state.theta[ds.area]
    mean = design.xtx_inv @ (design.X.T @ r)
    return mean, state.sigma2 * design.xtx_inv


def gibbs_beta(state: ModelParams, ds: MultilevelDataset, rng, design: Design | None = None) -> np.ndarray:
    mean, cov = beta_conditional(state, ds, design)
    return mean + np.linalg.cholesky(cov) @ rng.standard_normal(mean.shape[0])


def theta_conditional(i: int, state: ModelParams, ds: MultilevelDataset, g: AreaGraph | None,
                      design: Design | None = None) -> tuple[float, float]:
    """Mean and variance of ``theta_i`` given everything else.

    With ``g=None`` (or ``state.rho`` None) the iid prior is used.
    """
    design = _design(ds, design)
    m = design.m_i[i]
    resid_sum = design.ysum[i] - design.xsum[i] @ state.beta
    s2, t2 = state.sigma2, state.tau2
    if g is None or state.rho is None:
        var = 1.0 / (m / s2 + 1.0 / t2)
        return var * resid_sum / s2, var
    rho = state.rho
    nb = float(np.sum(state.theta[g.neighbors(i)]))
    var = 1.0 / (m / s2 + ((1.0 - rho) + rho * g.degree[i]) / t2)
    return var * (resid_sum / s2 + rho * nb / t2), var


def gibbs_theta(state: ModelParams, ds: MultilevelDataset, g: AreaGraph | None, rng,
                design: Design | None = None) -> np.ndarray:
    """Sequential single-site sweep in index order; returns the new vector."""
    design = _design(ds, design)
    work = state.copy()
    z = rng.standard_normal(ds.n)
    for i in range(ds.n):
        mean, var = theta_conditional(i, work, ds, g, design)
        work.theta[i] = mean + math.sqrt(var) * z[i]
    return work.theta


def sigma2_conditional(state: ModelParams, ds: MultilevelDataset, a: float, b: float,
                       design: Design | None = None) -> tuple[float, float]:
    """Inverse-gamma ``(shape, scale)`` of ``sigma2 | rest``."""
    design = _design(ds, design)
    resid = ds.y - design.X @ state.beta - state.theta[ds.area]
    return a + ds.rows / 2, b + 0.5 * float(resid @ resid)


def gibbs_sigma2(state, ds, a, b, rng, design=None) -> float:
    shape, scale = sigma2_conditional(state, ds, a, b, design)
    return scale / rng.standard_gamma(shape)


def tau2_conditional(state: ModelParams, spec: SpectralLaplacian, a: float, b: float) -> tuple[float, float]:
    """Inverse-gamma ``(shape, scale)`` of ``tau2 | rest``; iid prior when ``state.rho`` is None."""
    rho = 0.0 if state.rho is None else state.rho
    return a + spec.n / 2, b + 0.5 * theta_quadform(spec, rho, state.theta)


def gibbs_tau2(state, spec, a, b, rng) -> float:
    shape, scale = tau2_conditional(state, spec, a, b)
    return scale / rng.standard_gamma(shape)


def rho_log_density(rho: float, theta, tau2: float, spec: SpectralLaplacian) -> float:
    """Unnormalized ``log f(rho | theta, tau2)`` under a Uniform(0, 1) prior."""
    return 0.5 * log_det_q(spec, rho) - theta_quadform(spec, rho, theta) / (2.0 * tau2)


def rho_log_accept_ratio(rho: float, rho_new: float, theta, tau2: float, spec: SpectralLaplacian) -> float:
    """Log Metropolis ratio for a logit-scale random walk, Jacobian included."""
    lam = spec.eigvals
    alpha2 = (spec.eigvecs.T @ np.asarray(theta, dtype=float)) ** 2
    log_lik = 0.5 * float(np.sum(np.log(q_eigenvalues(spec, rho_new)) - np.log(q_eigenvalues(spec, rho))))
    log_lik -= float(np.sum((rho_new - rho) * (lam - 1.0) * alpha2)) / (2.0 * tau2)
    return log_lik + math.log(rho_new * (1.0 - rho_new)) - math.log(rho * (1.0 - rho))


def _expit(psi):
    if psi >= 0:
        return 1.0 / (1.0 + math.exp(-psi))
    e = math.exp(psi)
    return e / (1.0 + e)


def metropolis_rho(state: ModelParams, spec: SpectralLaplacian, log_scale: float, rng,
                   eps: float = RHO_EPS) -> tuple[float, bool]:
    """One logit random-walk step. Returns ``(rho, accepted)``."""
    rho = state.rho
    psi = math.log(rho / (1.0 - rho))
    rho_new = min(max(_expit(psi + math.exp(log_scale) * rng.standard_normal()), eps), 1.0 - eps)
    log_r = rho_log_accept_ratio(rho, rho_new, state.theta, state.tau2, spec)
    u = rng.random()
    if u == 0.0 or math.log(u) < log_r:
        return rho_new, True
    return rho, False


def adapt_proposal(log_scale: float, accepted: bool, iteration: int, burn_in: int,
                   c: float = 1.0, gamma: float = 0.6, target: float = 0.234) -> float:
    """Robbins-Monro update of the log step size; identity once ``iteration > burn_in``."""
    if iteration > burn_in:
        return log_scale
    return log_scale + c * math.pow(iteration, -gamma) * (float(accepted) - target)


# ----------------------------------------------------------------------------
# chains


def initial_state(ds: MultilevelDataset, model: str, design: Design | None = None) -> ModelParams:
    """OLS coefficients, zero effects, residual variance split evenly, ``rho = 0.5``."""
    design = _design(ds, design)
    beta = design.xtx_inv @ design.xty
    resid = ds.y - design.X @ beta
    half = max(0.5 * float(np.mean(resid**2)), 1e-12)
    return ModelParams(beta=beta, theta=np.zeros(ds.n), sigma2=half, tau2=half,
                       rho=0.5 if model == "spatial" else None)


@dataclass
class PosteriorSummary:
    """Moments of retained draws. ``draws`` columns are ``coef_names + [sigma2, tau2, rho]``."""

    model: str
    coef_names: list
    mean_beta1: float
    var_beta1: float
    acceptance_rate_rho: float | None
    retained: int
    means: dict = field(default_factory=dict)
    sds: dict = field(default_factory=dict)
    final_log_scale: float | None = None
    draws: np.ndarray | None = None

    @property
    def columns(self) -> list:
        return [*self.coef_names, "sigma2", "tau2", "rho"]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.columns.index(name)]


_FIXABLE = ("beta", "theta", "sigma2", "tau2", "rho")


def run_chain(ds: MultilevelDataset, g: AreaGraph | None, model: str = "spatial",
              cfg: McmcConfig | None = None, *, spec: SpectralLaplacian | None = None,
              fixed: dict | None = None, init: ModelParams | None = None,
              backend: str | None = None, keep_draws: bool = True) -> PosteriorSummary:
    """Run one chain and summarize the retained draws.

    Parameters
    ----------
    g : AreaGraph or None
        Required (and must be connected) for the spatial model.
    spec : SpectralLaplacian, optional
        Precomputed decomposition of ``g``; computed if omitted.
    fixed : dict, optional
        Blocks to hold at the given values instead of updating, any of
        ``beta``, ``theta``, ``sigma2``, ``tau2``, ``rho``.
    backend : {"cython", "python"}, optional
        Override the sweep backend selected at import.

    Raises
    ------
    DivergenceError
        If the state becomes non-finite; carries the 1-based iteration.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    cfg = cfg or McmcConfig()
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(_FIXABLE)
    if unknown:
        raise ValueError(f"cannot fix {sorted(unknown)}")
    spatial = model == "spatial"
    if spatial:
        if g is None:
            raise ValueError("the spatial model needs an adjacency graph")
        if g.n != ds.n:
            raise DatasetError(f"graph has {g.n} units, dataset has {ds.n} areas")
        if not is_connected(g):
            raise NotConnectedError("spatial model requires a connected map")
        if spec is None:
            spec = decompose(build_laplacian(g))
    design = Design(ds)

    state = (init or initial_state(ds, model, design)).copy()
    for key, value in fixed.items():
        setattr(state, key, np.array(value, dtype=float) if key in ("beta", "theta") else float(value))
    if not spatial:
        state.rho = None
    state = ModelParams(state.beta, state.theta, state.sigma2, state.tau2, state.rho)

    if spatial:
        indptr, indices = g.csr
        deg = g.degree.astype(float)
        eigvals = np.ascontiguousarray(spec.eigvals, dtype=float)
    else:
        indptr = np.zeros(ds.n + 1, dtype=np.int64)
        indices = np.zeros(0, dtype=np.int64)
        deg = np.zeros(ds.n)
        eigvals = np.zeros(ds.n)

    p, n = design.p, ds.n
    beta = np.ascontiguousarray(state.beta, dtype=float)
    theta = np.ascontiguousarray(state.theta, dtype=float)
    scal = np.array([state.sigma2, state.tau2, state.rho if spatial else 0.0, cfg.initial_log_scale])
    a, b = cfg.prior_a, cfg.prior_b
    shape_sigma = a + design.rows / 2
    shape_tau = a + n / 2
    run_block = kernels.get_run_block(backend)
    rng = np.random.default_rng(cfg.seed)

    keep = np.zeros((cfg.retained, p + 3))
    n_kept = 0
    accepted_post = 0
    t_done = 0
    while t_done < cfg.iterations:
        B = min(cfg.block_size, cfg.iterations - t_done)
        # fixed draw order per block keeps the stream identical for both models
        z_beta = rng.standard_normal((B, p))
        z_theta = rng.standard_normal((B, n))
        g_sigma = rng.standard_gamma(shape_sigma, B)
        g_tau = rng.standard_gamma(shape_tau, B)
        z_rho = rng.standard_normal(B)
        u_rho = rng.random(B)
        trace = np.zeros((B, p + 3))
        acc = np.zeros(B, dtype=np.int8)
        status = run_block(
            design.m_i, design.ysum, design.xsum, design.xty, design.xtx_inv, design.chol,
            design.wyy, design.wxy, design.wxx, indptr, indices, deg, eigvals,
            beta, theta, scal, a, b, spatial,
            "beta" not in fixed, "theta" not in fixed, "sigma2" not in fixed,
            "tau2" not in fixed, "rho" not in fixed,
            cfg.burn_in, t_done, cfg.adapt_c, cfg.adapt_gamma, cfg.target_accept, RHO_EPS,
            z_beta, z_theta, g_sigma, g_tau, z_rho, u_rho, trace, acc,
        )
        if status != -1:
            raise DivergenceError(int(status))
        t = np.arange(t_done + 1, t_done + B + 1)
        post = t > cfg.burn_in
        accepted_post += int(acc[post].sum())
        sel = post & ((t - cfg.burn_in) % cfg.thin == 0)
        rows = trace[sel]
        take = min(rows.shape[0], cfg.retained - n_kept)
        keep[n_kept:n_kept + take] = rows[:take]
        n_kept += take
        t_done += B

    coef_names = ["beta0"] + (["beta1"] if p == 2 else [f"beta{j}" for j in range(1, p)])
    if not spatial:
        keep[:, p + 2] = 0.0
    cols = [*coef_names, "sigma2", "tau2", "rho"]
    means = {c: float(keep[:, k].mean()) for k, c in enumerate(cols)}
    sds = {c: float(keep[:, k].std(ddof=1)) if n_kept > 1 else 0.0 for k, c in enumerate(cols)}
    if not spatial:
        means.pop("rho")
        sds.pop("rho")
    n_post = cfg.iterations - cfg.burn_in
    return PosteriorSummary(
        model=model,
        coef_names=coef_names,
        mean_beta1=float(keep[:, 1].mean()),
        var_beta1=float(keep[:, 1].var(ddof=1)) if n_kept > 1 else 0.0,
        acceptance_rate_rho=(accepted_post / n_post) if spatial and "rho" not in fixed else None,
        retained=n_kept,
        means=means,
        sds=sds,
        final_log_scale=float(scal[3]) if spatial else None,
        draws=keep if keep_draws else None,
    )


def batch_means_se(x, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    size = x.shape[0] // n_batches
    if size < 1:
        raise ValueError("series shorter than the number of batches")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def write_chain(summary: PosteriorSummary, path, burn_in: int = 0, thin: int = 1) -> None:
    """CSV of retained draws: ``iter,beta0,beta1,...,sigma2,tau2,rho``.

    ``iter`` is the 1-based iteration the draw was taken at.
    """
    if summary.draws is None:
        raise ValueError("chain was run with keep_draws=False")
    header = ["iter", *summary.columns]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k, row in enumerate(summary.draws):
            it = burn_in + (k + 1) * thin
            fh.write(f"{it}," + ",".join(f"{v:.17g}" for v in row) + "\n")
