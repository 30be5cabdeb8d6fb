"""Multilevel areal datasets: representation, standardization, C1-C3 covariates and forward simulation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import DatasetError, DegenerateCovariateError
from .spectral import CovarianceSpec, SpectralLaplacian, q_eigenvalues

__all__ = [
    "STRUCTURES",
    "MultilevelDataset",
    "TrueParams",
    "standardize",
    "gen_covariate",
    "sample_theta",
    "simulate_dataset",
    "read_dataset",
    "write_dataset",
    "load_dataset",
]

STRUCTURES = ("C1", "C2", "C3")


@dataclass(frozen=True, eq=False)
class MultilevelDataset:
    """Individual-level outcomes nested in areas.

    ``x`` is always 2-D ``(rows, covariates)``; ``area`` is the 0-based area
    index of each row. Rows need not be sorted by area.
    """

    n: int
    y: np.ndarray
    x: np.ndarray
    area: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        area = np.asarray(self.area, dtype=np.int64)
        if y.ndim != 1 or x.shape[0] != y.shape[0] or area.shape != y.shape:
            raise DatasetError(
                f"inconsistent shapes y={y.shape}, x={x.shape}, area={area.shape}"
            )
        if y.size and (area.min() < 0 or area.max() >= self.n):
            raise DatasetError(f"area index outside 1..{self.n}")
        counts = np.bincount(area, minlength=self.n)
        if (counts == 0).any():
            missing = np.flatnonzero(counts == 0)[:5] + 1
            raise DatasetError(f"areas with no rows: {missing.tolist()}")
        for name, arr in (("y", y), ("x", x), ("area", area)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        counts.setflags(write=False)
        object.__setattr__(self, "_counts", counts)

    @property
    def rows(self) -> int:
        return self.y.shape[0]

    @property
    def m_per_area(self) -> np.ndarray:
        return self._counts

    @property
    def balanced(self) -> bool:
        return bool(self._counts.min() == self._counts.max())

    @property
    def m(self) -> int:
        """Common replication count; only defined for balanced designs."""
        if not self.balanced:
            raise DatasetError("dataset is unbalanced; use m_per_area")
        return int(self._counts[0])

    def area_means(self, column: int = 0) -> np.ndarray:
        """Per-area mean of covariate ``column``."""
        sums = np.bincount(self.area, weights=self.x[:, column], minlength=self.n)
        return sums / self._counts


def standardize(ds: MultilevelDataset) -> MultilevelDataset:
    """Center each covariate on its pooled mean and divide by the population SD.

    Afterwards every column has mean 0 and sum of squares equal to the row
    count.
    """
    x = ds.x
    mean = x.mean(axis=0)
    centered = x - mean
    sd = np.sqrt(np.mean(centered**2, axis=0))
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    if np.any(sd <= 1e-12 * scale):
        raise DegenerateCovariateError("covariate is constant across all rows")
    return replace(ds, x=centered / sd, standardized=True)


def gen_covariate(structure: str, n: int, m: int, seed) -> np.ndarray:
    """Covariate values for a balanced design, rows ordered area by area.

    C1: iid N(0, 1). C2: N(mu_i, 1) with area means mu_i ~ N(0, 1).
    C3: x_ij = mu_i, constant within each area.
    """
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    if structure == "C1":
        return rng.standard_normal(n * m)
    if structure == "C2":
        mu = rng.standard_normal(n)
        return np.repeat(mu, m) + rng.standard_normal(n * m)
    if structure == "C3":
        return np.repeat(rng.standard_normal(n), m)
    raise ValueError(f"unknown covariate structure {structure!r}; expected one of {STRUCTURES}")


@dataclass(frozen=True, eq=False)
class TrueParams:
    """Generating parameters. ``theta`` is filled in by :func:`simulate_dataset`."""

    beta0: float
    beta1: float
    cov: CovarianceSpec
    theta: np.ndarray | None = None


def sample_theta(spec: SpectralLaplacian, cov: CovarianceSpec, rng) -> np.ndarray:
    """Draw ``theta ~ N(0, tau2 Q(rho)^{-1})`` as ``U diag(tau / sqrt(q)) z``."""
    z = rng.standard_normal(spec.n)
    scale = np.sqrt(cov.tau2) / np.sqrt(q_eigenvalues(spec, cov.rho))
    return spec.eigvecs @ (scale * z)


def simulate_dataset(spec: SpectralLaplacian, params: TrueParams, structure: str,
                     m: int, seed) -> tuple[MultilevelDataset, TrueParams]:
    """Forward-simulate a balanced dataset.

    Independent child streams of ``seed`` feed the covariate, the random
    effects and the noise, so changing ``cov`` does not perturb the covariate
    draw. The returned dataset is *not* standardized.
    """
    n = spec.n
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_x, s_theta, s_eps = ss.spawn(3)
    x = gen_covariate(structure, n, m, s_x)
    theta = sample_theta(spec, params.cov, np.random.default_rng(s_theta))
    area = np.repeat(np.arange(n), m)
    eps = np.sqrt(params.cov.sigma2) * np.random.default_rng(s_eps).standard_normal(n * m)
    y = params.beta0 + params.beta1 * x + theta[area] + eps
    ds = MultilevelDataset(n=n, y=y, x=x, area=area)
    return ds, replace(params, theta=theta)


def write_dataset(ds: MultilevelDataset, path=None) -> str:
    """CSV with header ``area,y,x`` (or ``x1..xk``), 1-based areas, 17 significant digits."""
    k = ds.x.shape[1]
    xcols = ["x"] if k == 1 else [f"x{c + 1}" for c in range(k)]
    buf = io.StringIO()
    buf.write(",".join(["area", "y", *xcols]) + "\n")
    for a, yv, xrow in zip(ds.area, ds.y, ds.x):
        buf.write(f"{a + 1},{yv:.17g}," + ",".join(f"{v:.17g}" for v in xrow) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_dataset(text: str, n: int | None = None) -> MultilevelDataset:
    """Parse dataset CSV. ``n`` defaults to the largest area index present."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetError("empty dataset file") from None
    if len(header) < 3 or header[0] != "area" or header[1] != "y":
        raise DatasetError(f"expected header 'area,y,x', got {','.join(header)!r}")
    ncov = len(header) - 2
    areas, ys, xs = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != ncov + 2:
            raise DatasetError(f"line {lineno}: expected {ncov + 2} fields, got {len(row)}")
        try:
            areas.append(int(row[0]))
            ys.append(float(row[1]))
            xs.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
    if not areas:
        raise DatasetError("dataset has no rows")
    area = np.array(areas, dtype=np.int64)
    if area.min() < 1:
        raise DatasetError("area indices are 1-based")
    if n is None:
        n = int(area.max())
    elif area.max() > n:
        raise DatasetError(f"area index {area.max()} exceeds map size {n}")
    return MultilevelDataset(n=n, y=np.array(ys), x=np.array(xs), area=area - 1)


def load_dataset(path, n: int | None = None) -> MultilevelDataset:
    with open(path, encoding="utf-8") as fh:
        return read_dataset(fh.read(), n=n)
