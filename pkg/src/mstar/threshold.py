"""Closed-form precision of the regression-coefficient full conditional and the sample-size threshold.

For a balanced design with ``m`` rows per area and a covariate standardized
so ``x^T x = n m``, the precision of ``beta1 | rest`` under the Leroux model is

    nm / s2 - (m^2 t2 / s2) * sum_i d_i / (s2 (rho lam_i + 1 - rho) + m t2)

where ``d_i = (u_i^T xbar)^2`` are the squared projections of the area means
onto the Laplacian eigenvectors. Setting ``rho = 0`` gives the iid model.
Their absolute relative difference decays like ``1/m``; solving the
leading-order term for a tolerance ``gamma`` gives the threshold ``m*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePrecisionError
from .spectral import CovarianceSpec, SpectralLaplacian, q_eigenvalues

__all__ = [
    "INFINITE",
    "INFINITE_REL_TOL",
    "ThresholdReport",
    "projections",
    "precision_spatial",
    "precision_nonspatial",
    "relative_difference",
    "leading_order_difference",
    "m_star",
    "threshold_report",
    "UnbalancedVerdict",
    "conservative_m_star_unbalanced",
]

INFINITE = math.inf
# (n - sum xbar^2) / n at or below this counts as a purely area-level covariate
INFINITE_REL_TOL = 1e-8


def projections(spec: SpectralLaplacian, xbar) -> np.ndarray:
    """Squared projections ``d_i = (u_i^T xbar)^2``."""
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape != (spec.n,):
        raise ValueError(f"xbar must have shape ({spec.n},), got {xbar.shape}")
    return (spec.eigvecs.T @ xbar) ** 2


def _check_positive(value, label):
    if not value > 0:
        raise DegeneratePrecisionError(
            f"{label} precision is {value!r}; area means are inconsistent with x^T x = nm"
        )
    return value


def precision_spatial(spec: SpectralLaplacian, cov: CovarianceSpec, n: int, m: int, d) -> float:
    if cov.rho == 0.0:
        # every denominator equals s2 + m t2; share the iid arithmetic exactly
        return precision_nonspatial(cov, n, m, d)
    s2, t2 = cov.sigma2, cov.tau2
    denom = s2 * q_eigenvalues(spec, cov.rho) + m * t2
    value = n * m / s2 - (m * m * t2 / s2) * float(np.sum(np.asarray(d) / denom))
    return _check_positive(value, "spatial")


def precision_nonspatial(cov: CovarianceSpec, n: int, m: int, d) -> float:
    s2, t2 = cov.sigma2, cov.tau2
    d_dot = float(np.sum(d))
    value = n * m / s2 - m * m * t2 * d_dot / (s2 * (s2 + m * t2))
    return _check_positive(value, "nonspatial")


def relative_difference(spec: SpectralLaplacian, cov: CovarianceSpec, n: int, m: int, d) -> float:
    """Exact ``|prec(0) - prec(rho)| / prec(rho)``; equals the relative change in variance."""
    p_rho = precision_spatial(spec, cov, n, m, d)
    p_0 = precision_nonspatial(cov, n, m, d)
    return abs(p_0 - p_rho) / p_rho


def _numerator_sum(spec, d):
    return float(np.sum(np.asarray(d) * (1.0 - spec.eigvals)))


def _is_area_level(n, d_dot):
    return (n - d_dot) / n <= INFINITE_REL_TOL


def leading_order_difference(spec: SpectralLaplacian, cov: CovarianceSpec, n: int, m: int, d) -> float:
    """First-order term ``|rho s2 sum d_i (1 - lam_i)| / (t2 m (n - d.))``.

    Returns ``inf`` when the covariate is (numerically) purely area-level.
    """
    d_dot = float(np.sum(d))
    if _is_area_level(n, d_dot):
        return INFINITE
    return abs(cov.rho * cov.sigma2 * _numerator_sum(spec, d)) / (cov.tau2 * m * (n - d_dot))


def m_star(spec: SpectralLaplacian, cov: CovarianceSpec, gamma: float, xbar) -> float:
    """Within-area sample size beyond which the two models agree to tolerance ``gamma``.

    Returns an ``int`` (at least 2), or :data:`INFINITE` when the covariate
    has no within-area variation.
    """
    return threshold_report(spec, cov, gamma, xbar).m_star


@dataclass(frozen=True)
class ThresholdReport:
    d: np.ndarray
    d_dot: float
    numerator_sum: float
    m_star: float
    gamma: float
    rho: float
    kappa: float

    @property
    def infinite(self) -> bool:
        return math.isinf(self.m_star)

    def top_projections(self, k: int = 5) -> list[tuple[int, float]]:
        """``(eigen-index, d_i)`` pairs with the largest mass, 1-based index."""
        order = np.argsort(-self.d, kind="stable")[:k]
        return [(int(i) + 1, float(self.d[i])) for i in order]

    def to_text(self) -> str:
        """Key-value block, one field per line, in declaration order."""
        m = "INFINITE" if self.infinite else str(int(self.m_star))
        return "\n".join([
            "d: " + ",".join(repr(float(v)) for v in self.d),
            f"d_dot: {self.d_dot!r}",
            f"numerator_sum: {self.numerator_sum!r}",
            f"m_star: {m}",
            f"gamma: {self.gamma!r}",
            f"rho: {self.rho!r}",
            f"kappa: {self.kappa!r}",
        ]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ThresholdReport":
        fields = {}
        for line in text.strip().splitlines():
            key, _, value = line.partition(":")
            fields[key.strip()] = value.strip()
        m = fields["m_star"]
        return cls(
            d=np.array([float(v) for v in fields["d"].split(",") if v]),
            d_dot=float(fields["d_dot"]),
            numerator_sum=float(fields["numerator_sum"]),
            m_star=INFINITE if m == "INFINITE" else int(m),
            gamma=float(fields["gamma"]),
            rho=float(fields["rho"]),
            kappa=float(fields["kappa"]),
        )


def threshold_report(spec: SpectralLaplacian, cov: CovarianceSpec, gamma: float, xbar) -> ThresholdReport:
    if not gamma > 0:
        raise ValueError(f"tolerance gamma must be positive, got {gamma}")
    xbar = np.asarray(xbar, dtype=float)
    n = spec.n
    d = projections(spec, xbar)
    d_dot = float(np.sum(xbar**2))
    num = _numerator_sum(spec, d)
    if _is_area_level(n, d_dot):
        value = INFINITE
    else:
        bound = abs(cov.sigma2 * cov.rho * num) / (gamma * cov.tau2 * (n - d_dot))
        value = max(2, math.ceil(bound))
    return ThresholdReport(d=d, d_dot=d_dot, numerator_sum=num, m_star=value,
                           gamma=gamma, rho=cov.rho, kappa=cov.kappa)


@dataclass(frozen=True)
class UnbalancedVerdict:
    report: ThresholdReport
    min_m: int
    sufficient: bool

    @property
    def message(self) -> str:
        if self.report.infinite:
            return "spatial model required regardless of replication"
        if self.sufficient:
            return f"sufficient: min area size {self.min_m} >= m* = {int(self.report.m_star)}"
        return f"insufficient: min area size {self.min_m} < m* = {int(self.report.m_star)}"


def conservative_m_star_unbalanced(spec: SpectralLaplacian, cov: CovarianceSpec, gamma: float,
                                   xbar, m_i) -> UnbalancedVerdict:
    """Compare the threshold against the smallest area sample size."""
    m_i = np.asarray(m_i)
    if m_i.size == 0 or m_i.min() < 1:
        raise ValueError("every area needs at least one observation")
    report = threshold_report(spec, cov, gamma, xbar)
    min_m = int(m_i.min())
    return UnbalancedVerdict(report, min_m, (not report.infinite) and min_m >= report.m_star)
