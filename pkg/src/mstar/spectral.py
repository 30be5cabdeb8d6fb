"""Laplacian eigendecomposition and the Leroux precision / marginal covariance algebra.

With ``L = U diag(lam) U^T`` the Leroux precision is
``Q(rho) = rho L + (1 - rho) I = U diag(rho lam + 1 - rho) U^T``, so
determinants, quadratic forms and the inverse of the marginal covariance
``Omega = tau2 Z Q^{-1} Z^T + sigma2 I`` all reduce to sums over the spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BalanceError, MstarError, NotConnectedError

__all__ = [
    "MAX_UNITS",
    "SpectralLaplacian",
    "CovarianceSpec",
    "decompose",
    "q_eigenvalues",
    "log_det_q",
    "theta_quadform",
    "omega_inverse_action",
    "dense_q",
    "dense_omega",
]

# dense eigensolver; the largest map in the reference design has 400 units
MAX_UNITS = 2000
ZERO_EIG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralLaplacian:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of ``L``."""

    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def n(self) -> int:
        return self.eigvals.shape[0]


@dataclass(frozen=True)
class CovarianceSpec:
    """Observation variance, spatial variance and spatial correlation."""

    sigma2: float
    tau2: float
    rho: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not (self.tau2 > 0 and np.isfinite(self.tau2)):
            raise ValueError(f"tau2 must be positive, got {self.tau2}")
        _check_rho(self.rho)

    @property
    def kappa(self) -> float:
        return self.tau2 / self.sigma2


def _check_rho(rho):
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")


def decompose(L, require_connected: bool = True) -> SpectralLaplacian:
    """Symmetric eigendecomposition of a graph Laplacian.

    The smallest eigenvalue is clamped to exactly 0 when within 1e-9 of it,
    and each eigenvector is sign-normalized so its first entry with
    magnitude above 1e-12 is positive.

    Raises
    ------
    NotConnectedError
        If ``require_connected`` and the second eigenvalue is <= 1e-9.
    MstarError
        On eigensolver failure or ``n > MAX_UNITS``.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError(f"Laplacian must be square, got shape {L.shape}")
    if n > MAX_UNITS:
        raise MstarError(f"dense eigensolver limited to {MAX_UNITS} units, got {n}")
    try:
        lam, U = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise MstarError(f"eigendecomposition failed: {exc}") from exc
    if abs(lam[0]) <= ZERO_EIG_TOL:
        lam[0] = 0.0
    if require_connected and n > 1 and lam[1] <= ZERO_EIG_TOL:
        raise NotConnectedError(
            f"algebraic connectivity {lam[1]:.3g} <= {ZERO_EIG_TOL}; map is not connected"
        )
    for k in range(n):
        col = U[:, k]
        first = np.flatnonzero(np.abs(col) > 1e-12)[0]
        if col[first] < 0:
            U[:, k] = -col
    lam.setflags(write=False)
    U.setflags(write=False)
    return SpectralLaplacian(lam, U)


def q_eigenvalues(spec: SpectralLaplacian, rho: float) -> np.ndarray:
    """Eigenvalues ``rho * lam + 1 - rho`` of ``Q(rho)``."""
    _check_rho(rho)
    return rho * spec.eigvals + (1.0 - rho)


def log_det_q(spec: SpectralLaplacian, rho: float) -> float:
    return float(np.sum(np.log(q_eigenvalues(spec, rho))))


def theta_quadform(spec: SpectralLaplacian, rho: float, theta) -> float:
    """``theta^T Q(rho) theta`` evaluated in the eigenbasis."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n,):
        raise ValueError(f"theta must have shape ({spec.n},), got {theta.shape}")
    alpha = spec.eigvecs.T @ theta
    return float(np.sum(q_eigenvalues(spec, rho) * alpha**2))


def _balanced_m(membership, n):
    membership = np.asarray(membership)
    counts = np.bincount(membership, minlength=n)
    if counts.shape[0] != n or counts.min() != counts.max():
        raise BalanceError("Woodbury form requires the same number of rows in every area")
    return int(counts[0])


def omega_inverse_action(spec: SpectralLaplacian, cov: CovarianceSpec, m: int, v, membership):
    """Apply ``Omega^{-1}`` to a vector without forming any ``nm x nm`` matrix.

    ``Omega^{-1} v = v / sigma2 - (tau2 / sigma2) Z U diag(c) U^T Z^T v`` with
    ``c_i = 1 / (sigma2 q_i + m tau2)``; ``Z^T v`` is the vector of area sums.

    Parameters
    ----------
    m : int
        Rows per area. Must agree with ``membership``.
    v : array_like, shape (n*m,) or (n*m, k)
    membership : array_like of int
        0-based area index for each row.
    """
    n = spec.n
    membership = np.asarray(membership, dtype=np.int64)
    if _balanced_m(membership, n) != m:
        raise BalanceError(f"membership has {membership.shape[0] // n} rows per area, not m={m}")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != membership.shape[0]:
        raise ValueError(f"v has {v.shape[0]} rows, membership has {membership.shape[0]}")
    s2, t2 = cov.sigma2, cov.tau2
    c = 1.0 / (s2 * q_eigenvalues(spec, cov.rho) + m * t2)
    area_sums = np.zeros((n,) + v.shape[1:])
    np.add.at(area_sums, membership, v)
    proj = spec.eigvecs.T @ area_sums
    back = spec.eigvecs @ (c.reshape((n,) + (1,) * (v.ndim - 1)) * proj)
    return v / s2 - (t2 / s2) * back[membership]


def dense_q(L, rho: float) -> np.ndarray:
    """``rho L + (1 - rho) I`` formed densely (test oracle)."""
    L = np.asarray(L, dtype=float)
    return rho * L + (1.0 - rho) * np.eye(L.shape[0])


def dense_omega(L, cov: CovarianceSpec, membership) -> np.ndarray:
    """``tau2 Z Q^{-1} Z^T + sigma2 I`` formed densely (test oracle)."""
    membership = np.asarray(membership, dtype=np.int64)
    n = np.asarray(L).shape[0]
    Z = np.zeros((membership.shape[0], n))
    Z[np.arange(membership.shape[0]), membership] = 1.0
    Qinv = np.linalg.inv(dense_q(L, cov.rho))
    return cov.tau2 * Z @ Qinv @ Z.T + cov.sigma2 * np.eye(membership.shape[0])
