import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mstar.errors import BalanceError, NotConnectedError
from mstar.graph import AreaGraph, build_laplacian, generate_grid_queen, generate_random_connected
from mstar.spectral import (CovarianceSpec, decompose, dense_omega, dense_q, log_det_q,
                            omega_inverse_action, q_eigenvalues, theta_quadform)


def path_spec():
    return decompose(build_laplacian(AreaGraph(3, [(0, 1), (1, 2)])))


def random_spec(n, seed):
    g = generate_random_connected(n, seed)
    L = build_laplacian(g)
    return L, decompose(L)


def test_path_eigenvalues():
    # characteristic polynomial of [[1,-1,0],[-1,2,-1],[0,-1,1]] is -x(x-1)(x-3)
    np.testing.assert_allclose(path_spec().eigvals, [0, 1, 3], atol=1e-12)
    assert path_spec().eigvals[0] == 0.0


def test_k4_eigenvalues():
    spec = decompose(build_laplacian(generate_grid_queen(2, 2)))
    np.testing.assert_allclose(spec.eigvals, [0, 4, 4, 4], atol=1e-12)


def test_single_unit():
    spec = decompose(build_laplacian(AreaGraph(1)))
    assert spec.eigvals.tolist() == [0.0]
    assert spec.eigvecs.tolist() == [[1.0]]


def test_disconnected_rejected():
    with pytest.raises(NotConnectedError):
        decompose(build_laplacian(AreaGraph(3, [(0, 1)])))


def test_sign_convention():
    _, spec = random_spec(12, 0)
    for k in range(12):
        col = spec.eigvecs[:, k]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_decomposition_invariants(n, seed):
    L, spec = random_spec(n, seed)
    U, lam = spec.eigvecs, spec.eigvals
    assert np.abs(U.T @ U - np.eye(n)).max() <= 1e-10
    assert lam[0] == 0.0 and lam[1] > 1e-9
    assert np.all(np.diff(lam) >= 0)
    assert np.abs(L @ U - U * lam).max() <= 1e-8
    assert np.abs(U @ np.diag(lam) @ U.T - L).max() <= 1e-8
    a = np.random.default_rng(seed).standard_normal(n)
    assert np.linalg.norm(U.T @ a) ** 2 == pytest.approx(np.linalg.norm(a) ** 2, rel=1e-10)


def test_q_eigenvalues_examples():
    spec = path_spec()
    assert q_eigenvalues(spec, 0.0).tolist() == [1.0, 1.0, 1.0]
    np.testing.assert_allclose(q_eigenvalues(spec, 0.5), [0.5, 1.0, 2.0], atol=1e-12)
    assert q_eigenvalues(spec, 0.95)[0] == pytest.approx(0.05)
    with pytest.raises(ValueError):
        q_eigenvalues(spec, 1.0)
    with pytest.raises(ValueError):
        q_eigenvalues(spec, -0.1)


@given(st.floats(0, 0.999999))
def test_q_eigenvalues_positive(rho):
    _, spec = random_spec(15, 2)
    assert (q_eigenvalues(spec, rho) > 0).all()


def test_log_det_q():
    spec = path_spec()
    assert log_det_q(spec, 0.0) == 0.0
    assert log_det_q(spec, 0.5) == pytest.approx(0.0, abs=1e-12)
    L, spec = random_spec(6, 9)
    sign, dense = np.linalg.slogdet(dense_q(L, 0.7))
    assert sign == 1
    assert log_det_q(spec, 0.7) == pytest.approx(dense, abs=1e-8)
    assert log_det_q(spec, 0.7) == float(np.sum(np.log(q_eigenvalues(spec, 0.7))))


def test_theta_quadform():
    L, spec = random_spec(5, 4)
    theta = np.random.default_rng(1).standard_normal(5)
    assert theta_quadform(spec, 0.3, np.zeros(5)) == 0.0
    assert theta_quadform(spec, 0.0, theta) == pytest.approx(theta @ theta, rel=1e-12)
    assert theta_quadform(spec, 0.6, theta) == pytest.approx(theta @ dense_q(L, 0.6) @ theta, rel=1e-12)
    with pytest.raises(ValueError):
        theta_quadform(spec, 0.5, np.zeros(4))


def test_omega_inverse_tau_limit():
    _, spec = random_spec(4, 3)
    area = np.repeat(np.arange(4), 3)
    v = np.random.default_rng(0).standard_normal(12)
    out = omega_inverse_action(spec, CovarianceSpec(2.0, 1e-12, 0.4), 3, v, area)
    np.testing.assert_allclose(out, v / 2.0, rtol=1e-10)


def test_omega_inverse_iid_case():
    L, spec = random_spec(5, 8)
    area = np.repeat(np.arange(5), 2)
    cov = CovarianceSpec(0.7, 1.3, 0.0)
    Z = np.zeros((10, 5))
    Z[np.arange(10), area] = 1
    v = np.random.default_rng(2).standard_normal(10)
    dense = np.linalg.solve(1.3 * Z @ Z.T + 0.7 * np.eye(10), v)
    np.testing.assert_allclose(omega_inverse_action(spec, cov, 2, v, area), dense, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 4), st.sampled_from([0.0, 0.3, 0.7, 0.95]),
       st.floats(0.05, 5), st.floats(0.05, 5), st.integers(0, 2**32 - 1))
def test_omega_inverse_is_inverse(n, m, rho, s2, t2, seed):
    L, spec = random_spec(n, seed)
    area = np.repeat(np.arange(n), m)
    cov = CovarianceSpec(s2, t2, rho)
    v = np.random.default_rng(seed).standard_normal(n * m)
    out = omega_inverse_action(spec, cov, m, v, area)
    assert np.abs(dense_omega(L, cov, area) @ out - v).max() <= 1e-8


def test_omega_inverse_unsorted_membership_and_matrix_input():
    L, spec = random_spec(4, 1)
    rng = np.random.default_rng(5)
    area = rng.permutation(np.repeat(np.arange(4), 3))
    cov = CovarianceSpec(1.0, 0.5, 0.8)
    V = rng.standard_normal((12, 2))
    out = omega_inverse_action(spec, cov, 3, V, area)
    np.testing.assert_allclose(dense_omega(L, cov, area) @ out, V, atol=1e-10)


def test_omega_inverse_requires_balance():
    _, spec = random_spec(3, 0)
    with pytest.raises(BalanceError):
        omega_inverse_action(spec, CovarianceSpec(1, 1, 0.5), 2, np.ones(5), [0, 0, 1, 1, 2])


def test_covariance_spec_validation():
    with pytest.raises(ValueError):
        CovarianceSpec(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        CovarianceSpec(1.0, -1.0, 0.5)
    with pytest.raises(ValueError):
        CovarianceSpec(1.0, 1.0, 1.0)
    assert CovarianceSpec(0.5, 0.25, 0.1).kappa == 0.5
