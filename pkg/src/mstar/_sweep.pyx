# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled block sweep. Mirrors ``_sweep_py.py`` operation for operation."""

from libc.math cimport exp, log, pow, sqrt, isfinite


cdef inline double _expit(double psi) noexcept nogil:
    cdef double e
    if psi >= 0.0:
        return 1.0 / (1.0 + exp(-psi))
    e = exp(psi)
    return e / (1.0 + e)


def run_block(const double[::1] m_i, const double[::1] ysum, const double[:, ::1] xsum,
              const double[::1] xty, const double[:, ::1] xtx_inv, const double[:, ::1] chol,
              double wyy, const double[::1] wxy, const double[:, ::1] wxx,
              const long long[::1] indptr, const long long[::1] indices,
              const double[::1] deg, const double[::1] eigvals,
              double[::1] beta, double[::1] theta, double[::1] scal,
              double a, double b, bint spatial, bint upd_beta, bint upd_theta,
              bint upd_sigma2, bint upd_tau2, bint upd_rho,
              long long burn_in, long long t0, double adapt_c, double adapt_gamma,
              double target, double rho_eps,
              const double[:, ::1] z_beta, const double[:, ::1] z_theta, const double[::1] g_sigma,
              const double[::1] g_tau, const double[::1] z_rho, const double[::1] u_rho,
              double[:, ::1] trace, signed char[::1] acc):
    cdef Py_ssize_t n = ysum.shape[0]
    cdef Py_ssize_t p = xty.shape[0]
    cdef Py_ssize_t n_iter = g_sigma.shape[0]
    cdef Py_ssize_t k, i, j, l, q, nbr
    cdef long long t
    cdef double sigma2 = scal[0], tau2 = scal[1], rho = scal[2], log_s = scal[3]
    cdef double s, sd, mu, noise, nb, prec, var, within, between, r
    cdef double sq = 0.0, lap = 0.0, diff, quad, step, psi, rho_new, logr, u, total
    cdef int accepted
    cdef long long status = -1
    cdef double[::1] rhs
    cdef double[::1] esum
    import numpy as np
    rhs = np.zeros(p)
    esum = np.zeros(n)

    with nogil:
        for k in range(n_iter):
            t = t0 + k + 1
            accepted = 0

            if upd_beta:
                for j in range(p):
                    s = xty[j]
                    for i in range(n):
                        s -= xsum[i, j] * theta[i]
                    rhs[j] = s
                sd = sqrt(sigma2)
                for j in range(p):
                    mu = 0.0
                    for l in range(p):
                        mu += xtx_inv[j, l] * rhs[l]
                    noise = 0.0
                    for l in range(j + 1):
                        noise += chol[j, l] * z_beta[k, l]
                    beta[j] = mu + sd * noise

            for i in range(n):
                s = ysum[i]
                for j in range(p):
                    s -= xsum[i, j] * beta[j]
                esum[i] = s

            if upd_theta:
                for i in range(n):
                    if spatial:
                        nb = 0.0
                        for q in range(indptr[i], indptr[i + 1]):
                            nb += theta[indices[q]]
                        prec = m_i[i] / sigma2 + ((1.0 - rho) + rho * deg[i]) / tau2
                        var = 1.0 / prec
                        mu = var * (esum[i] / sigma2 + rho * nb / tau2)
                    else:
                        prec = m_i[i] / sigma2 + 1.0 / tau2
                        var = 1.0 / prec
                        mu = var * (esum[i] / sigma2)
                    theta[i] = mu + sqrt(var) * z_theta[k, i]

            if upd_sigma2:
                within = wyy
                for j in range(p):
                    within -= 2.0 * beta[j] * wxy[j]
                for j in range(p):
                    for l in range(p):
                        within += beta[j] * wxx[j, l] * beta[l]
                if within < 0.0:
                    within = 0.0
                between = 0.0
                for i in range(n):
                    r = esum[i] - m_i[i] * theta[i]
                    between += r * r / m_i[i]
                sigma2 = (b + 0.5 * (within + between)) / g_sigma[k]

            if upd_tau2 or (spatial and upd_rho):
                sq = 0.0
                lap = 0.0
                for i in range(n):
                    sq += theta[i] * theta[i]
                    if spatial:
                        for q in range(indptr[i], indptr[i + 1]):
                            nbr = indices[q]
                            if nbr > i:
                                diff = theta[i] - theta[nbr]
                                lap += diff * diff

            if upd_tau2:
                if spatial:
                    quad = (1.0 - rho) * sq + rho * lap
                else:
                    quad = sq
                tau2 = (b + 0.5 * quad) / g_tau[k]

            if spatial and upd_rho:
                step = exp(log_s)
                psi = log(rho / (1.0 - rho))
                rho_new = _expit(psi + step * z_rho[k])
                if rho_new < rho_eps:
                    rho_new = rho_eps
                elif rho_new > 1.0 - rho_eps:
                    rho_new = 1.0 - rho_eps
                logr = 0.0
                for i in range(n):
                    logr += log(rho_new * eigvals[i] + 1.0 - rho_new) \
                        - log(rho * eigvals[i] + 1.0 - rho)
                logr = 0.5 * logr
                logr -= (rho_new - rho) / (2.0 * tau2) * (lap - sq)
                logr += log(rho_new * (1.0 - rho_new)) - log(rho * (1.0 - rho))
                u = u_rho[k]
                if u == 0.0 or log(u) < logr:
                    rho = rho_new
                    accepted = 1
                if t <= burn_in:
                    log_s += adapt_c * pow(<double>t, -adapt_gamma) * (accepted - target)

            total = sigma2 + tau2 + rho
            for j in range(p):
                total += beta[j]
            for i in range(n):
                total += theta[i]
            if not isfinite(total):
                status = t
                break

            for j in range(p):
                trace[k, j] = beta[j]
            trace[k, p] = sigma2
            trace[k, p + 1] = tau2
            trace[k, p + 2] = rho
            acc[k] = accepted

    scal[0] = sigma2
    scal[1] = tau2
    scal[2] = rho
    scal[3] = log_s
    return status
