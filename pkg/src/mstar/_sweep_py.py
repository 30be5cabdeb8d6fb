"""Pure-Python block sweep. Mirrors ``_sweep.pyx`` operation for operation.

Both backends must perform the same floating-point operations in the same
order so that a chain is bit-identical whichever one runs it. Keep the two
files in lockstep.
"""

import math


def _expit(psi):
    if psi >= 0.0:
        return 1.0 / (1.0 + math.exp(-psi))
    e = math.exp(psi)
    return e / (1.0 + e)


def run_block(m_i, ysum, xsum, xty, xtx_inv, chol, wyy, wxy, wxx,
              indptr, indices, deg, eigvals,
              beta, theta, scal,
              a, b, spatial, upd_beta, upd_theta, upd_sigma2, upd_tau2, upd_rho,
              burn_in, t0, adapt_c, adapt_gamma, target, rho_eps,
              z_beta, z_theta, g_sigma, g_tau, z_rho, u_rho,
              trace, acc):
    """Run ``len(g_sigma)`` full sweeps in place.

    ``scal`` holds ``[sigma2, tau2, rho, log_scale]``. Returns -1 on success
    or the 1-based global iteration at which the state became non-finite.
    """
    n = len(ysum)
    p = len(xty)
    n_iter = len(g_sigma)

    m_i = m_i.tolist()
    ysum = ysum.tolist()
    xsum = xsum.tolist()
    xty = xty.tolist()
    xtx_inv = xtx_inv.tolist()
    chol = chol.tolist()
    wxy = wxy.tolist()
    wxx = wxx.tolist()
    indptr = indptr.tolist()
    indices = indices.tolist()
    deg = deg.tolist()
    eigvals = eigvals.tolist()
    bet = beta.tolist()
    th = theta.tolist()
    sigma2, tau2, rho, log_s = scal.tolist()
    rhs = [0.0] * p
    esum = [0.0] * n

    status = -1
    try:
        for k in range(n_iter):
            t = t0 + k + 1
            accepted = 0

            if upd_beta:
                for j in range(p):
                    s = xty[j]
                    for i in range(n):
                        s -= xsum[i][j] * th[i]
                    rhs[j] = s
                sd = math.sqrt(sigma2)
                zb = z_beta[k]
                for j in range(p):
                    mu = 0.0
                    for l in range(p):
                        mu += xtx_inv[j][l] * rhs[l]
                    noise = 0.0
                    for l in range(j + 1):
                        noise += chol[j][l] * float(zb[l])
                    bet[j] = mu + sd * noise

            for i in range(n):
                s = ysum[i]
                for j in range(p):
                    s -= xsum[i][j] * bet[j]
                esum[i] = s

            if upd_theta:
                zt = z_theta[k]
                for i in range(n):
                    if spatial:
                        nb = 0.0
                        for q in range(indptr[i], indptr[i + 1]):
                            nb += th[indices[q]]
                        prec = m_i[i] / sigma2 + ((1.0 - rho) + rho * deg[i]) / tau2
                        var = 1.0 / prec
                        mu = var * (esum[i] / sigma2 + rho * nb / tau2)
                    else:
                        prec = m_i[i] / sigma2 + 1.0 / tau2
                        var = 1.0 / prec
                        mu = var * (esum[i] / sigma2)
                    th[i] = mu + math.sqrt(var) * float(zt[i])

            if upd_sigma2:
                within = wyy
                for j in range(p):
                    within -= 2.0 * bet[j] * wxy[j]
                for j in range(p):
                    for l in range(p):
                        within += bet[j] * wxx[j][l] * bet[l]
                if within < 0.0:
                    within = 0.0
                between = 0.0
                for i in range(n):
                    r = esum[i] - m_i[i] * th[i]
                    between += r * r / m_i[i]
                sigma2 = (b + 0.5 * (within + between)) / float(g_sigma[k])

            if upd_tau2 or (spatial and upd_rho):
                sq = 0.0
                lap = 0.0
                for i in range(n):
                    sq += th[i] * th[i]
                    if spatial:
                        for q in range(indptr[i], indptr[i + 1]):
                            nbr = indices[q]
                            if nbr > i:
                                diff = th[i] - th[nbr]
                                lap += diff * diff

            if upd_tau2:
                if spatial:
                    quad = (1.0 - rho) * sq + rho * lap
                else:
                    quad = sq
                tau2 = (b + 0.5 * quad) / float(g_tau[k])

            if spatial and upd_rho:
                step = math.exp(log_s)
                psi = math.log(rho / (1.0 - rho))
                rho_new = _expit(psi + step * float(z_rho[k]))
                if rho_new < rho_eps:
                    rho_new = rho_eps
                elif rho_new > 1.0 - rho_eps:
                    rho_new = 1.0 - rho_eps
                logr = 0.0
                for i in range(n):
                    logr += math.log(rho_new * eigvals[i] + 1.0 - rho_new) \
                        - math.log(rho * eigvals[i] + 1.0 - rho)
                logr = 0.5 * logr
                logr -= (rho_new - rho) / (2.0 * tau2) * (lap - sq)
                logr += math.log(rho_new * (1.0 - rho_new)) - math.log(rho * (1.0 - rho))
                u = float(u_rho[k])
                if u == 0.0 or math.log(u) < logr:
                    rho = rho_new
                    accepted = 1
                if t <= burn_in:
                    log_s += adapt_c * math.pow(t, -adapt_gamma) * (accepted - target)

            total = sigma2 + tau2 + rho
            for j in range(p):
                total += bet[j]
            for i in range(n):
                total += th[i]
            if not math.isfinite(total):
                status = t
                break

            row = trace[k]
            for j in range(p):
                row[j] = bet[j]
            row[p] = sigma2
            row[p + 1] = tau2
            row[p + 2] = rho
            acc[k] = accepted
    except (ZeroDivisionError, OverflowError, ValueError):
        status = t0 + k + 1

    beta[:] = bet
    theta[:] = th
    scal[0] = sigma2
    scal[1] = tau2
    scal[2] = rho
    scal[3] = log_s
    return status
