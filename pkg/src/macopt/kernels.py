"""Hot numeric kernels.

Every function here is plain numpy/python that numba can compile.  Which path
runs is decided by :mod:`macopt._jit`.  Callers go through the thin wrappers in
the higher-level modules; nothing here validates its inputs.
"""
import math

import numpy as np

from ._jit import USE_NUMBA, njit

TAU_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# discharge function, compiled form
# ---------------------------------------------------------------------------
@njit
def g_eval(kind, a, xs, ys, n, d):
    """Return ``(g, g', g'')`` at ``d`` for kind 0 (quadratic) or 1 (table)."""
    if kind == 0:
        return d - a * d * d, 1.0 - 2.0 * a * d, -2.0 * a
    # piecewise linear; the last segment is continued past the table end
    k = 1
    while k < n - 1 and xs[k] < d:
        k += 1
    slope = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1])
    return ys[k - 1] + slope * (d - xs[k - 1]), slope, 0.0


# ---------------------------------------------------------------------------
# perspective objective:  sum_k w_k * tau * ln(base_k + sum_j (g(e_j/tau) - gamma_j))
# ---------------------------------------------------------------------------
@njit
def perspective_eval(x, w, tau_idx, base, ptr, evar, euser,
                     ukind, ua, ugamma, tabx, taby, tabn, lin, want_hess):
    """Value, gradient and (optionally) Hessian of a sum of perspective terms.

    Returns ``(f, grad, hess, ok)``; ``ok`` is False when some logarithm argument
    is not positive (the point is outside the objective's domain).
    """
    nx = x.shape[0]
    grad = lin.copy()
    f = 0.0
    for i in range(nx):
        f += lin[i] * x[i]
    hsize = nx if want_hess else 1
    hess = np.zeros((hsize, hsize))
    ok = True
    nterms = w.shape[0]
    for k in range(nterms):
        wk = w[k]
        ti = tau_idx[k]
        tau_raw = x[ti]
        if tau_raw <= 0.0:
            continue  # a closed phase contributes nothing
        tau = tau_raw if tau_raw > TAU_FLOOR else TAU_FLOOR
        lo = ptr[k]
        hi = ptr[k + 1]
        m = hi - lo
        rho = np.empty(m)
        g1 = np.empty(m)
        g2 = np.empty(m)
        s = base[k]
        for jj in range(m):
            j = evar[lo + jj]
            u = euser[lo + jj]
            r = x[j] / tau
            if r < 0.0:
                r = 0.0
            gv, gd, gdd = g_eval(ukind[u], ua[u], tabx[u], taby[u], tabn[u], r)
            rho[jj] = r
            g1[jj] = gd
            g2[jj] = gdd
            s += gv - ugamma[u]
        if s <= 0.0:
            ok = False
            continue
        logs = math.log(s)
        if tau_raw > TAU_FLOOR:
            f += wk * tau_raw * logs
        cross = 0.0
        for jj in range(m):
            cross += rho[jj] * g1[jj]
        grad[ti] += wk * (logs - cross / s)
        for jj in range(m):
            grad[evar[lo + jj]] += wk * g1[jj] / s
        if want_hess:
            # Hessian of h(rho) = ln(s): diag(g''/s) - g' g'^T / s^2, lifted to
            # the perspective (tau, e) coordinates with a 1/tau factor.
            c = wk / tau
            hr = np.empty(m)  # H_h @ rho
            for jj in range(m):
                hr[jj] = g2[jj] / s * rho[jj] - g1[jj] * cross / (s * s)
            rhr = 0.0
            for jj in range(m):
                rhr += rho[jj] * hr[jj]
            hess[ti, ti] += c * rhr
            for jj in range(m):
                vj = evar[lo + jj]
                hess[ti, vj] -= c * hr[jj]
                hess[vj, ti] -= c * hr[jj]
                for ll in range(m):
                    vl = evar[lo + ll]
                    hjl = -g1[jj] * g1[ll] / (s * s)
                    if jj == ll:
                        hjl += g2[jj] / s
                    hess[vj, vl] += c * hjl
    return f, grad, hess, ok


@njit
def term_values(x, tau_idx, base, ptr, evar, euser, ukind, ua, ugamma, tabx, taby, tabn):
    """Unweighted value of every perspective term (0 for an empty phase)."""
    nterms = tau_idx.shape[0]
    out = np.zeros(nterms)
    for k in range(nterms):
        tau = x[tau_idx[k]]
        if tau <= TAU_FLOOR:
            continue
        s = base[k]
        for q in range(ptr[k], ptr[k + 1]):
            u = euser[q]
            r = x[evar[q]] / tau
            if r < 0.0:
                r = 0.0
            gv, gd, gdd = g_eval(ukind[u], ua[u], tabx[u], taby[u], tabn[u], r)
            s += gv - ugamma[u]
        out[k] = tau * math.log(s) if s > 0.0 else -np.inf
    return out


# ---------------------------------------------------------------------------
# non-negative least squares (Lawson-Hanson) and least-distance projection
# ---------------------------------------------------------------------------
@njit
def nnls(E, f, max_iter):
    """Solve ``min ||E u - f||`` subject to ``u >= 0``.

    Returns ``(u, residual_norm, iterations)``.
    """
    m, n = E.shape
    u = np.zeros(n)
    passive = np.zeros(n, dtype=np.bool_)
    resid = f - E @ u
    wv = E.T @ resid
    tol = 10.0 * 2.220446049250313e-16 * max(m, n) * (np.abs(E).max() + 1.0) * (np.abs(f).max() + 1.0)
    it = 0
    while it < max_iter:
        best = -1
        bestw = tol
        for j in range(n):
            if not passive[j] and wv[j] > bestw:
                bestw = wv[j]
                best = j
        if best < 0:
            break
        passive[best] = True
        while True:
            it += 1
            idx = np.nonzero(passive)[0]
            Ep = np.ascontiguousarray(E[:, idx])
            sol = np.linalg.lstsq(Ep, f)[0]
            z = np.zeros(n)
            for q in range(idx.shape[0]):
                z[idx[q]] = sol[q]
            allpos = True
            for q in range(idx.shape[0]):
                if z[idx[q]] <= 0.0:
                    allpos = False
                    break
            if allpos:
                u = z
                break
            alpha = 1.0
            for q in range(idx.shape[0]):
                j = idx[q]
                if z[j] <= 0.0:
                    denom = u[j] - z[j]
                    ratio = u[j] / denom if denom > 0.0 else 0.0
                    if ratio < alpha:
                        alpha = ratio
            for j in range(n):
                u[j] = u[j] + alpha * (z[j] - u[j])
            for q in range(idx.shape[0]):
                j = idx[q]
                if u[j] <= tol:
                    u[j] = 0.0
                    passive[j] = False
            if it >= max_iter:
                break
        resid = f - E @ u
        wv = E.T @ resid
    resid = f - E @ u
    return u, math.sqrt(resid @ resid), it


@njit
def project_ldp(A, b, y):
    """Euclidean projection of ``y`` onto ``{x : A x <= b}`` via least distance.

    Returns ``(x, ok)``; ``ok`` is False when the polytope is empty.
    """
    m, n = A.shape
    h = A @ y - b
    if h.max() <= 0.0:
        return y.copy(), True
    # min ||z|| s.t. -A z >= h  <=>  NNLS with E = [-A^T; h^T], f = e_{n+1}
    E = np.empty((n + 1, m))
    for i in range(m):
        for j in range(n):
            E[j, i] = -A[i, j]
        E[n, i] = h[i]
    f = np.zeros(n + 1)
    f[n] = 1.0
    u, rn, it = nnls(E, f, 50 * (m + n) + 100)
    r = E @ u - f
    if abs(r[n]) < 1e-14:
        return y.copy(), False
    z = -r[:n] / r[n]
    return y + z, True


@njit
def project_dykstra(A, b, y, tol, max_sweeps):
    """Cyclic Dykstra projection onto the intersection of half-spaces.

    Returns ``(x, sweeps)``.
    """
    m, n = A.shape
    x = y.copy()
    incr = np.zeros((m, n))
    norms = np.empty(m)
    for i in range(m):
        norms[i] = A[i] @ A[i]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        change = 0.0
        for i in range(m):
            if norms[i] == 0.0:
                continue
            prev = x.copy()
            v = x + incr[i]
            viol = A[i] @ v - b[i]
            if viol > 0.0:
                x = v - (viol / norms[i]) * A[i]
            else:
                x = v
            incr[i] = v - x
            d = np.abs(x - prev).max()
            if d > change:
                change = d
        if change <= tol:
            break
    return x, sweeps


# ---------------------------------------------------------------------------
# brute-force grid for the single-user problem
# ---------------------------------------------------------------------------
@njit
def _grid_p1_loop(kind, a, xs, ys, n, B, gamma, tau_lo, tau_hi, n_tau, d_lo, d_hi, n_d):
    best = -1.0
    bt = 0.0
    bd = 0.0
    slack = B * (1.0 + 1e-12)
    # the gain depends on d only
    ds = np.empty(n_d)
    gain = np.empty(n_d)
    for k in range(n_d):
        d = d_lo + (d_hi - d_lo) * k / (n_d - 1)
        ds[k] = d
        p = g_eval(kind, a, xs, ys, n, d)[0] - gamma
        gain[k] = math.log1p(p) if p > 0.0 else 0.0
    for i in range(n_tau):
        tau = tau_lo + (tau_hi - tau_lo) * i / (n_tau - 1)
        if tau <= 0.0:
            continue
        for k in range(n_d):
            d = ds[k]
            if d < 0.0 or tau * d > slack:
                continue
            rate = tau * gain[k]
            if rate > best:
                best = rate
                bt = tau
                bd = d
    return best, bt, bd


def _grid_p1_numpy(kind, a, xs, ys, n, B, gamma, tau_lo, tau_hi, n_tau, d_lo, d_hi, n_d):
    taus = np.linspace(tau_lo, tau_hi, n_tau)
    ds = np.linspace(d_lo, d_hi, n_d)
    if kind == 0:
        gd = ds - a * ds * ds
    else:
        gd = np.interp(ds, xs[:n], ys[:n])
        slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])
        tail = ds > xs[n - 1]
        gd[tail] = ys[n - 1] + slope * (ds[tail] - xs[n - 1])
    gain = np.log1p(np.maximum(gd - gamma, 0.0))
    slack = B * (1.0 + 1e-12)
    best, bt, bd = -1.0, 0.0, 0.0
    for lo in range(0, n_tau, 256):
        tt = taus[lo:lo + 256, None]
        rate = tt * gain[None, :]
        rate = np.where((tt > 0.0) & (ds[None, :] >= 0.0) & (tt * ds[None, :] <= slack), rate, -1.0)
        flat = int(np.argmax(rate))
        i, k = divmod(flat, n_d)
        if rate[i, k] > best:
            best, bt, bd = float(rate[i, k]), float(taus[lo + i]), float(ds[k])
    return best, bt, bd


grid_p1 = _grid_p1_loop if USE_NUMBA else _grid_p1_numpy
