"""Compiled pair sweep.

The same algorithm as the pure-Python pair update in :mod:`bvss.sampler`,
written as one numba function so that a sweep over all pairs runs without
interpreter overhead. Both implementations draw from the same
``numpy.random.Generator`` in the same order, so given equal inputs they make
the same discrete choices; the pure-Python one serves as the reference in
the tests.

The factor of ``V`` for the current support is kept as a lower Cholesky
factor in a preallocated buffer. A pair update deletes ``i`` and ``j`` from a
copy (a deletion is a rank-one update of the trailing block), computes the
three candidate factors by appending rows, and keeps the one for the sampled
case; every step is O(k^2) in the model size ``k``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

S_TOL = 1e-12
GL_SPAN = 5.0
DOWNDATE_RTOL = 1e-12
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_HALF_PI = 0.5 * math.log(0.5 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# status codes returned by sweep_kernel
OK = 0
ERR_NOT_PD = 1
ERR_COLLINEAR = 2
ERR_EMPTY = 3


# ---------------------------------------------------------------------------
# special functions


@njit(cache=True)
def erfcx(x):
    """``exp(x^2) erfc(x)`` for ``x >= 0``."""
    if x < 26.0:
        return math.exp(x * x) * math.erfc(x)
    t = 1.0 / (2.0 * x * x)
    # asymptotic series; the first omitted term is below 1e-17 relative at x = 26
    s = 1.0 - t * (1.0 - 3.0 * t * (1.0 - 5.0 * t * (1.0 - 7.0 * t * (1.0 - 9.0 * t * (1.0 - 11.0 * t)))))
    return s / (x * math.sqrt(math.pi))


@njit(cache=True)
def ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def ndtri(p):
    """Inverse standard normal CDF: rational start (Acklam) plus one Halley step."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q - 2.400758277161838e+00) * q
               - 2.549732539343734e+00) * q + 4.374664141464968e+00) * q + 2.938163982698783e+00) / (
            (((7.784695709041462e-03 * q + 3.224671290700398e-01) * q + 2.445134137142996e+00) * q
             + 3.754408661907416e+00) * q + 1.0)
    elif p > 1.0 - plow:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q - 2.400758277161838e+00) * q
                - 2.549732539343734e+00) * q + 4.374664141464968e+00) * q + 2.938163982698783e+00) / (
            (((7.784695709041462e-03 * q + 3.224671290700398e-01) * q + 2.445134137142996e+00) * q
             + 3.754408661907416e+00) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r - 2.759285104469687e+02) * r
               + 1.383577518672690e+02) * r - 3.066479806614716e+01) * r + 2.506628277459239e+00) * q / (
            ((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r - 1.556989798598866e+02) * r
              + 6.680131188771972e+01) * r - 1.328068155288572e+01) * r + 1.0)
    # Halley refinement; the residual is formed in the tail where p is small
    if x < 0:
        e = 0.5 * math.erfc(-x / _SQRT2) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
    u = e * _SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@njit(cache=True)
def log_tail_mass(a, b):
    """``log(Phi(b) - Phi(a))`` for ``0 <= a < b <= inf``."""
    if not np.isfinite(b):
        return -0.5 * a * a + math.log(0.5 * erfcx(a / _SQRT2))
    ea = erfcx(a / _SQRT2)
    eb = erfcx(b / _SQRT2) * math.exp(-0.5 * (b - a) * (b + a))
    return -0.5 * a * a + math.log(0.5) + math.log(max(ea - eb, 1e-300))


# ---------------------------------------------------------------------------
# truncated normal


@njit(cache=True)
def _std_tail_sample(a, b, rng):
    if log_tail_mass(a, b) >= math.log(1e-10):
        sa = ndtr(-a)
        sb = ndtr(-b) if np.isfinite(b) else 0.0
        p = sa - rng.random() * (sa - sb)
        return -ndtri(p)
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    if not np.isfinite(b) or lam * (b - a) > 1.0:
        while True:
            z = a + rng.exponential() / lam
            if z < b and rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
                return z
    while True:
        z = a + (b - a) * rng.random()
        if rng.random() <= math.exp(-0.5 * (z - a) * (z + a)):
            return z


@njit(cache=True)
def truncnorm(mean, var, lo, hi, rng):
    sd = math.sqrt(var)
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    if a >= 0:
        z = _std_tail_sample(a, b, rng)
    elif b <= 0:
        z = -_std_tail_sample(-b, -a, rng)
    else:
        pa = ndtr(a)
        pb = ndtr(b)
        if pb - pa >= 1e-10:
            z = ndtri(pa + rng.random() * (pb - pa))
        else:
            while True:
                z = a + (b - a) * rng.random()
                if rng.random() <= math.exp(-0.5 * z * z):
                    break
    x = mean + sd * z
    if x <= lo:
        x = np.nextafter(lo, hi)
    elif x >= hi:
        x = np.nextafter(hi, lo)
    return x


# ---------------------------------------------------------------------------
# pair conditional pieces


@njit(cache=True)
def log_gauss_segment(phi, lam, drift, s):
    c = phi * drift
    p = phi * lam
    span = abs(c * s) + 0.5 * abs(p) * s * s
    if span <= GL_SPAN:
        gm = -np.inf
        g = np.empty(_GL_X.size)
        for k in range(_GL_X.size):
            u = 0.5 * s * (_GL_X[k] + 1.0)
            g[k] = c * u - 0.5 * p * u * u
            if g[k] > gm:
                gm = g[k]
        acc = 0.0
        for k in range(_GL_X.size):
            acc += _GL_W[k] * math.exp(g[k] - gm)
        return gm + math.log(0.5 * s * acc)
    if p <= 0.0:
        x = c * s
        if c > 0:
            return x + math.log(-math.expm1(-x)) - math.log(c)
        return math.log(-math.expm1(x)) - math.log(-c)
    beta = drift / lam
    rp = math.sqrt(p)
    a = -beta * rp
    b = (s - beta) * rp
    if a >= 0:
        ea = erfcx(a / _SQRT2)
        eb = erfcx(b / _SQRT2) * math.exp(-0.5 * (b - a) * (b + a))
        return -0.5 * math.log(p) + _LOG_SQRT_HALF_PI + math.log(ea - eb)
    if b <= 0:
        ea = erfcx(-b / _SQRT2)
        eb = erfcx(-a / _SQRT2) * math.exp(-0.5 * (a - b) * (a + b))
        gs = c * s - 0.5 * p * s * s
        return gs - 0.5 * math.log(p) + _LOG_SQRT_HALF_PI + math.log(ea - eb)
    mass = 0.5 * (math.erf(b / _SQRT2) - math.erf(a / _SQRT2))
    return 0.5 * p * beta * beta - 0.5 * math.log(p) + _LOG_SQRT_2PI + math.log(mass)


@njit(cache=True)
def _log_model_weight(size, logdet, log_tau, log_theta, log_1m_theta, N):
    return (
        math.lgamma(size) - 0.5 * size * log_tau - 0.5 * logdet
        + size * log_theta + (N - size) * log_1m_theta
    )


@njit(cache=True)
def _draw_split(s, beta, lam, drift, phi, rng):
    if lam > 0:
        return truncnorm(beta, 1.0 / (phi * lam), 0.0, s, rng)
    c = phi * drift
    if abs(c * s) < 1e-12:
        u = s * rng.random()
    else:
        v = rng.random()
        u = math.log1p(v * math.expm1(c * s)) / c
    lo = np.nextafter(0.0, 1.0)
    hi = np.nextafter(s, 0.0)
    return min(max(u, lo), hi)


# ---------------------------------------------------------------------------
# factor buffer helpers


@njit(cache=True)
def _factor_from_scratch(G, act, k, tau, L):
    """Cholesky of ``G[act, act] + I / tau`` into ``L[:k, :k]``; False if not PD."""
    t = 1.0 / tau
    for r in range(k):
        for c in range(r + 1):
            acc = G[act[r], act[c]]
            if r == c:
                acc += t
            for q in range(c):
                acc -= L[r, q] * L[c, q]
            if r == c:
                if not acc > 0:
                    return False
                L[r, r] = math.sqrt(acc)
            else:
                L[r, c] = acc / L[c, c]
        for c in range(r + 1, k):
            L[r, c] = 0.0
    return True


@njit(cache=True)
def _delete(L, act, k, p, G, tau):
    """Remove position ``p`` from the factor in ``L[:k, :k]`` and ``act``; returns ok flag."""
    n = k - 1
    x = np.empty(n - p)
    for r in range(p + 1, k):
        x[r - p - 1] = L[r, p]
    old = np.empty(n - p)
    for r in range(p + 1, k):
        old[r - p - 1] = L[r, r]
    for r in range(p, n):
        act[r] = act[r + 1]
        for c in range(r + 1):
            L[r, c] = L[r + 1, c] if c < p else L[r + 1, c + 1]
    for c in range(k):
        L[n, c] = 0.0
    # rank-one update of the trailing block with x
    for q in range(n - p):
        kk = p + q
        lkk = L[kk, kk]
        r = math.hypot(lkk, x[q])
        cs = r / lkk
        sn = x[q] / lkk
        L[kk, kk] = r
        for m in range(kk + 1, n):
            L[m, kk] = (L[m, kk] + sn * x[m - p]) / cs
            x[m - p] = cs * x[m - p] - sn * L[m, kk]
    for q in range(n - p):
        if not L[p + q, p + q] > DOWNDATE_RTOL * old[q]:
            return _factor_from_scratch(G, act, n, tau, L)
    return True


@njit(cache=True)
def _forward(L, k, b, out):
    for r in range(k):
        acc = b[r]
        for c in range(r):
            acc -= L[r, c] * out[c]
        out[r] = acc / L[r, r]


# ---------------------------------------------------------------------------
# sweep


@njit(cache=True)
def sweep_kernel(mu, G, xty, yty, tau, phi, theta, rng):
    """One lexicographic pass over all pairs, updating ``mu`` in place.

    Returns ``(status, n_updates, k, act, L)`` where ``act[:k]`` and
    ``L[:k, :k]`` are the final support order and factor. ``status`` is
    ``OK`` or an error code.
    """
    N = mu.size
    t = 1.0 / tau
    log_tau = math.log(tau)
    log_theta = math.log(theta)
    log_1m = math.log1p(-theta)
    L = np.zeros((N, N))
    Lb = np.zeros((N, N))
    act = np.empty(N, np.int64)
    actb = np.empty(N, np.int64)
    k = 0
    for q in range(N):
        if mu[q] > 0:
            act[k] = q
            k += 1
    if k == 0:
        return ERR_EMPTY, 0, 0, act, L
    if not _factor_from_scratch(G, act, k, tau, L):
        return ERR_NOT_PD, 0, k, act, L
    gi = np.empty(N)
    gj = np.empty(N)
    cr = np.empty(N)
    vi = np.empty(N)
    vj = np.empty(N)
    zr = np.empty(N)
    zR = np.empty(N)
    n_upd = 0
    for i in range(N - 1):
        for j in range(i + 1, N):
            mi = mu[i]
            mj = mu[j]
            if mi == 0.0 and mj == 0.0:
                continue
            n_upd += 1
            s = mi + mj
            # base factor without i and j
            kb = k
            for r in range(k):
                actb[r] = act[r]
                for c in range(r + 1):
                    Lb[r, c] = L[r, c]
            for unit in (i, j):
                if mu[unit] > 0:
                    p = 0
                    while actb[p] != unit:
                        p += 1
                    if not _delete(Lb, actb, kb, p, G, tau):
                        return ERR_NOT_PD, n_upd, k, act, L
                    kb -= 1
            if not s > S_TOL:
                mu[i] = 0.0
                mu[j] = 0.0
                if kb != k:
                    L, Lb = Lb, L
                    act, actb = actb, act
                    k = kb
                continue
            # X'r restricted to R, i, j with r = y - X_R mu_R; and r'r
            mx = 0.0
            mgm = 0.0
            for a in range(kb):
                ua = actb[a]
                mx += mu[ua] * xty[ua]
                acc = 0.0
                for b2 in range(kb):
                    acc += G[ua, actb[b2]] * mu[actb[b2]]
                cr[a] = xty[ua] - acc
                mgm += mu[ua] * acc
            rr = yty - 2.0 * mx + mgm
            ci = xty[i]
            cj = xty[j]
            for a in range(kb):
                ua = actb[a]
                ci -= G[i, ua] * mu[ua]
                cj -= G[j, ua] * mu[ua]
                gi[a] = G[ua, i]
                gj[a] = G[ua, j]
            _forward(Lb, kb, gi, vi)
            _forward(Lb, kb, gj, vj)
            _forward(Lb, kb, cr, zr)
            vivi = 0.0
            vjvj = 0.0
            vivj = 0.0
            vizr = 0.0
            vjzr = 0.0
            zrzr = 0.0
            logdet_R = 0.0
            for a in range(kb):
                vivi += vi[a] * vi[a]
                vjvj += vj[a] * vj[a]
                vivj += vi[a] * vj[a]
                vizr += vi[a] * zr[a]
                vjzr += vj[a] * zr[a]
                zrzr += zr[a] * zr[a]
                logdet_R += 2.0 * math.log(Lb[a, a])
            Gii = G[i, i]
            Gjj = G[j, j]
            Gij = G[i, j]
            di2 = Gii + t - vivi
            dj2 = Gjj + t - vjvj
            if not (di2 > 0 and dj2 > 0):
                return ERR_NOT_PD, n_upd, k, act, L
            di = math.sqrt(di2)
            dj = math.sqrt(dj2)
            # R + i with residual r - s X_i
            ee = rr - 2.0 * s * ci + s * s * Gii
            zz = zrzr - 2.0 * s * vizr + s * s * vivi
            last = ((ci - s * Gii) - (vizr - s * vivi)) / di
            q_i = ee - zz - last * last
            # R + j with residual r - s X_j
            ee0 = rr - 2.0 * s * cj + s * s * Gjj
            zz0 = zrzr - 2.0 * s * vjzr + s * s * vjvj
            last_j = ((cj - s * Gjj) - (vjzr - s * vjvj)) / dj
            q_j = ee0 - zz0 - last_j * last_j
            # R + i + j
            lji = (Gij - vivj) / di
            dij2 = dj2 - lji * lji
            if not dij2 > 1e-14 * (Gjj + t):
                return ERR_COLLINEAR, n_upd, k, act, L
            dij = math.sqrt(dij2)
            zRzR = 0.0
            vizR = 0.0
            vjzR = 0.0
            gR_vi = 0.0
            gR_vj = 0.0
            for a in range(kb):
                zR[a] = zr[a] - s * vj[a]
                zRzR += zR[a] * zR[a]
                vizR += vi[a] * zR[a]
                vjzR += vj[a] * zR[a]
                g = vi[a] - vj[a]
                gR_vi += vi[a] * g
                gR_vj += vj[a] * g
            zi = ((ci - s * Gij) - vizR) / di
            zj = ((cj - s * Gjj) - vjzR - lji * zi) / dij
            q0 = ee0 - zRzR - zi * zi - zj * zj
            dzi = 1.0 / di
            dzj = (-1.0 - lji * dzi) / dij
            gzi = ((Gii - Gij) - gR_vi) / di
            gzj = ((Gij - Gjj) - gR_vj - lji * gzi) / dij
            lam = max(t * (dzi * gzi + dzj * gzj), 0.0)
            drift = t * (dzi * zi + dzj * zj)
            beta = drift / lam if lam > 0 else 0.5 * s
            ldi = logdet_R + 2.0 * math.log(di)
            ldj = logdet_R + 2.0 * math.log(dj)
            ldij = ldi + 2.0 * math.log(dij)
            lp0 = _log_model_weight(kb + 1, ldi, log_tau, log_theta, log_1m, N) - 0.5 * phi * q_i
            lp1 = _log_model_weight(kb + 1, ldj, log_tau, log_theta, log_1m, N) - 0.5 * phi * q_j
            lp2 = (
                _log_model_weight(kb + 2, ldij, log_tau, log_theta, log_1m, N)
                - 0.5 * phi * q0 + log_gauss_segment(phi, lam, drift, s)
            )
            m = max(lp0, max(lp1, lp2))
            p0 = math.exp(lp0 - m)
            p1 = math.exp(lp1 - m)
            p2 = math.exp(lp2 - m)
            tot = p0 + p1 + p2
            p0 /= tot
            p1 /= tot
            u = rng.random()
            if u < p0:
                case = 0
            elif u < p0 + p1:
                case = 1
            else:
                case = 2
            old_i = mi > 0
            old_j = mj > 0
            if case == 0:
                mu[i] = s
                mu[j] = 0.0
            elif case == 1:
                mu[i] = 0.0
                mu[j] = s
            else:
                x = _draw_split(s, beta, lam, drift, phi, rng)
                mu[i] = x
                mu[j] = s - x
            if (mu[i] > 0) == old_i and (mu[j] > 0) == old_j:
                continue
            # adopt the base factor extended by the new columns
            if case == 0 or case == 2:
                for a in range(kb):
                    Lb[kb, a] = vi[a]
                Lb[kb, kb] = di
                actb[kb] = i
                kb += 1
                if case == 2:
                    for a in range(kb - 1):
                        Lb[kb, a] = vj[a]
                    Lb[kb, kb - 1] = lji
                    Lb[kb, kb] = dij
                    actb[kb] = j
                    kb += 1
            else:
                for a in range(kb):
                    Lb[kb, a] = vj[a]
                Lb[kb, kb] = dj
                actb[kb] = j
                kb += 1
            L, Lb = Lb, L
            act, actb = actb, act
            k = kb
    total = 0.0
    for q in range(N):
        total += mu[q]
    if not total > 0:
        return ERR_EMPTY, n_upd, k, act, L
    for q in range(N):
        mu[q] /= total
    return OK, n_upd, k, act, L
