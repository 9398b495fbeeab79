"""Independent reference computations used by the tests.

Everything here uses dense matrices and generic quadrature rather than the
package's factor updates and closed forms.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def dense_sigma(X, gamma, tau):
    Xg = X[:, list(gamma)]
    return np.linalg.inv(np.eye(X.shape[0]) + tau * Xg @ Xg.T)


def log_a(gamma, X, tau, theta):
    """Log model weight for alpha = 1 using a dense determinant."""
    k = len(gamma)
    Xg = X[:, list(gamma)]
    V = Xg.T @ Xg + np.eye(k) / tau
    N = X.shape[1]
    return (
        math.lgamma(k) - 0.5 * k * math.log(tau) - 0.5 * np.linalg.slogdet(V)[1]
        + k * math.log(theta) + (N - k) * math.log1p(-theta)
    )


def simplex_integral(f, k):
    """Integral of ``f(mu)`` over the (k-1)-simplex, Lebesgue on the first k-1 coordinates."""
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)
    if k == 1:
        return f(np.array([1.0]))
    if k == 2:
        return integrate.quad(lambda u: f(np.array([u, 1.0 - u])), 0.0, 1.0, **opts)[0]
    if k == 3:
        return integrate.dblquad(
            lambda v, u: f(np.array([u, v, 1.0 - u - v])),
            0.0, 1.0, 0.0, lambda u: 1.0 - u, epsabs=0.0, epsrel=1e-10,
        )[0]
    raise ValueError("only k <= 3 supported")


def exact_model_posterior(X, y, tau, phi, theta):
    """``p(gamma | y, tau, phi)`` for every nonempty gamma, by quadrature over each face."""
    N = X.shape[1]
    models, logw = [], []
    for k in range(1, N + 1):
        for g in itertools.combinations(range(N), k):
            S = dense_sigma(X, g, tau)
            Xg = X[:, list(g)]
            # shift by the minimum over the face's vertices to keep exp in range
            base = min(float((y - Xg[:, a]) @ S @ (y - Xg[:, a])) for a in range(k))

            def f(mu, S=S, Xg=Xg, base=base):
                e = y - Xg @ mu
                return math.exp(-0.5 * phi * (float(e @ S @ e) - base))

            models.append(g)
            logw.append(log_a(g, X, tau, theta) - 0.5 * phi * base + math.log(simplex_integral(f, k)))
    logw = np.array(logw)
    p = np.exp(logw - logw.max())
    return models, p / p.sum()


def pair_case_logweights(X, y, mu, i, j, tau, phi, theta):
    """Three unnormalized log-probabilities of the pair cases by dense algebra and quad."""
    s = mu[i] + mu[j]
    rest = [k for k in np.flatnonzero(mu > 0) if k not in (i, j)]
    r = y - X[:, rest] @ mu[rest]
    out = []
    for g, split in (((i,), None), ((j,), None), ((i, j), True)):
        G = tuple(sorted(rest + list(g)))
        S = dense_sigma(X, G, tau)
        la = log_a(G, X, tau, theta)
        if split is None:
            e = r - s * X[:, g[0]]
            out.append(la - 0.5 * phi * float(e @ S @ e))
        else:
            def q(u):
                e = r - u * X[:, i] - (s - u) * X[:, j]
                return float(e @ S @ e)
            grid = np.linspace(0.0, s, 401)
            qmin = min(q(u) for u in grid)
            val = integrate.quad(
                lambda u: math.exp(-0.5 * phi * (q(u) - qmin)), 0.0, s,
                epsabs=0.0, epsrel=1e-12, limit=400,
            )[0]
            out.append(la - 0.5 * phi * qmin + math.log(val))
    return np.array(out)


def golden_min(f, a, b, tol=1e-12):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    while abs(b - a) > tol:
        if f(c) < f(d):
            b, d = d, c
            c = b - g * (b - a)
        else:
            a, c = c, d
            d = a + g * (b - a)
    return 0.5 * (a + b)
