"""Dense linear-algebra kernel.

Cholesky factors of ``V = X_g' X_g + I / tau`` with column add/remove updates,
Woodbury-form quadratic forms, OLS and sum-to-one constrained least squares,
Euclidean projection onto the simplex and a simplex-constrained QP solver.

Functions that work on a column subset accept an optional precomputed Gram
matrix ``gram = X.T @ X``; the sampler always passes one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

log = logging.getLogger(__name__)

DOWNDATE_RTOL = 1e-12


class FactorizationError(np.linalg.LinAlgError):
    """Matrix not numerically positive definite; ``pivot`` is the failing column."""

    def __init__(self, msg, pivot=None):
        super().__init__(msg)
        self.pivot = pivot


class RankError(FactorizationError):
    pass


def _ro(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelFactor:
    """Lower Cholesky factor of ``V = X_g' X_g + I / tau`` for an ordered column set.

    ``inv`` holds the inverse of ``chol`` so that ``L^{-1} b`` is a matmul;
    both are lower triangular and read-only. Row/column ``k`` of ``chol``
    corresponds to ``active_set[k]``.
    """

    active_set: tuple
    chol: np.ndarray
    inv: np.ndarray
    tau: float

    @property
    def size(self) -> int:
        return len(self.active_set)

    @cached_property
    def _logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def logdet(self) -> float:
        """``log det V``."""
        return self._logdet

    def solve_lower(self, b):
        """``L^{-1} b``."""
        return self.inv @ b

    def solve(self, b):
        """``V^{-1} b``."""
        return self.inv.T @ (self.inv @ b)

    def matrix(self) -> np.ndarray:
        return self.chol @ self.chol.T


def _gram_of(X, gram):
    return X.T @ X if gram is None else gram


def empty_factor(tau: float) -> ModelFactor:
    z = _ro(np.zeros((0, 0)))
    return ModelFactor((), z, z, float(tau))


def _find_pivot(A) -> int:
    """Index of the first non-positive pivot of an unpivoted Cholesky of ``A``."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    scale = max(float(np.max(np.abs(np.diag(A)))), 1e-300) if n else 1.0
    for k in range(n):
        d = A[k, k]
        if not d > 1e-13 * scale:
            return k
        A[k:, k] /= np.sqrt(d)
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k + 1:, k])
    return -1


def _from_matrix(V, active_set, tau) -> ModelFactor:
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        k = _find_pivot(V)
        raise FactorizationError(
            f"V not positive definite at pivot {k} (column {active_set[k]})",
            pivot=active_set[k],
        ) from None
    n = L.shape[0]
    W = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    return ModelFactor(tuple(active_set), _ro(L), _ro(W), float(tau))


def factorize(X, gamma, tau: float, *, gram=None) -> ModelFactor:
    """Cholesky factor of ``X_g' X_g + I / tau`` for the column set ``gamma``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    gamma = tuple(int(g) for g in gamma)
    if not gamma:
        return empty_factor(tau)
    G = _gram_of(X, gram)
    idx = np.asarray(gamma)
    V = G[np.ix_(idx, idx)] + np.eye(len(idx)) / tau
    if not np.all(np.isfinite(V)):
        raise ValueError("non-finite entries in X_gamma")
    return _from_matrix(V, gamma, tau)


def update_add(f: ModelFactor, X, j: int, *, gram=None) -> ModelFactor:
    """Factor for ``active_set + (j,)``; O(k^2) given the current factor."""
    j = int(j)
    if j in f.active_set:
        raise ValueError(f"column {j} already in the active set")
    G = _gram_of(X, gram)
    c = G[j, j] + 1.0 / f.tau
    k = f.size
    if k:
        v = f.inv @ G[list(f.active_set), j]
        d2 = c - v @ v
    else:
        v = np.zeros(0)
        d2 = c
    if not d2 > 1e-14 * c:
        raise RankError(
            f"column {j} is linearly dependent on the active set (pivot {d2:.3g})",
            pivot=j,
        )
    d = np.sqrt(d2)
    L = np.zeros((k + 1, k + 1))
    L[:k, :k] = f.chol
    L[k, :k] = v
    L[k, k] = d
    W = np.zeros((k + 1, k + 1))
    W[:k, :k] = f.inv
    W[k, :k] = -(v @ f.inv) / d
    W[k, k] = 1.0 / d
    return ModelFactor(f.active_set + (j,), _ro(L), _ro(W), f.tau)


def _chol_rank1_update(L, x):
    """In place: ``L L' + x x'``; returns the smallest ratio of new to old diagonal."""
    n = L.shape[0]
    worst = np.inf
    for k in range(n):
        lkk = L[k, k]
        r = np.hypot(lkk, x[k])
        c, s = r / lkk, x[k] / lkk
        worst = min(worst, r / lkk)
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]
    return worst


def update_remove(f: ModelFactor, j: int, *, X=None, gram=None) -> ModelFactor:
    """Factor for ``active_set`` without ``j``.

    Deleting row/column ``p`` leaves the leading block intact and turns the
    trailing block into a rank-one update. If the result loses positive
    definiteness numerically and ``X``/``gram`` is given, the factor is
    rebuilt from scratch.
    """
    j = int(j)
    try:
        p = f.active_set.index(j)
    except ValueError:
        raise ValueError(f"column {j} not in the active set") from None
    rest = f.active_set[:p] + f.active_set[p + 1:]
    if not rest:
        return empty_factor(f.tau)
    L = np.delete(np.delete(np.array(f.chol), p, axis=0), p, axis=1)
    if p < f.size - 1:
        old = np.diag(L).copy()
        x = np.array(f.chol[p + 1:, p])
        _chol_rank1_update(L[p:, p:], x)
        diag = np.diag(L)
        if not np.all(diag > DOWNDATE_RTOL * old):
            if X is None and gram is None:
                raise FactorizationError("downdate lost positive definiteness")
            log.info("cholesky downdate unstable; refactorizing %d columns", len(rest))
            return factorize(X, rest, f.tau, gram=gram)
    W = solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
    return ModelFactor(rest, _ro(L), _ro(W), f.tau)


def quadratic_form(f: ModelFactor, X, a, b) -> float:
    """``a' Sigma b`` with ``Sigma = I - X_g V^{-1} X_g'``, never forming Sigma."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = float(a @ b)
    if f.size:
        Xg = X[:, list(f.active_set)]
        out -= float((f.inv @ (Xg.T @ a)) @ (f.inv @ (Xg.T @ b)))
    return out


def dense_sigma(X, gamma, tau) -> np.ndarray:
    """``(I + tau X_g X_g')^{-1}`` by a dense inverse; reference only."""
    Xg = X[:, list(gamma)]
    return np.linalg.inv(np.eye(X.shape[0]) + tau * Xg @ Xg.T)


# ---------------------------------------------------------------------------
# least squares


@dataclass(frozen=True)
class ConstrainedFit:
    """Unconstrained and sum-to-one constrained LS on a column subset.

    ``mu_check`` and ``b_gamma`` are ``None`` for a plain :func:`ols_fit`.
    """

    gamma: tuple
    mu_hat: np.ndarray
    rss_unconstrained: float
    mu_check: np.ndarray | None = None
    b_gamma: float | None = None


def _gram_cholesky(G, gamma):
    """Cholesky of a Gram block, raising RankError with the offending column."""
    scale = max(float(np.max(np.diag(G))), 1e-300)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        diag = np.diag(L) ** 2
        bad = np.flatnonzero(diag <= 1e-12 * scale)
        if bad.size == 0:
            return L
        k = int(bad[0])
    else:
        k = _find_pivot(G)
    raise RankError(
        f"X_gamma' X_gamma is rank deficient at column {gamma[k]}", pivot=gamma[k]
    )


def _cho_solve(L, b):
    z = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, z, lower=False, check_finite=False)


def ols_fit(X, gamma, y, *, gram=None) -> ConstrainedFit:
    """OLS coefficients of ``y`` on ``X[:, gamma]`` and the residual sum of squares."""
    gamma = tuple(int(g) for g in gamma)
    idx = list(gamma)
    Xg = X[:, idx]
    G = Xg.T @ Xg if gram is None else gram[np.ix_(idx, idx)]
    L = _gram_cholesky(G, gamma)
    mu_hat = _cho_solve(L, Xg.T @ y)
    resid = y - Xg @ mu_hat
    return ConstrainedFit(gamma, mu_hat, float(resid @ resid))


def constrained_fit(X, gamma, y, *, gram=None) -> ConstrainedFit:
    """OLS plus the least-squares solution under ``sum(mu) = 1``.

    ``mu_check = mu_hat + (1 - 1'mu_hat) / (1' G^{-1} 1) * G^{-1} 1`` and
    ``b_gamma = (1 - 1'mu_hat)^2 / (1' G^{-1} 1)`` with ``G = X_g' X_g``, so that
    for every ``u`` with ``sum(u) = 1``::

        ||y - X_g u||^2 = rss + b_gamma + ||X_g (u - mu_check)||^2
    """
    gamma = tuple(int(g) for g in gamma)
    idx = list(gamma)
    Xg = X[:, idx]
    G = Xg.T @ Xg if gram is None else gram[np.ix_(idx, idx)]
    L = _gram_cholesky(G, gamma)
    mu_hat = _cho_solve(L, Xg.T @ y)
    resid = y - Xg @ mu_hat
    ginv1 = _cho_solve(L, np.ones(len(idx)))
    denom = float(ginv1.sum())
    gap = 1.0 - float(mu_hat.sum())
    mu_check = mu_hat + (gap / denom) * ginv1
    b = gap * gap / denom
    if -1e-12 <= b < 0:
        b = 0.0
    return ConstrainedFit(gamma, mu_hat, float(resid @ resid), mu_check, b)


# ---------------------------------------------------------------------------
# simplex


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class QPResult:
    w: np.ndarray
    objective: float
    kkt_residual: float
    n_iter: int
    converged: bool


def _kkt_residual(grad, w) -> float:
    active = w > 0
    lam = float(np.min(grad[active]))
    r_on = float(np.max(np.abs(grad[active] - lam)))
    r_off = float(np.max(lam - grad[~active], initial=0.0))
    return max(r_on, r_off)


def _power_lmax(A, n_iter=100) -> float:
    v = np.ones(A.shape[0]) / np.sqrt(A.shape[0])
    lam = 0.0
    for _ in range(n_iter):
        z = A @ v
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        lam = float(v @ z)
        v = z / nz
    # Rayleigh quotient under-estimates; pad slightly so 1/L stays a valid step.
    return max(lam, float(v @ (A @ v))) * 1.01


def _face_solve(G, b, face):
    """Minimize ``w'Gw/2 - b'w`` on the affine hull of ``face`` (sum to one)."""
    k = len(face)
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G[np.ix_(face, face)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.append(b[face], 1.0)
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


def qp_simplex(X, y, tol: float = 1e-8, max_iter: int = 50000, *, gram=None) -> QPResult:
    """``argmin_{w in simplex} ||y - X w||^2`` by accelerated projected gradient.

    FISTA with gradient-based restart; every 25 iterations the support of the
    iterate is polished by an equality-constrained solve on that face, which is
    accepted when feasible and the KKT residual is within ``tol``. Returns the
    best iterate with ``converged=False`` when ``max_iter`` is exhausted.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    N = X.shape[1]
    G = X.T @ X if gram is None else gram
    xty = X.T @ y

    def grad(w):
        return 2.0 * (G @ w - xty)

    def obj(w):
        r = y - X @ w
        return float(r @ r)

    if N == 1:
        w = np.ones(1)
        return QPResult(w, obj(w), 0.0, 0, True)
    lip = _power_lmax(2.0 * G)
    step = 1.0 / lip if lip > 0 else 1.0
    w = np.full(N, 1.0 / N)
    z, t = w.copy(), 1.0
    best_w, best_r = w, _kkt_residual(grad(w), w)
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(z)
        w_new = project_simplex(z - step * g)
        if g @ (w_new - w) > 0:  # restart momentum
            t = 1.0
            z = w
            w_new = project_simplex(w - step * grad(w))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, t = w_new, t_new
        if it % 25 == 0 or it == max_iter:
            r = _kkt_residual(grad(w), w)
            if r < best_r:
                best_w, best_r = w, r
            if r <= tol:
                break
            face = np.flatnonzero(w > 0)
            u = _face_solve(G, xty, face)
            if np.all(u > 0):
                cand = np.zeros(N)
                cand[face] = u
                rc = _kkt_residual(grad(cand), cand)
                if rc < best_r:
                    best_w, best_r = cand, rc
                if rc <= tol:
                    break
    return QPResult(best_w, obj(best_w), best_r, it, best_r <= tol)
