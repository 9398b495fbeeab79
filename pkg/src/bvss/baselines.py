"""Comparator estimators: OLS, simplex-constrained QP and cross-validated Lasso.

None of the estimators fits an intercept. ``support`` restricts a fit to a
column subset (the oracle variants use the true support).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import Lasso, lasso_path
from sklearn.model_selection import KFold

from .linalg import RankError, ols_fit, qp_simplex
from .panel import PanelData

log = logging.getLogger(__name__)

QP_ZERO = 1e-10


@dataclass(frozen=True)
class EstimatorResult:
    """Point estimate ``w_hat`` with its exact-nonzero support and plug-in ATT."""

    w_hat: np.ndarray
    support: tuple
    att: float
    method_tag: str
    converged: bool
    info: dict = None

    def to_dict(self) -> dict:
        return {
            "method": self.method_tag,
            "w_hat": [float(v) for v in self.w_hat],
            "support": list(self.support),
            "att": float(self.att),
            "converged": self.converged,
            "info": self.info or {},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)


def att_plugin(w, data: PanelData) -> float:
    """``mean(Ypost1 - Xpost @ w)``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (data.N,):
        raise ValueError(f"w has shape {w.shape}, expected ({data.N},)")
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite")
    return float(np.mean(data.Ypost1 - data.Xpost @ w))


def _result(w, tag, data, converged=True, info=None) -> EstimatorResult:
    support = tuple(int(k) for k in np.flatnonzero(w != 0))
    att = att_plugin(w, data) if converged else float("nan")
    return EstimatorResult(w, support, att, tag, converged, info)


def _support(data, support):
    if support is None:
        return list(range(data.N))
    s = sorted(int(k) for k in support)
    if not s or s[0] < 0 or s[-1] >= data.N or len(set(s)) != len(s):
        raise ValueError(f"invalid support {support!r} for N={data.N}")
    return s


def fit_ols(data: PanelData, support=None) -> EstimatorResult:
    """OLS of ``Y`` on ``X[:, support]`` (all columns by default), zeros elsewhere.

    Returns ``converged=False`` with NaN coefficients when the Gram matrix is
    singular, which includes every ``|support| > M`` case.
    """
    s = _support(data, support)
    tag = "ols" if support is None else "oracle_ols"
    if len(s) > data.M:
        return _result(np.full(data.N, np.nan), tag, data, False, {"reason": "more columns than rows"})
    try:
        fit = ols_fit(data.X, s, data.Y, gram=data.gram)
    except RankError as exc:
        return _result(np.full(data.N, np.nan), tag, data, False, {"reason": str(exc)})
    w = np.zeros(data.N)
    w[s] = fit.mu_hat
    return _result(w, tag, data)


def fit_qp(data: PanelData, support=None, tol: float = 1e-8, max_iter: int = 50000) -> EstimatorResult:
    """``argmin ||Y - X w||^2`` over the simplex on ``support``; entries below 1e-10 snapped to 0."""
    s = _support(data, support)
    tag = "qp" if support is None else "oracle_qp"
    res = qp_simplex(data.X[:, s], data.Y, tol=tol, max_iter=max_iter, gram=data.gram[np.ix_(s, s)])
    ws = np.where(res.w < QP_ZERO, 0.0, res.w)
    ws /= ws.sum()
    w = np.zeros(data.N)
    w[s] = ws
    info = {"kkt_residual": res.kkt_residual, "n_iter": res.n_iter}
    if not res.converged:
        log.warning("qp did not converge: kkt residual %.3g", res.kkt_residual)
    return EstimatorResult(w, tuple(int(k) for k in np.flatnonzero(w)), att_plugin(w, data), tag, res.converged, info)


def lambda_grid(X, y, n_lambda: int = 100, ratio: float = 1e-4) -> np.ndarray:
    """Log-spaced decreasing grid from ``max|X'y| / M`` to ``ratio`` times that."""
    M = X.shape[0]
    lmax = float(np.max(np.abs(X.T @ y))) / M
    if lmax == 0.0:
        return np.zeros(1)
    return np.geomspace(lmax, lmax * ratio, n_lambda)


def lasso_fixed(X, y, lam: float, tol: float = 1e-9, max_iter: int = 100000) -> np.ndarray:
    """Minimize ``||y - X b||^2 / (2M) + lam ||b||_1`` by cyclic coordinate descent (no intercept)."""
    if not np.any(y):
        return np.zeros(X.shape[1])
    m = Lasso(alpha=lam, fit_intercept=False, tol=tol, max_iter=max_iter, selection="cyclic")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        m.fit(X, y)
    return m.coef_.copy()


def fit_lasso_cv(
    data: PanelData,
    n_folds: int = 10,
    n_lambda: int = 100,
    seed: int = 0,
    *,
    standardize: bool = True,
    tol: float = 1e-9,
    max_iter: int = 100000,
) -> EstimatorResult:
    """Lasso with the penalty chosen by shuffled k-fold CV (CV-MSE minimizer).

    Objective ``||y - X b||^2 / (2M) + lam ||b||_1`` solved by cyclic
    coordinate descent. With ``standardize`` each column is scaled (not
    centered) to ``||x||^2 = M`` before fitting and coefficients are mapped
    back to the original scale.
    """
    M = data.M
    if not 2 <= n_folds <= M:
        raise ValueError(f"need 2 <= n_folds <= M, got n_folds={n_folds}, M={M}")
    X = np.array(data.X)
    y = np.array(data.Y)
    scale = np.sqrt(np.einsum("ij,ij->j", X, X) / M) if standardize else np.ones(data.N)
    scale[scale == 0] = 1.0
    Xs = X / scale
    grid = lambda_grid(Xs, y, n_lambda)
    if grid[0] == 0.0:
        return _result(np.zeros(data.N), "lasso", data, True, {"lambda": 0.0})
    folds = KFold(n_splits=n_folds, shuffle=True, random_state=seed)
    cv = np.zeros(grid.size)
    for train, test in folds.split(Xs):
        # the penalty grid is shared across folds so CV errors line up
        coefs = _path(Xs[train], y[train], grid, tol, max_iter)
        r = y[test][:, None] - Xs[test] @ coefs
        cv += (r ** 2).sum(axis=0)
    cv /= M
    k = int(np.argmin(cv))
    lam = float(grid[k])
    b = lasso_fixed(Xs, y, lam, tol, max_iter)
    w = b / scale
    w[w == 0] = 0.0  # drop signed zeros
    return _result(w, "lasso", data, True, {"lambda": lam, "cv_mse": float(cv[k]), "standardized": standardize})


def _path(X, y, grid, tol, max_iter) -> np.ndarray:
    """Coefficients (N, len(grid)) along the decreasing grid with warm starts."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        _, coefs, _ = lasso_path(X, y, alphas=grid, tol=tol, max_iter=max_iter)
    return coefs
