"""Soft-simplex spike-and-slab regression: hyperparameters, likelihood, conditionals.

Model::

    phi ~ Gamma(kappa1 / 2, kappa2 / 2)          (shape, rate)
    gamma_i ~ Bernoulli(theta)  i.i.d.
    tau ~ Gamma(a1, a2), truncated to tau >= tau_floor
    mu_gamma | gamma ~ Dirichlet(alpha * 1)
    w_gamma | gamma, mu, tau, phi ~ N(mu_gamma, (tau / phi) I)
    y | w, phi ~ N(X w, I / phi)

with ``mu_i = w_i = 0`` whenever ``gamma_i = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .linalg import ModelFactor, factorize
from .panel import PanelData


@dataclass(frozen=True)
class Hyperparams:
    """Prior constants and sampler tuning knobs.

    Defaults follow the simulation settings (kappa1 = kappa2 = 1, a1 = 0.01,
    a2 = 0.1, alpha = 1, theta = 0.2, tau >= 1e-6). ``n_tau`` and ``eta`` are
    the number of random-walk steps for tau per iteration and the variance of
    the log-scale proposal.
    """

    kappa1: float = 1.0
    kappa2: float = 1.0
    a1: float = 0.01
    a2: float = 0.1
    alpha: float = 1.0
    theta: float = 0.2
    tau_floor: float = 1e-6
    n_tau: int = 10
    eta: float = 0.5

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "a1", "a2", "alpha", "tau_floor", "eta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive number, got {v!r}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta!r}")
        if int(self.n_tau) != self.n_tau or self.n_tau < 1:
            raise ValueError(f"n_tau must be a positive integer, got {self.n_tau!r}")
        object.__setattr__(self, "n_tau", int(self.n_tau))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> Hyperparams:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Hyperparams:
        return cls.from_dict(json.loads(text))


@dataclass
class ChainState:
    """Current ``(mu, tau, phi, w)``; the model is the support of ``mu``.

    ``factor`` is the Cholesky factor of ``V`` for ``support(mu)`` at ``tau``
    (its column order may differ from sorted order).
    """

    mu: np.ndarray
    tau: float
    phi: float
    w: np.ndarray = field(default=None)
    factor: ModelFactor = field(default=None)

    @property
    def gamma(self) -> np.ndarray:
        return self.mu > 0

    @property
    def support(self) -> tuple:
        return tuple(int(k) for k in np.flatnonzero(self.mu > 0))

    def check(self, atol=1e-10):
        mu = self.mu
        if np.any(mu < 0):
            raise AssertionError("negative mu")
        if abs(mu.sum() - 1.0) > atol:
            raise AssertionError(f"mu sums to {mu.sum()!r}")
        if self.factor is not None and set(self.factor.active_set) != set(self.support):
            raise AssertionError("factor active set differs from support(mu)")
        if self.w is not None and np.any(self.w[mu == 0] != 0):
            raise AssertionError("w nonzero off the support")


def init_state(data: PanelData, mu, tau: float, phi: float) -> ChainState:
    mu = np.asarray(mu, dtype=float).copy()
    f = factorize(data.X, np.flatnonzero(mu > 0), tau, gram=data.gram)
    return ChainState(mu=mu, tau=float(tau), phi=float(phi), w=np.zeros_like(mu), factor=f)


def _resid(mu, data: PanelData):
    g = np.flatnonzero(mu > 0)
    return data.Y - data.X[:, g] @ mu[g]


def residual_quadratic(mu, factor: ModelFactor, data: PanelData) -> float:
    """``(y - X mu)' Sigma (y - X mu)`` through the factor (needs ``factor`` for support(mu))."""
    e = _resid(mu, data)
    out = float(e @ e)
    if factor.size:
        z = factor.inv @ (data.X[:, list(factor.active_set)].T @ e)
        out -= float(z @ z)
    return out


def log_likelihood(mu, tau: float, phi: float, data: PanelData, factor: ModelFactor | None = None) -> float:
    """``log p(y | mu, tau, phi)`` up to an additive constant.

    ``(M/2) log phi - (|g|/2) log tau - (1/2) log det V - (phi/2) e' Sigma e``
    with ``e = y - X_g mu_g``.
    """
    mu = np.asarray(mu, dtype=float)
    gamma = np.flatnonzero(mu > 0)
    if gamma.size == 0:
        raise ValueError("empty model has zero prior mass")
    if factor is None or factor.tau != tau or set(factor.active_set) != set(gamma.tolist()):
        factor = factorize(data.X, gamma, tau, gram=data.gram)
    q = residual_quadratic(mu, factor, data)
    return (
        0.5 * data.M * math.log(phi)
        - 0.5 * gamma.size * math.log(tau)
        - 0.5 * factor.logdet()
        - 0.5 * phi * q
    )


def phi_conditional(state: ChainState, data: PanelData, h: Hyperparams):
    """Shape and rate of the Gamma full conditional of ``phi``."""
    q = residual_quadratic(state.mu, state.factor, data)
    return 0.5 * (data.M + h.kappa1), 0.5 * (h.kappa2 + q)


def draw_phi(state: ChainState, data: PanelData, h: Hyperparams, rng) -> float:
    shape, rate = phi_conditional(state, data, h)
    return float(rng.gamma(shape, 1.0 / rate))


def w_conditional_mean(state: ChainState, data: PanelData) -> np.ndarray:
    """``V^{-1} (X_g' y + mu_g / tau)`` scattered into an N-vector."""
    f = state.factor
    out = np.zeros(data.N)
    if f.size:
        g = list(f.active_set)
        out[g] = f.solve(data.xty[g] + state.mu[g] / f.tau)
    return out


def draw_w(state: ChainState, data: PanelData, rng) -> np.ndarray:
    """Draw ``w_g ~ N(V^{-1}(X_g'y + mu_g/tau), V^{-1}/phi)``; zero off the support."""
    f = state.factor
    w = w_conditional_mean(state, data)
    if f.size:
        z = rng.standard_normal(f.size)
        w[list(f.active_set)] += (f.inv.T @ z) / math.sqrt(state.phi)
    return w


def log_prior_tau(tau: float, h: Hyperparams) -> float:
    """Gamma(a1, a2) log density (shape-rate) on ``[tau_floor, inf)``, not renormalized."""
    if not tau >= h.tau_floor:
        return -math.inf
    return (
        h.a1 * math.log(h.a2) - math.lgamma(h.a1)
        + (h.a1 - 1.0) * math.log(tau) - h.a2 * tau
    )


def sample_mu_prior(h: Hyperparams, N: int, rng) -> np.ndarray:
    """Draw ``mu`` from its prior, conditioned on a nonempty model."""
    if N < 1:
        raise ValueError("N must be positive")
    while True:
        gamma = rng.random(N) < h.theta
        if gamma.any():
            break
    mu = np.zeros(N)
    mu[gamma] = rng.dirichlet(np.full(int(gamma.sum()), h.alpha))
    # Dirichlet draws can underflow to exactly 0 for tiny alpha; keep support exact.
    mu[gamma] = np.maximum(mu[gamma], np.finfo(float).tiny)
    mu /= mu.sum()
    return mu
