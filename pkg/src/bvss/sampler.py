"""Metropolis-within-Gibbs sampler for the soft-simplex spike-and-slab model.

Each iteration:

1. sweeps every pair ``i < j`` in lexicographic order, redrawing
   ``(gamma_i, gamma_j, mu_i, mu_j)`` jointly from their full conditional while
   ``mu_i + mu_j`` is held fixed;
2. draws ``phi`` from its Gamma conditional;
3. takes ``n_tau`` random-walk Metropolis steps on ``log tau``;
4. draws ``w`` from its Gaussian conditional.

Pair updates work entirely in the N-dimensional Gram space: the factor of
``V`` for the model without ``i, j`` is cached per sweep and the three
candidate models are obtained by appending one or two columns. ``sweep``
runs a numba-compiled version of the same pass (:mod:`bvss._kernels`) by
default; the Python implementation here is its reference.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import erfcx, log_ndtr, ndtr, ndtri

from .linalg import FactorizationError, ModelFactor, factorize, update_remove
from .model import (
    ChainState,
    Hyperparams,
    draw_phi,
    draw_w,
    log_likelihood,
    log_prior_tau,
    sample_mu_prior,
    w_conditional_mean,
)
from .panel import PanelData

log = logging.getLogger(__name__)

S_TOL = 1e-12
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_GL_SPAN = 5.0
_LOG_SQRT_HALF_PI = 0.5 * math.log(0.5 * math.pi)
_SQRT2 = math.sqrt(2.0)


class SamplerError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# truncated normal


def _std_tail_sample(a, b, rng):
    """Standard normal restricted to ``(a, b)`` with ``0 <= a < b <= inf``."""
    log_mass = _log_tail_mass(a, b)
    if log_mass >= math.log(1e-10):
        # inverse survival function keeps precision in the upper tail
        sa = ndtr(-a)
        sb = ndtr(-b) if math.isfinite(b) else 0.0
        p = sa - rng.random() * (sa - sb)
        return -float(ndtri(p))
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    if not math.isfinite(b) or lam * (b - a) > 1.0:
        while True:
            z = a + rng.exponential() / lam
            if z < b and rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
                return z
    while True:
        z = a + (b - a) * rng.random()
        if rng.random() <= math.exp(-0.5 * (z - a) * (z + a)):
            return z


def _log_tail_mass(a, b):
    """``log(Phi(b) - Phi(a))`` for ``0 <= a < b``."""
    if not math.isfinite(b):
        return float(log_ndtr(-a))
    ea = float(erfcx(a / _SQRT2))
    eb = float(erfcx(b / _SQRT2)) * math.exp(-0.5 * (b - a) * (b + a))
    return -0.5 * a * a + math.log(0.5) + math.log(max(ea - eb, 1e-300))


def sample_truncnorm(mean: float, var: float, lo: float, hi: float, rng) -> float:
    """One exact draw from ``N(mean, var)`` restricted to the open interval ``(lo, hi)``.

    Inverse-CDF sampling when the interval carries normal mass of at least
    1e-10, otherwise exponential or uniform rejection (Robert, 1995) in the
    standardized tail. The result is always strictly inside ``(lo, hi)``.
    """
    if not lo < hi:
        raise ValueError(f"empty interval ({lo}, {hi})")
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    sd = math.sqrt(var)
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    if a >= 0:
        z = _std_tail_sample(a, b, rng)
    elif b <= 0:
        z = -_std_tail_sample(-b, -a, rng)
    else:
        pa, pb = float(ndtr(a)), float(ndtr(b))
        if pb - pa >= 1e-10:
            z = float(ndtri(pa + rng.random() * (pb - pa)))
        else:
            top = max(a * a, b * b)
            while True:
                z = a + (b - a) * rng.random()
                if rng.random() <= math.exp(0.5 * (top - z * z) - 0.5 * top):
                    break
    x = mean + sd * z
    if x <= lo:
        x = math.nextafter(lo, hi)
    elif x >= hi:
        x = math.nextafter(hi, lo)
    return x


# ---------------------------------------------------------------------------
# pair conditional


@dataclass(frozen=True)
class PairConditional:
    """Unnormalized log-probabilities of the three admissible ``(gamma_i, gamma_j)``.

    ``beta`` and ``lam`` are the location and pre-``phi`` precision of the
    truncated normal for ``mu_i`` in the both-in case; ``drift`` is
    ``(X_i - X_j)' Sigma ycheck(0)`` (``= beta * lam``) and ``q0`` is
    ``ycheck(0)' Sigma ycheck(0)``, both under the both-in model.
    """

    i: int
    j: int
    s: float
    beta: float
    lam: float
    drift: float
    q0: float
    phi: float
    logp_i: float
    logp_j: float
    logp_ij: float

    def probabilities(self) -> np.ndarray:
        lp = np.array([self.logp_i, self.logp_j, self.logp_ij])
        p = np.exp(lp - lp.max())
        return p / p.sum()


def log_gauss_segment(phi: float, lam: float, drift: float, s: float) -> float:
    """``log of the integral over (0, s) of exp(phi * drift * u - phi * lam * u^2 / 2) du``.

    Gauss-Legendre on the interval when the exponent varies by at most 5
    there (this covers ``lam == 0``), otherwise the closed form through the
    scaled complementary error function in whichever tail the interval lies.
    """
    c = phi * drift
    p = phi * lam
    span = abs(c * s) + 0.5 * abs(p) * s * s
    if span <= _GL_SPAN:
        u = 0.5 * s * (_GL_X + 1.0)
        g = c * u - 0.5 * p * u * u
        gm = g.max()
        return float(gm + math.log(0.5 * s * float(_GL_W @ np.exp(g - gm))))
    if p <= 0.0:
        # linear exponent: integral of exp(c u)
        x = c * s
        if c > 0:
            return x + math.log(-math.expm1(-x)) - math.log(c)
        return math.log(-math.expm1(x)) - math.log(-c)
    beta = drift / lam
    rp = math.sqrt(p)
    a = -beta * rp
    b = (s - beta) * rp
    if a >= 0:
        ea = float(erfcx(a / _SQRT2))
        eb = float(erfcx(b / _SQRT2)) * math.exp(-0.5 * (b - a) * (b + a))
        return -0.5 * math.log(p) + _LOG_SQRT_HALF_PI + math.log(ea - eb)
    if b <= 0:
        ea = float(erfcx(-b / _SQRT2))
        eb = float(erfcx(-a / _SQRT2)) * math.exp(-0.5 * (a - b) * (a + b))
        gs = c * s - 0.5 * p * s * s
        return gs - 0.5 * math.log(p) + _LOG_SQRT_HALF_PI + math.log(ea - eb)
    mass = 0.5 * (math.erf(b / _SQRT2) - math.erf(a / _SQRT2))
    return 0.5 * p * beta * beta - 0.5 * math.log(p) + 0.5 * math.log(2 * math.pi) + math.log(mass)


def _log_model_weight(size: int, logdet: float, tau: float, h: Hyperparams, N: int) -> float:
    # alpha = 1: the Dirichlet density on the face is Gamma(|g|)
    return (
        math.lgamma(size)
        - 0.5 * size * math.log(tau)
        - 0.5 * logdet
        + size * math.log(h.theta)
        + (N - size) * math.log1p(-h.theta)
    )


def _append(base: ModelFactor, L, W, v, d, j) -> ModelFactor:
    """Build the factor with column ``j`` appended from precomputed pieces."""
    k = base.size
    L2 = np.zeros((k + 1, k + 1))
    W2 = np.zeros((k + 1, k + 1))
    L2[:k, :k] = L
    L2[k, :k] = v
    L2[k, k] = d
    W2[:k, :k] = W
    W2[k, :k] = -(v @ W) / d
    W2[k, k] = 1.0 / d
    L2.setflags(write=False)
    W2.setflags(write=False)
    return ModelFactor(base.active_set + (j,), L2, W2, base.tau)


def _pair_terms(mu, tau, phi, data: PanelData, h: Hyperparams, i, j, base: ModelFactor):
    """PairConditional plus lazily-built candidate factors for ``base + i``, ``+ j``, ``+ i, j``."""
    G = data.gram
    N = data.N
    s = float(mu[i] + mu[j])
    t = 1.0 / tau
    R = list(base.active_set)
    W = base.inv
    m = mu.copy()
    m[i] = 0.0
    m[j] = 0.0
    Gm = G @ m
    c = data.xty - Gm                       # X' r,  r = y - X_R mu_R
    rr = data.yty - 2.0 * float(m @ data.xty) + float(m @ Gm)
    Gii, Gjj, Gij = float(G[i, i]), float(G[j, j]), float(G[i, j])
    ci, cj = float(c[i]), float(c[j])
    if R:
        gi = G[R, i]
        gj = G[R, j]
        vi = W @ gi
        vj = W @ gj
        zr = W @ c[R]
        vivi, vjvj, vivj = float(vi @ vi), float(vj @ vj), float(vi @ vj)
        vizr, vjzr, zrzr = float(vi @ zr), float(vj @ zr), float(zr @ zr)
    else:
        vi = vj = zr = np.zeros(0)
        vivi = vjvj = vivj = vizr = vjzr = zrzr = 0.0
    logdet_R = base.logdet() if R else 0.0
    k = len(R)

    di2 = Gii + t - vivi
    dj2 = Gjj + t - vjvj
    if not (di2 > 0 and dj2 > 0):
        raise FactorizationError(f"lost positive definiteness adding column {i} or {j}")
    di, dj = math.sqrt(di2), math.sqrt(dj2)

    # model R + i, residual ycheck(s) = r - s X_i
    ee = rr - 2.0 * s * ci + s * s * Gii
    zz = zrzr - 2.0 * s * vizr + s * s * vivi          # ||W X_R' e||^2
    last = ((ci - s * Gii) - (vizr - s * vivi)) / di
    q_i = ee - zz - last * last
    # model R + j, residual ycheck(0) = r - s X_j
    ee0 = rr - 2.0 * s * cj + s * s * Gjj
    zz0 = zrzr - 2.0 * s * vjzr + s * s * vjvj
    last_j = ((cj - s * Gjj) - (vjzr - s * vjvj)) / dj
    q_j = ee0 - zz0 - last_j * last_j

    # model R + i + j (column order R, i, j)
    lji = (Gij - vivj) / di
    dij2 = dj2 - lji * lji
    if not dij2 > 1e-14 * (Gjj + t):
        raise FactorizationError(f"columns {i}, {j} numerically collinear with the model")
    dij = math.sqrt(dij2)
    # z = L^{-1} X_g' e for e = r - s X_j
    zR = zr - s * vj
    zi = ((ci - s * Gij) - float(vi @ zR)) / di
    zj = ((cj - s * Gjj) - float(vj @ zR) - lji * zi) / dij
    q0 = ee0 - float(zR @ zR) - zi * zi - zj * zj
    # z(d) for d = e_i - e_j; z(Gd) for Gd = X_g'(X_i - X_j)
    dzi = 1.0 / di
    dzj = (-1.0 - lji * dzi) / dij
    gR = vi - vj
    gzi = ((Gii - Gij) - float(vi @ gR)) / di
    gzj = ((Gij - Gjj) - float(vj @ gR) - lji * gzi) / dij
    lam = max(t * (dzi * gzi + dzj * gzj), 0.0)
    drift = t * (dzi * zi + dzj * zj)
    beta = drift / lam if lam > 0 else 0.5 * s

    logdet_i = logdet_R + 2.0 * math.log(di)
    logdet_j = logdet_R + 2.0 * math.log(dj)
    logdet_ij = logdet_i + 2.0 * math.log(dij)
    logp_i = _log_model_weight(k + 1, logdet_i, tau, h, N) - 0.5 * phi * q_i
    logp_j = _log_model_weight(k + 1, logdet_j, tau, h, N) - 0.5 * phi * q_j
    logp_ij = (
        _log_model_weight(k + 2, logdet_ij, tau, h, N)
        - 0.5 * phi * q0
        + log_gauss_segment(phi, lam, drift, s)
    )
    pc = PairConditional(i, j, s, beta, lam, drift, q0, phi, logp_i, logp_j, logp_ij)

    def build(case):
        L, Wb = base.chol, base.inv
        if case == 0:
            return _append(base, L, Wb, vi, di, i)
        if case == 1:
            return _append(base, L, Wb, vj, dj, j)
        fi = _append(base, L, Wb, vi, di, i)
        return _append(fi, fi.chol, fi.inv, np.append(vj, lji), dij, j)

    return pc, build


def _base_factor(factor: ModelFactor, i, j, cache, data):
    drop = [k for k in (i, j) if k in factor.active_set]
    if not drop:
        return factor
    key = frozenset(factor.active_set).difference(drop)
    f = cache.get(key)
    if f is None:
        f = factor
        for k in drop:
            f = update_remove(f, k, gram=data.gram, X=data.X)
        cache[key] = f
    return f


def pair_conditional(state: ChainState, data: PanelData, h: Hyperparams, i: int, j: int) -> PairConditional:
    """Conditional law of ``(gamma_i, gamma_j)`` given everything else (requires ``s > S_TOL``)."""
    if i == j:
        raise ValueError("i and j must differ")
    if h.alpha != 1:
        raise ValueError("pair updates are implemented for alpha = 1 only")
    s = state.mu[i] + state.mu[j]
    if not s > S_TOL:
        raise ValueError(f"s = {s!r} is degenerate; both coordinates must be zero")
    f = state.factor
    if f is None or f.tau != state.tau:
        f = factorize(data.X, state.support, state.tau, gram=data.gram)
    base = _base_factor(f, i, j, {}, data)
    pc, _ = _pair_terms(state.mu, state.tau, state.phi, data, h, i, j, base)
    return pc


def _choose(pc: PairConditional, rng) -> int:
    p = pc.probabilities()
    u = rng.random()
    if u < p[0]:
        return 0
    if u < p[0] + p[1]:
        return 1
    return 2


def _draw_split(pc: PairConditional, rng) -> float:
    """``mu_i`` given both coordinates are in the model."""
    s = pc.s
    if pc.lam > 0:
        return sample_truncnorm(pc.beta, 1.0 / (pc.phi * pc.lam), 0.0, s, rng)
    c = pc.phi * pc.drift
    if abs(c * s) < 1e-12:
        u = s * rng.random()
    else:
        # density proportional to exp(c u) on (0, s)
        v = rng.random()
        u = math.log1p(v * math.expm1(c * s)) / c
    return min(max(u, math.nextafter(0.0, 1.0)), math.nextafter(s, 0.0))


def _pair_step(mu, factor, tau, phi, data, h, i, j, rng, cache):
    """Update ``mu`` in place for pair (i, j); returns the factor for the new support."""
    s = mu[i] + mu[j]
    if not s > S_TOL:
        if s > 0:
            for k in (i, j):
                if mu[k] > 0:
                    factor = update_remove(factor, k, gram=data.gram, X=data.X)
            mu[i] = mu[j] = 0.0
        return factor
    base = _base_factor(factor, i, j, cache, data)
    pc, build = _pair_terms(mu, tau, phi, data, h, i, j, base)
    case = _choose(pc, rng)
    old = (mu[i] > 0, mu[j] > 0)
    if case == 0:
        mu[i], mu[j] = s, 0.0
    elif case == 1:
        mu[i], mu[j] = 0.0, s
    else:
        u = _draw_split(pc, rng)
        mu[i], mu[j] = u, s - u
    new = (mu[i] > 0, mu[j] > 0)
    if new == old:
        return factor
    return build(case)


def gibbs_pair_update(state: ChainState, data: PanelData, h: Hyperparams, i: int, j: int, rng) -> ChainState:
    """Redraw ``(mu_i, mu_j)`` from the full conditional; ``mu_i + mu_j`` is preserved."""
    if not i < j:
        raise ValueError("expected i < j")
    f = state.factor
    if f is None or f.tau != state.tau:
        f = factorize(data.X, state.support, state.tau, gram=data.gram)
    mu = state.mu.copy()
    f = _pair_step(mu, f, state.tau, state.phi, data, h, i, j, rng, {})
    w = None if state.w is None else np.where(mu > 0, state.w, 0.0)
    return replace(state, mu=mu, factor=f, w=w)


def sweep(
    state: ChainState,
    data: PanelData,
    h: Hyperparams,
    rng,
    stats: dict | None = None,
    *,
    compiled: bool = True,
) -> ChainState:
    """One lexicographic pass over all pairs at fixed ``tau`` and ``phi``.

    Pairs with both coordinates at zero are skipped; ``stats["pair_updates"]``
    counts the rest when ``stats`` is given. ``compiled`` selects the numba
    kernel; the pure-Python path consumes ``rng`` in the same order and is
    kept as its reference.
    """
    if h.alpha != 1:
        raise ValueError("pair updates are implemented for alpha = 1 only")
    if compiled:
        mu, f, n = _sweep_compiled(state, data, h, rng)
    else:
        mu, f, n = _sweep_python(state, data, h, rng)
    if stats is not None:
        stats["pair_updates"] = stats.get("pair_updates", 0) + n
    w = None if state.w is None else np.where(mu > 0, state.w, 0.0)
    return replace(state, mu=mu, factor=f, w=w)


def _sweep_python(state, data, h, rng):
    mu = state.mu.copy()
    f = factorize(data.X, state.support, state.tau, gram=data.gram)
    cache: dict = {}
    N = data.N
    n = 0
    for i in range(N - 1):
        for j in range(i + 1, N):
            if mu[i] == 0.0 and mu[j] == 0.0:
                continue
            f = _pair_step(mu, f, state.tau, state.phi, data, h, i, j, rng, cache)
            n += 1
    total = mu.sum()
    if total <= 0:
        raise SamplerError("sweep emptied the model")
    mu /= total
    if list(f.active_set) != sorted(f.active_set):
        # canonical column order so both paths hand the same factor downstream
        f = factorize(data.X, sorted(f.active_set), state.tau, gram=data.gram)
    return mu, f, n


def _sweep_compiled(state, data, h, rng):
    from . import _kernels

    mu = np.array(state.mu, dtype=float)
    status, n, k, act, L = _kernels.sweep_kernel(
        mu, data.gram, data.xty, float(data.yty), float(state.tau), float(state.phi), float(h.theta), rng
    )
    if status == _kernels.ERR_EMPTY:
        raise SamplerError("sweep emptied the model")
    if status == _kernels.ERR_COLLINEAR:
        raise FactorizationError("a pair of columns is numerically collinear with the model")
    if status != _kernels.OK:
        raise FactorizationError("lost positive definiteness during a pair update")
    order = np.argsort(act[:k], kind="stable")
    active = tuple(int(a) for a in act[:k][order])
    if np.all(order == np.arange(k)):
        chol = np.ascontiguousarray(L[:k, :k])
        inv = solve_triangular(chol, np.eye(k), lower=True)
        chol.setflags(write=False)
        inv.setflags(write=False)
        f = ModelFactor(active, chol, inv, float(state.tau))
    else:
        # new units were appended at the end; refactor in canonical order
        f = factorize(data.X, active, state.tau, gram=data.gram)
    return mu, f, n


# ---------------------------------------------------------------------------
# tau


def log_tau_target(state: ChainState, tau: float, data: PanelData, h: Hyperparams) -> float:
    """``log p(y | mu, tau, phi) + log p(tau)``."""
    lp = log_prior_tau(tau, h)
    if lp == -math.inf:
        return lp
    return log_likelihood(state.mu, tau, state.phi, data) + lp


def tau_log_acceptance(state: ChainState, tau_new: float, data: PanelData, h: Hyperparams) -> float:
    """Log Metropolis ratio for a log-scale random-walk move ``tau -> tau_new``."""
    new = log_tau_target(state, tau_new, data, h)
    if new == -math.inf:
        return -math.inf
    old = log_tau_target(state, state.tau, data, h)
    return new - old + math.log(tau_new) - math.log(state.tau)


def mh_update_tau(state: ChainState, data: PanelData, h: Hyperparams, rng):
    """``n_tau`` random-walk Metropolis steps on ``log tau``; returns (state, n_accepted)."""
    tau = state.tau
    cur = log_tau_target(state, tau, data, h)
    sd = math.sqrt(h.eta)
    accepted = 0
    for _ in range(h.n_tau):
        prop = tau * math.exp(sd * rng.standard_normal())
        u = rng.random()
        if prop < h.tau_floor:
            continue
        new = log_likelihood(state.mu, prop, state.phi, data) + log_prior_tau(prop, h)
        if math.log(u) < new - cur + math.log(prop) - math.log(tau):
            tau, cur = prop, new
            accepted += 1
    f = state.factor
    if f is None or f.tau != tau:
        f = factorize(data.X, state.support, tau, gram=data.gram)
    return replace(state, tau=tau, factor=f), accepted


# ---------------------------------------------------------------------------
# driver


@dataclass
class SamplerOutput:
    """Post burn-in draws, one row per kept iteration.

    ``rb_counterfactual[t]`` is ``Xpost @ E[w | mu_t, tau_t, phi_t, y]``.
    """

    mu: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    phi: np.ndarray
    rb_counterfactual: np.ndarray
    acceptance_rate_tau: float
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.tau.shape[0]

    @property
    def model_size(self) -> np.ndarray:
        return (self.mu > 0).sum(axis=1)

    @property
    def draws(self):
        return list(zip(self.mu, self.tau, self.phi, self.w))

    def write_trace(self, path, unit_names=None, header_lines=()):
        N = self.mu.shape[1]
        names = list(unit_names) if unit_names is not None else [str(k + 1) for k in range(N)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(
                ["tau", "phi", "model_size"]
                + [f"mu_{n}" for n in names]
                + [f"w_{n}" for n in names]
            )
            for t in range(len(self)):
                wr.writerow(
                    [repr(float(self.tau[t])), repr(float(self.phi[t])), int(self.model_size[t])]
                    + [repr(float(v)) for v in self.mu[t]]
                    + [repr(float(v)) for v in self.w[t]]
                )

    def summary_json(self) -> str:
        return json.dumps(
            {
                "n_draws": len(self),
                "seed": self.seed,
                "acceptance_rate_tau": self.acceptance_rate_tau,
                "tau_mean": float(self.tau.mean()),
                "phi_mean": float(self.phi.mean()),
                "model_size_mean": float(self.model_size.mean()),
                "meta": self.meta,
            },
            sort_keys=True,
        )


def run_chain(
    data: PanelData,
    h: Hyperparams,
    n_iter: int = 1000,
    n_burnin: int = 500,
    seed: int = 0,
    *,
    mu0=None,
    tau0: float = 1.0,
    phi0: float = 1.0,
    freeze_tau: bool = False,
    freeze_phi: bool = False,
    compiled: bool = True,
) -> SamplerOutput:
    """Run the sampler and keep iterations ``n_burnin + 1 .. n_iter``.

    The chain starts at ``tau0 = phi0 = 1`` and ``mu0`` drawn from the prior
    unless given. ``freeze_tau`` / ``freeze_phi`` skip the corresponding
    updates (used to check the pair sweep against an exact posterior).
    ``compiled=False`` runs the pure-Python pair sweep.
    """
    if not n_iter > n_burnin >= 0:
        raise ValueError("need n_iter > n_burnin >= 0")
    if h.alpha != 1:
        raise ValueError("the sampler supports alpha = 1 only")
    rng = np.random.default_rng(seed)
    N = data.N
    mu = sample_mu_prior(h, N, rng) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    tau0 = max(float(tau0), h.tau_floor)
    state = ChainState(mu=mu, tau=tau0, phi=float(phi0), w=np.zeros(N))
    n_keep = n_iter - n_burnin
    out_mu = np.empty((n_keep, N))
    out_w = np.empty((n_keep, N))
    out_tau = np.empty(n_keep)
    out_phi = np.empty(n_keep)
    out_rb = np.empty((n_keep, data.M_post))
    n_acc = 0
    stats: dict = {}
    for it in range(n_iter):
        try:
            state = sweep(state, data, h, rng, stats, compiled=compiled)
            if not freeze_phi:
                state = replace(state, phi=draw_phi(state, data, h, rng))
            if not freeze_tau:
                state, acc = mh_update_tau(state, data, h, rng)
                n_acc += acc
            state = replace(state, w=draw_w(state, data, rng))
        except FactorizationError as exc:
            raise SamplerError(f"iteration {it + 1}: {exc}") from exc
        k = it - n_burnin
        if k >= 0:
            out_mu[k] = state.mu
            out_w[k] = state.w
            out_tau[k] = state.tau
            out_phi[k] = state.phi
            out_rb[k] = data.Xpost @ w_conditional_mean(state, data)
    rate = n_acc / (n_iter * h.n_tau) if not freeze_tau else float("nan")
    meta = {
        "n_iter": n_iter,
        "n_burnin": n_burnin,
        "n_tau": h.n_tau,
        "eta": h.eta,
        "rng": "numpy.PCG64",
        "pair_updates": stats.get("pair_updates", 0),
    }
    return SamplerOutput(out_mu, out_w, out_tau, out_phi, out_rb, rate, int(seed), meta)
