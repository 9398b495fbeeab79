"""Simulation designs and the replicate-level benchmark protocol.

Three data-generating processes:

``sparse``
    ``X``, ``Xpost`` i.i.d. standard normal; ``Y = X w* + eps``.
``factor_nonsparse``
    ``(Y, X)`` and ``(Ypost0, Xpost)`` from a four-factor model with
    treated-unit loadings in row 0; no exact sparse truth.
``factor_sparse``
    ``X`` from the four-factor model, ``Y = X w* + eps``.

In every design ``w* = lambda * mu*`` with ``mu*_j = j / S_J`` for the first
``J`` units, ``phi* = nu* = 4 / ||w*||^2``, the treatment effects are
``delta_i ~ N(delta*, 1 / nu*)`` and the true model is the first ``J`` units.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import fit_lasso_cv, fit_ols, fit_qp
from .inference import att_from_draws
from .model import Hyperparams
from .panel import PanelData
from .sampler import run_chain

log = logging.getLogger(__name__)

KINDS = ("sparse", "factor_nonsparse", "factor_sparse")
METHODS = ("bvs_ss", "lasso", "ols", "qp", "oracle_ols", "oracle_qp")
FACTOR_NOISE_SD = 0.5


@dataclass(frozen=True)
class DgpSpec:
    """One simulation design.

    ``noise_scale`` multiplies the outcome noise standard deviations
    (``eps``, ``eps_post`` and the factor-model errors); ``0`` gives noiseless
    outcomes while keeping the treatment-effect draws.
    """

    kind: str = "sparse"
    M: int = 200
    M_post: int = 200
    N: int = 20
    J: int = 5
    lambda_scale: float = 1.0
    delta_star: float = 0.5
    seed: int = 0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not (self.M >= 1 and self.M_post >= 1 and self.N >= 2):
            raise ValueError("need M >= 1, M_post >= 1, N >= 2")
        if not 1 <= self.J <= self.N:
            raise ValueError(f"need 1 <= J <= N, got J={self.J}, N={self.N}")
        if not self.lambda_scale > 0:
            raise ValueError("lambda_scale must be positive")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be nonnegative")

    @property
    def mu_star(self) -> np.ndarray:
        mu = np.zeros(self.N)
        mu[: self.J] = np.arange(1, self.J + 1) / (0.5 * self.J * (self.J + 1))
        return mu

    @property
    def w_star(self) -> np.ndarray:
        return self.lambda_scale * self.mu_star

    @property
    def phi_star(self) -> float:
        w = self.w_star
        return 4.0 / float(w @ w)

    @property
    def gamma_star(self) -> tuple:
        return tuple(range(self.J))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> DgpSpec:
        return cls(**d)


@dataclass(frozen=True)
class Truth:
    w_star: np.ndarray
    gamma_star: tuple
    delta: np.ndarray


def simulate_factors(T: int, rng) -> np.ndarray:
    """``(4, T)`` factor paths started from zero states (no burn-in discard)."""
    u = rng.standard_normal((3, T))
    F = np.zeros((4, T))
    F[0] = rng.standard_normal(T)
    for t in range(T):
        u1, u2, u3 = u[:, t]
        u2m1 = u[1, t - 1] if t >= 1 else 0.0
        u3m1 = u[2, t - 1] if t >= 1 else 0.0
        u3m2 = u[2, t - 2] if t >= 2 else 0.0
        F[1, t] = (0.9 * F[1, t - 1] if t else 0.0) + u1
        F[2, t] = (0.5 * F[2, t - 1] if t else 0.0) + u2 + 0.5 * u2m1
        F[3, t] = u3 + 0.8 * u3m1 + 0.4 * u3m2
    return F


def factor_loadings(n_rows: int, J: int, T: int, rng) -> np.ndarray:
    """Rows ``0 .. J`` ~ Unif[1, 2]; later rows fixed at ``-2 / T``."""
    L = np.full((n_rows, 4), -2.0 / T)
    k = min(J + 1, n_rows)
    L[:k] = rng.uniform(1.0, 2.0, size=(k, 4))
    return L


def generate(spec: DgpSpec, rng=None):
    """Draw one data set; returns ``(PanelData, Truth)``.

    ``rng`` defaults to ``numpy.random.default_rng(spec.seed)``.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    M, Mp, N = spec.M, spec.M_post, spec.N
    T = M + Mp
    w = spec.w_star
    sd = spec.noise_scale / math.sqrt(spec.phi_star)
    if spec.kind == "sparse":
        X = rng.standard_normal((M, N))
        Xp = rng.standard_normal((Mp, N))
        Y = X @ w + sd * rng.standard_normal(M)
        Y0p = Xp @ w + sd * rng.standard_normal(Mp)
    elif spec.kind == "factor_nonsparse":
        F = simulate_factors(T, rng)
        Lam = factor_loadings(N + 1, spec.J, T, rng)
        Z = F.T @ Lam.T + spec.noise_scale * FACTOR_NOISE_SD * rng.standard_normal((T, N + 1))
        Y, X = Z[:M, 0], Z[:M, 1:]
        Y0p, Xp = Z[M:, 0], Z[M:, 1:]
    else:
        F = simulate_factors(T, rng)
        Lam = factor_loadings(N, spec.J, T, rng)
        Z = F.T @ Lam.T + spec.noise_scale * FACTOR_NOISE_SD * rng.standard_normal((T, N))
        X, Xp = Z[:M], Z[M:]
        Y = X @ w + sd * rng.standard_normal(M)
        Y0p = Xp @ w + sd * rng.standard_normal(Mp)
    delta = spec.delta_star + rng.standard_normal(Mp) / math.sqrt(spec.phi_star)
    data = PanelData(Y=Y, X=X, Xpost=Xp, Ypost1=Y0p + delta)
    return data, Truth(w.copy(), spec.gamma_star, delta)


# ---------------------------------------------------------------------------
# replicates


@dataclass
class ReplicateResult:
    """Per-method metrics for one replicate; ``None`` values mark non-converged fits."""

    replicate: int
    seed: int
    att: dict = field(default_factory=dict)
    att_errors: dict = field(default_factory=dict)
    l1_loss: dict = field(default_factory=dict)
    model_size: dict = field(default_factory=dict)
    tau_mean: float = float("nan")
    phi_mean: float = float("nan")
    acceptance_rate_tau: float = float("nan")


def _l1(support, gamma_star, N) -> int:
    a = np.zeros(N, dtype=bool)
    a[list(support)] = True
    b = np.zeros(N, dtype=bool)
    b[list(gamma_star)] = True
    return int(np.sum(a != b))


def run_replicate(spec: DgpSpec, methods, r: int, base_seed: int, h: Hyperparams, n_iter: int, n_burnin: int) -> ReplicateResult:
    """Generate replicate ``r`` and fit every method on it."""
    seed = base_seed + r
    data_ss, chain_ss, cv_ss = np.random.SeedSequence(seed).spawn(3)
    data, truth = generate(spec, np.random.default_rng(data_ss))
    res = ReplicateResult(replicate=r, seed=seed)
    g = truth.gamma_star
    for m in methods:
        if m == "bvs_ss":
            out = run_chain(data, h, n_iter, n_burnin, seed=int(chain_ss.generate_state(1, np.uint64)[0]))
            s = att_from_draws(out, data)
            att = s.mean
            gs = np.zeros(data.N, dtype=bool)
            gs[list(g)] = True
            inc = out.mu > 0
            res.l1_loss[m] = float(np.mean(np.sum(inc != gs, axis=1)))
            res.model_size[m] = float(np.mean(inc.sum(axis=1)))
            res.tau_mean, res.phi_mean = s.tau_mean, s.phi_mean
            res.acceptance_rate_tau = out.acceptance_rate_tau
        else:
            if m == "lasso":
                fit = fit_lasso_cv(data, seed=int(cv_ss.generate_state(1)[0]))
            elif m == "ols":
                fit = fit_ols(data)
            elif m == "qp":
                fit = fit_qp(data)
            elif m == "oracle_ols":
                fit = fit_ols(data, g)
            elif m == "oracle_qp":
                fit = fit_qp(data, g)
            else:
                raise ValueError(f"unknown method {m!r}")
            if not fit.converged:
                res.att[m] = res.att_errors[m] = res.l1_loss[m] = res.model_size[m] = None
                continue
            att = fit.att
            res.l1_loss[m] = float(_l1(fit.support, g, data.N))
            res.model_size[m] = float(len(fit.support))
        res.att[m] = float(att)
        res.att_errors[m] = float((att - spec.delta_star) ** 2)
    return res


def _run_one(args):
    return run_replicate(*args)


def run_replicates(
    spec: DgpSpec,
    methods=METHODS,
    n_rep: int = 100,
    base_seed: int = 0,
    h: Hyperparams | None = None,
    n_iter: int = 1000,
    n_burnin: int = 500,
    n_workers: int = 1,
) -> list:
    """Run ``n_rep`` replicates; replicate ``r`` uses seed ``base_seed + r``.

    Results are identical for any ``n_workers``.
    """
    if n_rep < 1:
        raise ValueError("n_rep must be at least 1")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    h = h or Hyperparams()
    jobs = [(spec, methods, r, base_seed, h, n_iter, n_burnin) for r in range(n_rep)]
    if n_workers <= 1 or n_rep == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        return list(ex.map(_run_one, jobs))


def aggregate(results, methods=None) -> dict:
    """Across-replicate MSE, RE against oracle OLS, mean l1 loss and model size.

    Non-converged fits are dropped per method and counted in ``n_missing``.
    The BVS-SS ``tau_phi_ratio`` is the ratio of the across-replicate means
    of the posterior means of ``tau`` and ``phi``.
    """
    if methods is None:
        methods = [m for m in METHODS if any(m in r.att for r in results)]
    out = {}
    for m in methods:
        errs = [r.att_errors[m] for r in results if r.att_errors.get(m) is not None]
        l1 = [r.l1_loss[m] for r in results if r.l1_loss.get(m) is not None]
        size = [r.model_size[m] for r in results if r.model_size.get(m) is not None]
        out[m] = {
            "mse": float(np.mean(errs)) if errs else float("nan"),
            "l1_loss": float(np.mean(l1)) if l1 else float("nan"),
            "model_size": float(np.mean(size)) if size else float("nan"),
            "n_missing": len(results) - len(errs),
        }
    ref = out.get("oracle_ols", {}).get("mse", float("nan"))
    for m in out:
        mse = out[m]["mse"]
        out[m]["re"] = float(ref / mse) if mse > 0 and math.isfinite(ref) else float("nan")
    summary = {"methods": out, "n_rep": len(results)}
    if any(not math.isnan(r.tau_mean) for r in results):
        taus = np.array([r.tau_mean for r in results])
        phis = np.array([r.phi_mean for r in results])
        summary["bvs_ss"] = {
            "tau_mean": float(taus.mean()),
            "phi_mean": float(phis.mean()),
            "tau_phi_ratio": float(taus.mean() / phis.mean()),
            "tau_phi_ratio_per_replicate_mean": float(np.mean(taus / phis)),
        }
    return summary


def write_metrics_csv(results, summary, path, header_lines=()):
    """Long format ``method, metric, value, replicate``; aggregates use replicate ``all``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "metric", "value", "replicate"])
        for r in results:
            for m in r.att:
                for metric, d in (
                    ("att", r.att), ("sq_error", r.att_errors),
                    ("l1_loss", r.l1_loss), ("model_size", r.model_size),
                ):
                    v = d.get(m)
                    w.writerow([m, metric, "nan" if v is None else repr(float(v)), r.replicate])
            if not math.isnan(r.tau_mean):
                w.writerow(["bvs_ss", "tau_mean", repr(r.tau_mean), r.replicate])
                w.writerow(["bvs_ss", "phi_mean", repr(r.phi_mean), r.replicate])
        for m, d in summary["methods"].items():
            for metric in ("mse", "re", "l1_loss", "model_size", "n_missing"):
                w.writerow([m, metric, repr(float(d[metric])), "all"])
        for metric, v in summary.get("bvs_ss", {}).items():
            w.writerow(["bvs_ss", metric, repr(v), "all"])


def summary_json(spec: DgpSpec, summary: dict, meta=None) -> str:
    d = {"dgp": spec.to_dict(), **summary}
    if meta is not None:
        d["metadata"] = meta
    return json.dumps(d, indent=2, sort_keys=True)
