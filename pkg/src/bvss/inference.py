"""Posterior summaries: ATT, counterfactual paths, inclusion frequencies, diagnostics.

All intervals are central empirical quantile intervals with linear
interpolation between order statistics (``numpy.quantile(method="linear")``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .panel import PanelData
from .sampler import SamplerOutput

QUANTILE_METHOD = "linear"


def central_interval(x, level: float = 0.95):
    """``(lo, hi)`` quantiles at ``(1 - level) / 2`` and ``1 - (1 - level) / 2``."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("no draws")
    a = 0.5 * (1.0 - level)
    lo, hi = np.quantile(x, [a, 1.0 - a], method=QUANTILE_METHOD)
    return float(lo), float(hi)


@dataclass(frozen=True)
class AttSummary:
    """Posterior ATT summary plus scalar chain summaries.

    ``mean`` is the arithmetic mean of ``draws``; ``ci_lo``/``ci_hi`` the
    central interval at ``level``.
    """

    mean: float
    ci_lo: float
    ci_hi: float
    draws: np.ndarray
    level: float
    tau_mean: float
    phi_mean: float
    model_size_mean: float
    tau_ci: tuple
    phi_ci: tuple
    size_ci: tuple

    def to_dict(self) -> dict:
        return {
            "att": {"mean": self.mean, "ci": [self.ci_lo, self.ci_hi], "level": self.level},
            "tau": {"mean": self.tau_mean, "ci": list(self.tau_ci)},
            "phi": {"mean": self.phi_mean, "ci": list(self.phi_ci)},
            "model_size": {"mean": self.model_size_mean, "ci": list(self.size_ci)},
        }


def _check(out: SamplerOutput):
    if len(out) == 0:
        raise ValueError("no posterior draws")


def att_draws(out: SamplerOutput, data: PanelData, use_rb: bool = True) -> np.ndarray:
    """Per-draw ATT ``mean(Ypost1 - c_t)``."""
    _check(out)
    if use_rb:
        cf = out.rb_counterfactual
    else:
        if out.w.shape[1] != data.N:
            raise ValueError(f"draws have {out.w.shape[1]} units, data has {data.N}")
        cf = out.w @ data.Xpost.T
    if cf.shape[1] != data.M_post:
        raise ValueError(
            f"counterfactual length {cf.shape[1]} does not match {data.M_post} post periods"
        )
    return (data.Ypost1[None, :] - cf).mean(axis=1)


def att_from_draws(out: SamplerOutput, data: PanelData, level: float = 0.95, use_rb: bool = True) -> AttSummary:
    """Summarize the ATT posterior and the ``tau``, ``phi``, model-size chains.

    The model-size interval uses quantiles of the integer draws, so its
    endpoints can be fractional when they fall between two sizes.
    """
    d = att_draws(out, data, use_rb)
    size = out.model_size.astype(float)
    lo, hi = central_interval(d, level)
    return AttSummary(
        mean=float(d.mean()),
        ci_lo=lo,
        ci_hi=hi,
        draws=d,
        level=level,
        tau_mean=float(out.tau.mean()),
        phi_mean=float(out.phi.mean()),
        model_size_mean=float(size.mean()),
        tau_ci=central_interval(out.tau, level),
        phi_ci=central_interval(out.phi, level),
        size_ci=central_interval(size, level),
    )


def counterfactual_path(out: SamplerOutput, data: PanelData, level: float = 0.95):
    """Posterior mean of ``X w`` over all periods and post-period pointwise bands.

    Returns ``(mean, lo, hi)`` with ``mean`` of length ``M + M_post`` and the
    bands of length ``M_post``.
    """
    _check(out)
    pre = out.w @ data.X.T
    post = out.w @ data.Xpost.T
    mean = np.concatenate([pre.mean(axis=0), post.mean(axis=0)])
    a = 0.5 * (1.0 - level)
    lo, hi = np.quantile(post, [a, 1.0 - a], axis=0, method=QUANTILE_METHOD)
    return mean, lo, hi


def inclusion_probs(out: SamplerOutput) -> np.ndarray:
    """Fraction of draws in which each unit has ``mu_i > 0``."""
    _check(out)
    return (out.mu > 0).mean(axis=0)


# ---------------------------------------------------------------------------
# diagnostics


def _autocov(x) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    return np.fft.irfft(f * np.conj(f), nfft)[:n] / n


def effective_sample_size(x):
    """Geyer initial-positive-sequence ESS; returns ``(ess, zero_variance)``.

    A chain with zero sample variance is reported with ``ess = n``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("no draws")
    if n < 4 or np.ptp(x) == 0.0:
        return float(n), bool(np.ptp(x) == 0.0)
    acov = _autocov(x)
    if acov[0] <= 0:
        return float(n), True
    rho = acov / acov[0]
    # sums of adjacent pairs Gamma_k = rho_{2k} + rho_{2k+1}, kept while positive
    # and forced monotone
    total = 0.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        g = rho[k] + rho[k + 1]
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau_int = 2.0 * total - 1.0
    return float(n / max(tau_int, 1.0 / n)), False


def diagnostics(out: SamplerOutput) -> dict:
    """ESS for ``tau``, ``phi``, ``log tau`` and model size plus the tau acceptance rate."""
    _check(out)
    chains = {
        "tau": out.tau,
        "log_tau": np.log(out.tau),
        "phi": out.phi,
        "model_size": out.model_size.astype(float),
    }
    report = {"n_draws": len(out), "acceptance_rate_tau": out.acceptance_rate_tau}
    for name, x in chains.items():
        ess, flat = effective_sample_size(x)
        report[name] = {"ess": ess, "zero_variance": flat}
    return report


def summary_dict(out: SamplerOutput, data: PanelData, level: float = 0.95, use_rb: bool = True) -> dict:
    """JSON-ready summary: ATT, scalar chains, inclusion frequencies, diagnostics."""
    s = att_from_draws(out, data, level, use_rb)
    d = s.to_dict()
    d["inclusion"] = [
        {"unit": name, "prob": float(p)} for name, p in zip(data.unit_names, inclusion_probs(out))
    ]
    d["diagnostics"] = diagnostics(out)
    d["conventions"] = {
        "quantiles": QUANTILE_METHOD,
        "interval": "central",
        "rao_blackwellized": use_rb,
        "model_size_ci": "quantiles of integer draws",
    }
    return d


def summary_json(out: SamplerOutput, data: PanelData, level: float = 0.95, use_rb: bool = True, meta=None) -> str:
    d = summary_dict(out, data, level, use_rb)
    if meta is not None:
        d["metadata"] = meta
    return json.dumps(d, indent=2, sort_keys=True, allow_nan=True)
