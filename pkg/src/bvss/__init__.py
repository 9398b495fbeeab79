"""Bayesian synthetic control with a soft simplex spike-and-slab prior."""

from __future__ import annotations

__version__ = "0.1.0"

from .baselines import EstimatorResult, att_plugin, fit_lasso_cv, fit_ols, fit_qp
from .inference import (
    AttSummary,
    att_from_draws,
    counterfactual_path,
    diagnostics,
    effective_sample_size,
    inclusion_probs,
)
from .model import ChainState, Hyperparams, log_likelihood, log_prior_tau, sample_mu_prior
from .panel import PanelData, load_panel, write_panel
from .sampler import (
    PairConditional,
    SamplerOutput,
    gibbs_pair_update,
    mh_update_tau,
    pair_conditional,
    run_chain,
    sample_truncnorm,
)
from .simgen import DgpSpec, generate, run_replicates

__all__ = [
    "AttSummary", "ChainState", "DgpSpec", "EstimatorResult", "Hyperparams",
    "PairConditional", "PanelData", "SamplerOutput", "att_from_draws",
    "att_plugin", "counterfactual_path", "diagnostics", "effective_sample_size",
    "fit_lasso_cv", "fit_ols", "fit_qp", "generate", "gibbs_pair_update",
    "inclusion_probs", "load_panel", "log_likelihood", "log_prior_tau",
    "mh_update_tau", "pair_conditional", "run_chain", "run_replicates",
    "sample_mu_prior", "sample_truncnorm", "write_panel",
]
