from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from bvss.model import (
    ChainState,
    Hyperparams,
    draw_phi,
    draw_w,
    init_state,
    log_likelihood,
    log_prior_tau,
    phi_conditional,
    sample_mu_prior,
    w_conditional_mean,
)
from bvss.panel import PanelData
from conftest import make_panel
from oracles import dense_sigma


def _dense_loglik(mu, tau, phi, data):
    g = np.flatnonzero(mu > 0)
    Xg = data.X[:, g]
    V = Xg.T @ Xg + np.eye(g.size) / tau
    S = dense_sigma(data.X, g, tau)
    e = data.Y - Xg @ mu[g]
    return 0.5 * data.M * math.log(phi) - 0.5 * g.size * math.log(tau) - 0.5 * np.linalg.slogdet(V)[1] - 0.5 * phi * e @ S @ e


class TestHyperparams:
    def test_defaults(self):
        h = Hyperparams()
        assert (h.kappa1, h.kappa2, h.a1, h.a2, h.alpha, h.theta) == (1, 1, 0.01, 0.1, 1, 0.2)
        assert h.tau_floor == 1e-6

    def test_json_roundtrip(self):
        h = Hyperparams(theta=0.25, n_tau=3)
        assert Hyperparams.from_json(h.to_json()) == h
        assert set(h.to_dict()) == {
            "kappa1", "kappa2", "a1", "a2", "alpha", "theta", "tau_floor", "n_tau", "eta",
        }

    @pytest.mark.parametrize(
        "kw", [dict(theta=0.0), dict(theta=1.0), dict(a1=-1.0), dict(n_tau=0), dict(eta=float("nan"))]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Hyperparams(**kw)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            Hyperparams.from_dict({"thta": 0.3})


class TestLogLikelihood:
    @pytest.mark.parametrize("seed", range(10))
    def test_dense(self, seed):
        rng = np.random.default_rng(seed)
        M, N = int(rng.integers(3, 33)), int(rng.integers(2, 9))
        data = make_panel(M=M, N=N, seed=seed)
        mu = rng.dirichlet(np.ones(N)) * (rng.random(N) < 0.6)
        if not mu.any():
            mu[0] = 1.0
        mu /= mu.sum()
        tau, phi = float(np.exp(rng.uniform(-4, 4))), float(np.exp(rng.uniform(-2, 2)))
        assert log_likelihood(mu, tau, phi, data) == pytest.approx(_dense_loglik(mu, tau, phi, data), abs=1e-8)

    def test_large_tau(self):
        data = make_panel(M=20, N=5, seed=3)
        mu = np.array([0.5, 0.5, 0, 0, 0])
        assert log_likelihood(mu, 1e6, 2.0, data) == pytest.approx(_dense_loglik(mu, 1e6, 2.0, data), abs=1e-8)

    def test_small_tau_residual(self):
        data = make_panel(M=20, N=5, seed=4)
        mu = np.array([0.2, 0.3, 0.5, 0, 0])
        st = init_state(data, mu, 1e-6, 1.0)
        shape, rate = phi_conditional(st, data, Hyperparams(kappa2=1e-300))
        e = data.Y - data.X @ mu
        assert 2 * rate == pytest.approx(e @ e, rel=1e-4)

    def test_zero_residual(self):
        X = np.array([[2.0, 1.0]])
        data = PanelData(np.array([2.0]), X, np.zeros((1, 2)), np.zeros(1))
        mu = np.array([1.0, 0.0])
        ll = log_likelihood(mu, 1.0, 1.0, data)
        assert ll == pytest.approx(-0.5 * math.log(5.0))

    def test_empty(self, panel):
        with pytest.raises(ValueError):
            log_likelihood(np.zeros(panel.N), 1.0, 1.0, panel)


class TestDrawPhi:
    def test_shape(self):
        data = make_panel(M=33, N=3)
        st = init_state(data, np.array([1.0, 0, 0]), 1.0, 1.0)
        shape, _ = phi_conditional(st, data, Hyperparams())
        assert shape == 17.0

    def test_zero_residual_rate(self):
        X = np.array([[2.0, 1.0]])
        data = PanelData(np.array([2.0]), X, np.zeros((1, 2)), np.zeros(1))
        st = init_state(data, np.array([1.0, 0.0]), 1.0, 1.0)
        assert phi_conditional(st, data, Hyperparams(kappa2=2.0))[1] == pytest.approx(1.0)

    def test_gamma_moments(self):
        # shape 3 rate 2: M = 5, kappa1 = 1, residual quadratic 0, kappa2 = 4
        X = np.zeros((5, 2))
        X[:, 0] = 1.0
        data = PanelData(np.ones(5), X, np.zeros((1, 2)), np.zeros(1))
        h = Hyperparams(kappa2=4.0)
        st = init_state(data, np.array([1.0, 0.0]), 1e-6, 1.0)
        shape, rate = phi_conditional(st, data, h)
        assert (shape, rate) == pytest.approx((3.0, 2.0), abs=1e-5)
        rng = np.random.default_rng(0)
        d = np.array([draw_phi(st, data, h, rng) for _ in range(100000)])
        se = math.sqrt(shape) / rate / math.sqrt(d.size)
        assert abs(d.mean() - shape / rate) < 3 * se
        assert stats.kstest(d, stats.gamma(shape, scale=1 / rate).cdf).pvalue > 0.01


class TestDrawW:
    def test_small_tau_mean(self):
        data = make_panel(M=10, N=4, seed=5)
        mu = np.array([0.3, 0.0, 0.7, 0.0])
        st = init_state(data, mu, 1e-8, 1.0)
        m = w_conditional_mean(st, data)
        assert np.linalg.norm(m - mu) <= 1e-4
        assert m[1] == 0.0 and m[3] == 0.0

    def test_zero_column(self):
        X = np.zeros((3, 2))
        X[:, 1] = 1.0
        data = PanelData(np.ones(3), X, np.zeros((1, 2)), np.zeros(1))
        st = init_state(data, np.array([1.0, 0.0]), 1.0, 1.0)
        np.testing.assert_allclose(w_conditional_mean(st, data), [1.0, 0.0])

    def test_moments_and_phi_scaling(self):
        data = make_panel(M=8, N=3, seed=6)
        mu = np.array([0.4, 0.6, 0.0])
        g = [0, 1]
        tau = 0.7
        Xg = data.X[:, g]
        Vinv = np.linalg.inv(Xg.T @ Xg + np.eye(2) / tau)
        mean = Vinv @ (Xg.T @ data.Y + mu[g] / tau)
        rng = np.random.default_rng(1)
        variances = []
        for phi in (2.0, 2e4):
            st = init_state(data, mu, tau, phi)
            W = np.array([draw_w(st, data, rng) for _ in range(100000)])
            assert np.all(W[:, 2] == 0.0)
            se = np.sqrt(np.diag(Vinv) / phi / W.shape[0])
            assert np.all(np.abs(W[:, g].mean(axis=0) - mean) < 4 * se)
            np.testing.assert_allclose(np.cov(W[:, g].T), Vinv / phi, rtol=0.03, atol=0)
            variances.append(W[:, 0].var())
        assert variances[0] / variances[1] == pytest.approx(1e4, rel=0.2)


class TestLogPriorTau:
    def test_prior_moments(self):
        h = Hyperparams()
        assert h.a1 / h.a2 == pytest.approx(0.1)
        assert h.a1 / h.a2**2 == pytest.approx(1.0)

    def test_ratio(self):
        h = Hyperparams()
        d = log_prior_tau(0.2, h) - log_prior_tau(0.1, h)
        assert d == pytest.approx((h.a1 - 1) * math.log(2) - h.a2 * 0.1, abs=1e-14)

    def test_exponential(self):
        h = Hyperparams(a1=1.0, a2=0.5)
        assert log_prior_tau(3.0, h) == pytest.approx(math.log(0.5) - 1.5)

    def test_density(self):
        h = Hyperparams(a1=2.0, a2=3.0)
        assert log_prior_tau(1.0, h) == pytest.approx(stats.gamma(2.0, scale=1 / 3).logpdf(1.0))
        assert log_prior_tau(1.0, h) == pytest.approx(2 * math.log(3) - 3)

    def test_floor(self):
        h = Hyperparams()
        assert log_prior_tau(1e-7, h) == -math.inf
        assert math.isfinite(log_prior_tau(1e-6, h))


class TestSampleMuPrior:
    def test_single(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            np.testing.assert_array_equal(sample_mu_prior(Hyperparams(), 1, rng), [1.0])

    def test_size_moment(self):
        rng = np.random.default_rng(1)
        h = Hyperparams()
        sizes = np.array([(sample_mu_prior(h, 20, rng) > 0).sum() for _ in range(100000)])
        p0 = 0.8**20
        mean = 20 * 0.2 / (1 - p0)
        var = (20 * 0.2 * 0.8 + 16) / (1 - p0) - mean**2
        assert abs(sizes.mean() - mean) < 3 * math.sqrt(var / sizes.size)
        assert sizes.min() >= 1

    def test_dirichlet_symmetric(self):
        rng = np.random.default_rng(2)
        h = Hyperparams(theta=0.999)
        draws = np.array([sample_mu_prior(h, 3, rng) for _ in range(100000)])
        full = draws[(draws > 0).all(axis=1)]
        se = np.sqrt(1 / 18 / full.shape[0])  # Dirichlet(1,1,1) marginal variance 1/18
        assert np.all(np.abs(full.mean(axis=0) - 1 / 3) < 3 * se)

    def test_state_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            mu = sample_mu_prior(Hyperparams(theta=0.3), 7, rng)
            ChainState(mu=mu, tau=1.0, phi=1.0).check()
