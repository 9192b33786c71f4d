import math

import numpy as np
import pytest
from scipy.stats import kstest, norm

from ivnonasym.confint import kappa
from ivnonasym.ensembles import (
    EndoConfig,
    badkap_oracle,
    endo_oracle,
    gen_badkap,
    gen_endo,
    gen_hard,
    gen_weak,
    hard_oracle,
    make_oracle,
    normalized_endo_config,
    weak_oracle,
)
from ivnonasym.estimator import fit_iv, sigma_tilde
from ivnonasym.exceptions import DomainError
from ivnonasym.numerics import RandomStream


class TestEndo:
    def test_zero_endogeneity_equals_instrument(self):
        cfg = EndoConfig(d=3, alpha=1.0, eta=0.0, nu=0.0)
        data, _ = gen_endo(cfg, 500, RandomStream(1, 0))
        assert np.array_equal(data.X, data.Z)

    def test_covariate_noise_moment(self):
        # E[X eps] = eta * 1_d
        eta = 1.7
        cfg = EndoConfig(d=3, alpha=1.0, eta=eta, nu=0.8)
        data, beta = gen_endo(cfg, 100_000, RandomStream(2, 0))
        eps = data.y - data.X @ beta
        moment = data.X.T @ eps / data.n
        assert np.max(np.abs(moment - eta)) < 0.02

    def test_rademacher_entries(self):
        cfg = EndoConfig(d=2, instrument_law="rademacher")
        data, _ = gen_endo(cfg, 200, RandomStream(3, 0))
        assert set(np.unique(data.Z)) <= {-1.0, 1.0}

    def test_zero_noise_exact_recovery(self):
        cfg = EndoConfig(d=4, alpha=1.0, eta=2.0, nu=0.5, zero_noise=True)
        data, beta = gen_endo(cfg, 300, RandomStream(4, 0))
        fit = fit_iv(data)
        assert np.linalg.norm(fit.beta_hat - beta) < 1e-10

    def test_normalized_config_trace(self):
        cfg = normalized_endo_config(5, eta=2.0)
        oracle = endo_oracle(cfg)
        m = oracle.moments(100)
        lmat = np.linalg.solve(m.Gamma, np.linalg.solve(m.Gamma, m.Sigma).T).T
        assert np.trace(lmat) == pytest.approx(1.0, rel=1e-12)

    def test_determinism(self):
        cfg = EndoConfig(d=2, alpha=1.0, eta=0.3, nu=0.2)
        a, _ = gen_endo(cfg, 64, RandomStream(9, 17))
        b, _ = gen_endo(cfg, 64, RandomStream(9, 17))
        assert a.X.tobytes() == b.X.tobytes()
        assert a.y.tobytes() == b.y.tobytes()
        c, _ = gen_endo(cfg, 64, RandomStream(9, 18))
        assert a.y.tobytes() != c.y.tobytes()

    def test_oracle_rejects_zero_noise(self):
        with pytest.raises(DomainError):
            endo_oracle(EndoConfig(d=2, zero_noise=True))


class TestWeak:
    def test_population_cross_moment(self):
        oracle = weak_oracle(10.0)
        assert oracle.moments(256).Gamma[0, 0] == pytest.approx(10.0 / 16.0, rel=1e-14)

    def test_instrument_support(self):
        data, _ = gen_weak(4.0, 128, RandomStream(5, 0))
        assert set(np.unique(data.Z)) <= {-1.0, 1.0}

    def test_kappa_limit_law(self):
        # kappa approaches 1/|N(alpha1, 1)| for large n
        alpha1, n, reps = 4.0, 10_000, 3000
        kappas = np.empty(reps)
        for t in range(reps):
            data, _ = gen_weak(alpha1, n, RandomStream(6, t))
            kappas[t] = kappa(data).kappa

        def cdf(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            pos = t > 0
            out[pos] = norm.cdf(alpha1 - 1.0 / t[pos]) + norm.cdf(-alpha1 - 1.0 / t[pos])
            return out

        stat = kstest(kappas, cdf).statistic
        assert stat < 0.05


class TestHard:
    def test_omega_one_homoskedastic(self):
        oracle = hard_oracle(1.0, 4)
        assert np.allclose(oracle.moments(10).Sigma, np.eye(4))

    def test_instrument_second_moment(self):
        data, _ = gen_hard(0.5, 4, 100_000, RandomStream(7, 0))
        second = data.Z.T @ data.Z / data.n
        assert np.max(np.abs(second - np.eye(4))) < 0.05

    def test_cross_moment_identity(self):
        data, _ = gen_hard(0.5, 4, 100_000, RandomStream(8, 0))
        cross = data.Z.T @ data.X / data.n
        assert np.max(np.abs(cross - np.eye(4))) < 0.05

    def test_noise_moment_matches_declared(self):
        omega = 0.25
        oracle = hard_oracle(omega, 4)
        data, beta = oracle.generate(100_000, RandomStream(9, 0))
        st = sigma_tilde(data, beta)
        assert np.max(np.abs(st - oracle.moments(1).Sigma)) < 0.05

    def test_trace_formula(self):
        for d, omega in [(4, 0.0), (5, 0.25), (7, 1.0)]:
            sigma = hard_oracle(omega, d).moments(1).Sigma
            assert np.trace(sigma) == pytest.approx(1 + (d - 1) * omega, rel=1e-12)

    def test_requires_two_dims(self):
        with pytest.raises(DomainError):
            gen_hard(0.5, 1, 10, RandomStream(1, 0))

    def test_mixture_branches(self):
        data, _ = gen_hard(0.3, 3, 2000, RandomStream(10, 0))
        spike = data.Z[:, 1] == 0.0
        assert 0.4 < spike.mean() < 0.6
        # spike rows have zero mass off the first coordinate, others none on it
        assert np.all(data.Z[spike][:, 1:] == 0.0)
        assert np.all(data.Z[~spike][:, 0] == 0.0)


class TestBadkap:
    def test_moment_cancellation_every_draw(self):
        for t in range(50):
            data, _ = gen_badkap(0.25, 0.1, 10.0, 256, RandomStream(11, t))
            w = (data.X[:, 0] - (0.25 / 16.0) * data.Z[:, 0]
                 - 0.1 * (data.y - data.X[:, 0]))
            assert abs(np.sum(data.Z[:, 0] * w)) < 1e-10

    def test_centered_gaussian_moments(self):
        # Var(G_i) = 1 and Cov(G_i, G_j) = -1/(n-1)
        n, reps = 100, 20_000
        nu = 10.0
        firsts = np.empty(reps)
        seconds = np.empty(reps)
        for t in range(reps):
            data, _ = gen_badkap(1.0, 0.0, nu, n, RandomStream(12, t))
            # with eta = 0: x = alpha z + nu z G, so G = z(x - alpha z)/nu
            g_vec = data.Z[:, 0] * (data.X[:, 0] - (1.0 / math.sqrt(n)) * data.Z[:, 0]) / nu
            firsts[t] = g_vec[0]
            seconds[t] = g_vec[1]
        assert np.var(firsts) == pytest.approx(1.0, abs=0.02)
        assert np.mean(firsts * seconds) == pytest.approx(-1.0 / (n - 1), abs=0.02)

    def test_scaling_reproduces_target_moments(self):
        # Var(H_i - Hbar) = 1 - 1/n and Cov = -1/n before the rescale
        n, reps = 50, 20_000
        g = RandomStream(13, 0).generator()
        h = g.standard_normal((reps, n))
        centered = h - h.mean(axis=1, keepdims=True)
        assert np.var(centered[:, 0]) == pytest.approx(1 - 1 / n, abs=0.02)
        assert np.mean(centered[:, 0] * centered[:, 1]) == pytest.approx(-1 / n, abs=0.02)
        scaled = math.sqrt(n / (n - 1)) * centered
        assert np.var(scaled[:, 0]) == pytest.approx(1.0, abs=0.02)
        assert np.mean(scaled[:, 0] * scaled[:, 1]) == pytest.approx(-1 / (n - 1), abs=0.02)

    def test_requires_two_observations(self):
        with pytest.raises(DomainError):
            gen_badkap(1.0, 0.1, 10.0, 1, RandomStream(1, 0))


class TestOracles:
    @pytest.mark.parametrize(
        "config",
        [
            {"family": "endo", "d": 3, "alpha": 1.5, "eta": 0.5, "nu": 0.5},
            {"family": "weak", "alpha1": 6.0},
            {"family": "hard", "omega": 0.5, "d": 3},
            {"family": "badkap", "alpha1": 0.25},
        ],
    )
    def test_make_oracle_roundtrip(self, config):
        oracle = make_oracle(config)
        data, beta = oracle.generate(500, RandomStream(14, 0))
        assert data.n == 500
        m = oracle.moments(500)
        assert m.b > 0 and "empirical-max" in m.b_source
        assert np.linalg.matrix_rank(m.Gamma) == m.Gamma.shape[0]

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            make_oracle({"family": "nope"})

    def test_m3_values(self):
        m = 2.0 * math.sqrt(2.0 / math.pi)
        assert weak_oracle(4.0).moments(10).m3 == pytest.approx(m, rel=1e-12)
        assert badkap_oracle(0.5).moments(10).m3 == pytest.approx(m, rel=1e-12)
        # rademacher endo: ||z|| = sqrt(d) exactly
        got = endo_oracle(EndoConfig(d=4, alpha=1.0)).moments(10).m3
        assert got == pytest.approx(8.0 * m, rel=1e-12)
        assert hard_oracle(0.0, 3).moments(10).m3 is None

    def test_weak_b_scales_with_root_n(self):
        oracle = weak_oracle(4.0)
        b1 = oracle.moments(256).b
        b2 = oracle.moments(1024).b
        assert b2 / b1 == pytest.approx(2.0, rel=0.1)
