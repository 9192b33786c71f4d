import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfcinv, ndtr

from ivnonasym.exceptions import DegenerateSampleError, DomainError
from ivnonasym.numerics import (
    DensityEstimate,
    RandomStream,
    gaussian_kde,
    normal_quantile,
    spectral_norm,
)


def quantile_oracle(delta: float) -> float:
    # Phi^{-1}(1 - delta/2) evaluated in the tail-stable erfc form
    return math.sqrt(2.0) * float(erfcinv(delta))


class TestNormalQuantile:
    def test_delta_005(self):
        assert normal_quantile(0.05) == pytest.approx(1.959964, abs=1e-6)

    def test_delta_095_matches_rounded_value(self):
        assert normal_quantile(0.95) == pytest.approx(0.0627, abs=5e-5)

    def test_limit_toward_one(self):
        assert abs(normal_quantile(1 - 1e-12)) < 1e-10

    def test_against_erfc_oracle(self):
        deltas = np.linspace(1e-8, 1 - 1e-8, 2001)
        errs = [abs(normal_quantile(d) - quantile_oracle(d)) for d in deltas]
        assert max(errs) < 1e-10

    def test_roundtrip_two_sided_probability(self):
        for x in np.linspace(0.0, 6.0, 61)[1:]:
            delta = 2.0 * (1.0 - float(ndtr(x)))
            assert normal_quantile(delta) == pytest.approx(x, abs=1e-8)

    def test_strictly_decreasing(self):
        deltas = np.linspace(0.001, 0.999, 200)
        values = [normal_quantile(d) for d in deltas]
        assert all(a > b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.3, 2.0, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            normal_quantile(bad)


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-12)

    def test_diagonal(self):
        assert spectral_norm(np.diag([1.0, 0.5])) == pytest.approx(1.0, rel=1e-12)

    def test_nilpotent(self):
        assert spectral_norm(np.array([[0.0, 2.0], [0.0, 0.0]])) == pytest.approx(2.0, rel=1e-12)

    def test_rectangular_matches_svd(self):
        rng = np.random.default_rng(0)
        for shape in [(3, 5), (5, 3), (1, 4), (6, 6)]:
            a = rng.standard_normal(shape)
            assert spectral_norm(a) == pytest.approx(
                float(np.linalg.svd(a, compute_uv=False)[0]), rel=1e-10
            )

    @given(st.floats(-10, 10, allow_nan=False), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_homogeneity(self, c, seed):
        a = np.random.default_rng(seed).standard_normal((3, 4))
        assert spectral_norm(c * a) == pytest.approx(abs(c) * spectral_norm(a), abs=1e-9)

    def test_gram_square(self):
        a = np.random.default_rng(3).standard_normal((4, 4))
        assert spectral_norm(a.T @ a) == pytest.approx(spectral_norm(a) ** 2, rel=1e-9)

    def test_nonfinite(self):
        with pytest.raises(DomainError):
            spectral_norm(np.array([[1.0, np.inf], [0.0, 1.0]]))


class TestGaussianKde:
    def test_two_point_formula(self):
        samples = np.array([0.0, 10.0])
        h = np.std(samples, ddof=1) * 2 ** (-0.2)
        est = gaussian_kde(samples, np.array([0.0]))
        phi = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        expected = (phi(0.0) + phi(10.0 / h)) / (2 * h)
        assert est.density[0] == pytest.approx(expected, rel=1e-12)
        assert est.bandwidth == pytest.approx(h, rel=1e-12)

    def test_symmetry(self):
        samples = np.array([-2.0, 2.0])
        grid = np.linspace(-5, 5, 101)
        est = gaussian_kde(samples, grid)
        assert np.allclose(est.density, est.density[::-1], rtol=1e-10)

    def test_standard_normal_at_zero(self):
        draws = RandomStream(7, 0).generator().standard_normal(100_000)
        est = gaussian_kde(draws, np.array([0.0]))
        assert est.density[0] == pytest.approx(0.3989, abs=0.01)

    def test_integral_near_one(self):
        draws = RandomStream(8, 1).generator().standard_normal(4000)
        h = np.std(draws, ddof=1) * 4000 ** (-0.2)
        grid = np.linspace(draws.min() - 4 * h, draws.max() + 4 * h, 600)
        est = gaussian_kde(draws, grid)
        assert np.trapezoid(est.density, est.grid) == pytest.approx(1.0, abs=0.02)

    def test_constant_samples(self):
        with pytest.raises(DegenerateSampleError):
            gaussian_kde(np.full(10, 3.0), np.array([0.0]))

    def test_too_few(self):
        with pytest.raises(DomainError):
            gaussian_kde(np.array([1.0]), np.array([0.0]))

    def test_density_estimate_validation(self):
        with pytest.raises(DomainError):
            DensityEstimate(grid=np.array([1.0, 0.5]), density=np.array([0.1, 0.1]), bandwidth=1.0)
        with pytest.raises(DomainError):
            DensityEstimate(grid=np.array([0.0, 1.0]), density=np.array([-0.1, 0.1]), bandwidth=1.0)


class TestRandomStream:
    def test_identical_keys_identical_draws(self):
        a = RandomStream(123, 5).generator().standard_normal(32)
        b = RandomStream(123, 5).generator().standard_normal(32)
        assert np.array_equal(a, b)

    def test_generator_restarts(self):
        s = RandomStream(9, 2)
        assert np.array_equal(s.generator().standard_normal(8), s.generator().standard_normal(8))

    def test_distinct_trials_differ(self):
        a = RandomStream(123, 0).generator().standard_normal(32)
        b = RandomStream(123, 1).generator().standard_normal(32)
        assert not np.array_equal(a, b)

    def test_child(self):
        s = RandomStream(11)
        assert s.child(4) == RandomStream(11, 4)

    @pytest.mark.parametrize("bad", [-1, 2**64, 1.5])
    def test_validation(self, bad):
        with pytest.raises(DomainError):
            RandomStream(bad, 0)

    def test_cross_trial_independence_smoke(self):
        # correlations across trial indices should look like noise
        draws = np.stack(
            [RandomStream(5, t).generator().standard_normal(2000) for t in range(8)]
        )
        corr = np.corrcoef(draws)
        off = corr[~np.eye(8, dtype=bool)]
        assert np.max(np.abs(off)) < 0.1
