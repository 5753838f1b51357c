import math

import numpy as np
import pytest

from metakel.features import atlas_legendre_1d, atlas_legendre_2d
from metakel.gp import (
    History,
    confidence_band,
    effective_c1,
    empirical_info_gain,
    info_gain_bound,
    mean_var,
    mean_var_primal,
    nu_oracle,
    nu_t,
    posterior,
    sigma_bar_sq,
    split_delta,
)
from metakel.metakernel import MetaKernel, TheoryParams, epsilon_nm, k_full


def random_kernel(rng, p=10, normalization="unit", sparse=True):
    atlas = atlas_legendre_1d(p, normalization)
    eta = rng.uniform(size=p) * ((rng.random(p) < 0.6) if sparse else 1)
    if not eta.any():
        eta[0] = 1.0
    return MetaKernel(atlas, eta / eta.sum())


def random_history(rng, t, dim=1):
    return History(rng.uniform(-1, 1, (t, dim)), rng.standard_normal(t))


class TestPosterior:
    def test_prior(self):
        mk = k_full(atlas_legendre_1d(6))
        post = posterior(mk, History.empty(1))
        X = np.linspace(-1, 1, 11)
        mean, var = mean_var(post, X)
        np.testing.assert_array_equal(mean, 0.0)
        np.testing.assert_allclose(var, mk.diag(X))
        assert post.sigma_bar_sq == 3.0

    def test_single_observation(self):
        mk = random_kernel(np.random.default_rng(0))
        x0, y0 = 0.37, 1.8
        post = posterior(mk, History([[x0]], [y0]))
        k00 = mk.matrix(x0)[0, 0]
        s2 = sigma_bar_sq(2)
        mean, var = mean_var(post, [[x0]])
        assert mean[0] == pytest.approx(k00 * y0 / (k00 + s2), rel=1e-12)
        assert var[0] == pytest.approx(k00 - k00**2 / (k00 + s2), rel=1e-12)

    def test_history_length_checked(self):
        mk = random_kernel(np.random.default_rng(1))
        with pytest.raises(ValueError):
            posterior(mk, random_history(np.random.default_rng(2), 3), t=3)

    def test_variance_reduction(self):
        rng = np.random.default_rng(3)
        mk = random_kernel(rng)
        post = posterior(mk, random_history(rng, 12))
        X = rng.uniform(-1, 1, (100, 1))
        _, var = mean_var(post, X)
        assert np.all(var <= mk.diag(X) + 1e-12)
        assert np.all(var >= 0)

    def test_primal_dual_agreement(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            p = int(rng.integers(1, 26))
            mk = random_kernel(rng, p=p, normalization=rng.choice(["unit", "orthonormal"]))
            t = int(rng.integers(0, 31))
            post = posterior(mk, random_history(rng, t))
            X = rng.uniform(-1, 1, (40, 1))
            m1, v1 = mean_var(post, X)
            m2, v2 = mean_var_primal(post, X)
            np.testing.assert_allclose(m1, m2, atol=1e-8)
            np.testing.assert_allclose(v1, v2, atol=1e-8)

    def test_primal_dual_2d(self):
        rng = np.random.default_rng(5)
        atlas = atlas_legendre_2d(5)
        mk = MetaKernel(atlas, rng.uniform(size=atlas.p))
        post = posterior(mk, random_history(rng, 15, dim=2))
        X = rng.uniform(-1, 1, (30, 2))
        for a, b in zip(mean_var(post, X), mean_var_primal(post, X)):
            np.testing.assert_allclose(a, b, atol=1e-8)

    def test_duplicate_observation_never_increases_variance(self):
        rng = np.random.default_rng(6)
        mk = random_kernel(rng)
        hist = random_history(rng, 8)
        X = rng.uniform(-1, 1, (100, 1))
        # fixed noise, so extension is the only change
        _, before = mean_var(posterior(mk, hist, noise_var=1.5), X)
        longer = hist.append(hist.X[3], hist.y[3])
        _, after = mean_var(posterior(mk, longer, noise_var=1.5), X)
        assert np.all(after <= before + 1e-12)

    def test_extension_with_schedule(self):
        rng = np.random.default_rng(7)
        mk = random_kernel(rng)
        hist = History.empty(1)
        X = rng.uniform(-1, 1, (100, 1))
        _, prev = mean_var(posterior(mk, hist), X)
        for _ in range(20):
            hist = hist.append(rng.uniform(-1, 1), rng.standard_normal())
            _, var = mean_var(posterior(mk, hist), X)
            # the noise parameter shrinks with t too, which only helps
            assert np.all(var <= prev + 1e-12)
            prev = var

    def test_exchangeable(self):
        rng = np.random.default_rng(8)
        mk = random_kernel(rng)
        hist = random_history(rng, 10)
        perm = rng.permutation(10)
        shuffled = History(hist.X[perm], hist.y[perm])
        X = rng.uniform(-1, 1, (50, 1))
        for a, b in zip(mean_var(posterior(mk, hist), X), mean_var(posterior(mk, shuffled), X)):
            np.testing.assert_allclose(a, b, atol=1e-10)

    def test_history_validation(self):
        with pytest.raises(ValueError):
            History(np.zeros((3, 1)), np.zeros(2))
        mk = random_kernel(np.random.default_rng(0))
        with pytest.raises(ValueError):
            posterior(mk, History([[2.0]], [0.0]))


class TestBand:
    def test_zero_width(self):
        rng = np.random.default_rng(9)
        post = posterior(random_kernel(rng), random_history(rng, 4))
        X = np.linspace(-1, 1, 7)
        band = confidence_band(post, 0.0, X)
        np.testing.assert_array_equal(band.lower, band.upper)
        assert band.contains(band.mean).all()

    def test_linear_in_nu(self):
        rng = np.random.default_rng(10)
        post = posterior(random_kernel(rng), random_history(rng, 4))
        X = np.linspace(-1, 1, 7)
        a, b = confidence_band(post, 1.0, X), confidence_band(post, 2.5, X)
        np.testing.assert_allclose(b.halfwidth, 2.5 * a.halfwidth)
        assert np.all(a.halfwidth >= 0)

    def test_negative_nu(self):
        post = posterior(random_kernel(np.random.default_rng(0)), History.empty(1))
        with pytest.raises(ValueError):
            confidence_band(post, -1.0, [0.0])


class TestExploration:
    theory = TheoryParams(sigma=0.01, delta=0.1, B=10.0, s=5, kappa=0.1)

    def test_noiseless_is_B(self):
        mk = random_kernel(np.random.default_rng(0))
        theory = TheoryParams(sigma=0.0, delta=0.1, B=10.0, s=5, kappa=0.1)
        assert nu_t(theory, mk, 10, 50, 50, 20, 1) == 10.0

    def test_monotone_in_t(self):
        mk = random_kernel(np.random.default_rng(1))
        values = [nu_t(self.theory, mk, t, 50, 50, 10, 1) for t in range(1, 1001)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_oracle_form(self):
        B, sigma, d, delta = 10.0, 0.3, 6, 0.05
        for t in (1, 7, 100):
            s2 = 1 + 2 / t
            expected = B + sigma * math.sqrt(d * math.log(1 + t / s2) + 2 + 2 * math.log(1 / delta))
            assert nu_oracle(B, sigma, d, t, delta) == pytest.approx(expected, rel=1e-14)

    def test_meta_form(self):
        mk = random_kernel(np.random.default_rng(2))
        s, kappa, m, n, p = 5, 0.1, 50, 50, 10
        d_meta, d_bandit = split_delta(0.1)
        assert d_meta + d_bandit == pytest.approx(0.1)
        eps = epsilon_nm(0.01, s, kappa, m, n, p, 1, d_meta)
        expected = nu_oracle(10.0 * (1 + eps / (2 * mk.c1)), 0.01, mk.d_hat, 20, d_bandit, effective_c1(mk))
        assert nu_t(self.theory, mk, 20, m, n, p, 1) == expected

    def test_effective_c1(self):
        atlas = atlas_legendre_1d(4, "orthonormal")
        mk = MetaKernel(atlas, [0.1, 0.0, 0.2, 0.0])
        # sup of eta_j k_j is 0.2 * 7/2 at degree 3
        assert effective_c1(mk) == pytest.approx(1 / 0.7)
        assert effective_c1(MetaKernel(atlas_legendre_1d(3), [0.5, 0.25, 0.25])) == pytest.approx(2.0)


class TestInfoGain:
    def test_examples(self):
        assert info_gain_bound(6, 0, 1.0, 1.02) == 0.0
        assert info_gain_bound(6, 100, 1.0, 1.02) == pytest.approx(3 * math.log(1 + 100 / 1.02), rel=1e-14)
        assert info_gain_bound(6, 100, 1.0, 1.02) == pytest.approx(13.78, abs=1e-2)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            info_gain_bound(6, 10, 0.0, 1.0)

    def test_empirical_below_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            mk = random_kernel(rng, p=int(rng.integers(1, 15)), normalization=rng.choice(["unit", "orthonormal"]))
            t = int(rng.integers(1, 60))
            X = rng.uniform(-1, 1, (t, 1))
            s2 = float(rng.uniform(1, 3))
            gain = empirical_info_gain(mk, X, s2)
            assert gain <= info_gain_bound(mk.d_hat, t, effective_c1(mk), s2) + 1e-9

    def test_single_point(self):
        mk = random_kernel(np.random.default_rng(12))
        k = mk.matrix(0.4)[0, 0]
        assert empirical_info_gain(mk, [[0.4]], 2.0) == pytest.approx(0.5 * math.log1p(k / 2.0))
