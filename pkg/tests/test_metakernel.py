import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metakel.features import atlas_legendre_1d
from metakel.glasso import GroupLassoProblem, MetaDataset
from metakel.metakernel import (
    MetaKernel,
    TheoryParams,
    epsilon_nm,
    eta_from_beta,
    eta_trick_penalty,
    fit_meta_kernel,
    k_full,
    kappa_population,
    kappa_proxy,
    kernel_eval,
    lambda_min_bound,
    resolve_c1,
    rkhs_norm_bound,
    sparsity_bound,
)
from metakel.synth import generate_meta_data, sample_meta_tasks, sample_true_kernel

from oracles import eta_numeric


def default_instance(seed, m=50, n=50, sigma=0.01):
    atlas = atlas_legendre_1d(20, "orthonormal")
    spec = sample_true_kernel(atlas, 5, np.random.SeedSequence([seed, 0]))
    tasks = sample_meta_tasks(spec, m, 10.0, np.random.SeedSequence([seed, 1]))
    data = generate_meta_data(spec, tasks, n, sigma, np.random.SeedSequence([seed, 2]))
    return atlas, spec, data


class TestBounds:
    def test_lambda_floor_example(self):
        assert lambda_min_bound(0.01, 50, 50, 20, 1, 0.1) == pytest.approx(0.0011, abs=5e-5)

    def test_noiseless(self):
        assert lambda_min_bound(0.0, 50, 50, 20, 1, 0.1) == 0.0
        assert epsilon_nm(0.0, 5, 0.3, 50, 50, 20, 1, 0.1) == 0.0

    def test_quadrupling_n_halves(self):
        a = lambda_min_bound(0.01, 10, 50, 20, 1, 0.1)
        b = lambda_min_bound(0.01, 10, 200, 20, 1, 0.1)
        assert b == pytest.approx(a / 2, rel=1e-12)

    def test_bad_delta(self):
        for delta in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                lambda_min_bound(0.01, 5, 5, 3, 1, delta)

    def test_epsilon_ratio(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            sigma, kappa = rng.uniform(0.001, 1), rng.uniform(0.05, 2)
            s, m, n, p, d_max = (int(v) for v in rng.integers(1, 60, size=5))
            delta = rng.uniform(0.01, 0.99)
            ratio = epsilon_nm(sigma, s, kappa, m, n, p, d_max, delta) / lambda_min_bound(sigma, m, n, p, d_max, delta)
            assert ratio == pytest.approx(8 * s / kappa**2, rel=1e-12)

    def test_epsilon_decreasing(self):
        grid = [2, 5, 10, 25, 50, 100]
        for m in grid:
            values = [epsilon_nm(0.01, 5, 0.1, m, n, 20, 1, 0.1) for n in grid]
            assert all(a > b for a, b in zip(values, values[1:]))
        for n in grid:
            values = [epsilon_nm(0.01, 5, 0.1, m, n, 20, 1, 0.1) for m in grid]
            assert all(a > b for a, b in zip(values, values[1:]))

    def test_epsilon_needs_kappa(self):
        with pytest.raises(ValueError):
            epsilon_nm(0.01, 5, 0.0, 5, 5, 3, 1, 0.1)

    def test_sparsity_examples(self):
        assert sparsity_bound(5, 50, 50, 1.0) == pytest.approx(0.128)
        assert sparsity_bound(5, 100, 100, 1.0) == pytest.approx(0.032)
        s, p, kappa = 5, 20, 0.5
        threshold = 64 * s / (p * kappa**2)
        assert sparsity_bound(s, 1, int(threshold) + 1, kappa) < p
        assert sparsity_bound(s, 1, int(threshold), kappa) >= p
        with pytest.raises(ValueError):
            sparsity_bound(5, 5, 5, 0.0)

    def test_rkhs_norm_bound(self):
        assert rkhs_norm_bound(10.0, 0.0, 1.0) == 10.0
        assert rkhs_norm_bound(10.0, 0.1, 1.0) == pytest.approx(10.5409, abs=1e-4)
        for eps in np.linspace(0.01, 0.99, 20):
            assert 10.0 * (1 + eps / 2) <= rkhs_norm_bound(10.0, eps, 1.0)
        with pytest.raises(ValueError):
            rkhs_norm_bound(10.0, 1.0, 1.0)

    def test_theory_params_validation(self):
        TheoryParams(0.0, 0.1, 1.0, 1, 0.5)
        for kwargs in (dict(delta=1.0), dict(sigma=-1.0), dict(B=0.0), dict(s=0), dict(kappa=0.0)):
            base = dict(sigma=0.01, delta=0.1, B=1.0, s=1, kappa=0.5)
            with pytest.raises(ValueError):
                TheoryParams(**{**base, **kwargs})


class TestKernel:
    def test_zero_weights(self):
        atlas = atlas_legendre_1d(5)
        mk = MetaKernel(atlas, np.zeros(5))
        assert kernel_eval(mk, 0.3, -0.7) == 0.0
        assert mk.active_set == () and mk.d_hat == 0

    def test_single_group(self):
        atlas = atlas_legendre_1d(5)
        eta = np.zeros(5)
        eta[2] = 0.4
        mk = MetaKernel(atlas, eta)
        x, x2 = 0.3, -0.7
        expected = 0.4 * atlas.group_features(x, 2)[0] @ atlas.group_features(x2, 2)[0]
        assert kernel_eval(mk, x, x2) == pytest.approx(expected, rel=1e-14)

    def test_symmetric(self):
        atlas = atlas_legendre_1d(8)
        mk = MetaKernel(atlas, np.random.default_rng(1).uniform(size=8))
        pts = np.random.default_rng(2).uniform(-1, 1, (100, 2))
        for a, b in pts:
            assert kernel_eval(mk, a, b) == kernel_eval(mk, b, a)

    def test_domain_violation(self):
        mk = k_full(atlas_legendre_1d(3))
        with pytest.raises(ValueError):
            kernel_eval(mk, 1.5, 0.0)

    def test_rejects_bad_weights(self):
        atlas = atlas_legendre_1d(3)
        with pytest.raises(ValueError):
            MetaKernel(atlas, [0.1, -0.1, 0.0])
        with pytest.raises(ValueError):
            MetaKernel(atlas, [0.1, 0.1])

    def test_k_full(self):
        atlas = atlas_legendre_1d(20)
        mk = k_full(atlas)
        np.testing.assert_allclose(mk.eta, 0.05)
        assert mk.d_hat == atlas.d
        x = np.linspace(-1, 1, 201)
        assert mk.diag(x).max() <= 1 + 1e-12


class TestFit:
    def test_null_lambda(self):
        atlas, _, data = default_instance(0, m=5, n=10)
        problem = GroupLassoProblem.from_data(data, atlas, 1.0)
        mk, _ = fit_meta_kernel(data, atlas, problem.null_lambda() * 1.0001)
        assert mk.active_set == ()
        assert not np.any(mk.eta)

    def test_c1_scaling(self):
        atlas, _, data = default_instance(1)
        a, _ = fit_meta_kernel(data, atlas, 0.03, c1=1.0)
        b, _ = fit_meta_kernel(data, atlas, 0.03, c1=0.5)
        np.testing.assert_allclose(b.eta, 2 * a.eta, rtol=1e-12)
        assert a.active_set == b.active_set and a.d_hat == b.d_hat

    def test_c1_rules(self):
        norms = np.array([0.0, 2.0, 0.5, 1.5])
        assert resolve_c1("max", norms) == 2.0
        assert resolve_c1("min", norms) == 0.5
        assert resolve_c1("sum", norms) == 4.0
        assert resolve_c1("sum", np.zeros(3)) == 1.0
        with pytest.raises(ValueError):
            resolve_c1("median", norms)
        with pytest.raises(ValueError):
            resolve_c1(-1.0, norms)

    def test_sum_rule_normalizes(self):
        atlas, _, data = default_instance(2)
        mk, _ = fit_meta_kernel(data, atlas, 0.03, c1="sum")
        assert mk.eta.sum() == pytest.approx(1.0)

    def test_recovery_at_default_setup(self):
        hits = 0
        for seed in range(10):
            atlas, spec, data = default_instance(seed)
            mk, fit = fit_meta_kernel(data, atlas, 0.03)
            assert fit.converged
            hits += set(spec.J_star) <= set(mk.active_set)
            assert len(mk.active_set) < atlas.p // 2
        assert hits >= 9

    def test_rejects_nonpositive_lambda(self):
        atlas, _, data = default_instance(0, m=2, n=5)
        with pytest.raises(ValueError):
            fit_meta_kernel(data, atlas, 0.0)


class TestEtaTrick:
    def test_closed_form(self):
        beta = np.array([[3.0, 0.0, 1.0], [4.0, 0.0, 1.0]])
        np.testing.assert_allclose(eta_from_beta(beta, [0, 1, 2]), [5.0, 0.0, math.sqrt(2)])

    def test_matches_group_penalty(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            w = rng.uniform(0, 3, size=6) * (rng.random(6) < 0.7)
            lam = rng.uniform(0.01, 2)
            assert eta_trick_penalty(w, w, lam) == pytest.approx(lam * w.sum(), rel=1e-12)

    def test_numeric_minimizer(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            w = float(rng.uniform(0.1, 5))
            lam = float(rng.uniform(0.01, 1))
            value, eta = eta_numeric(w, lam)
            assert value == pytest.approx(lam * w, rel=1e-10)
            assert eta == pytest.approx(w, rel=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 5), min_size=1, max_size=6), st.floats(0.01, 2))
    def test_any_other_eta_is_worse(self, w, lam):
        w = np.array(w)
        other = w * 1.3 + 0.01
        assert eta_trick_penalty(w, other, lam) >= eta_trick_penalty(w, w, lam) - 1e-12


class TestKappa:
    def test_orthonormal_design(self):
        m, n, width = 3, 6, 4
        rng = np.random.default_rng(5)
        design = np.concatenate([np.linalg.qr(rng.standard_normal((n, width)))[0] * math.sqrt(m * n) for _ in range(m)])

        class TableAtlas:
            # inputs are row indices into a fixed design
            dims = np.ones(width, dtype=int)
            d = width

            def features(self, X):
                return design[np.asarray(X, dtype=int).ravel()]

        X = np.arange(m * n, dtype=float).reshape(m, n, 1)
        assert kappa_proxy(MetaDataset(X, np.zeros((m, n))), TableAtlas()) == pytest.approx(1.0)

    def test_underdetermined_is_zero(self):
        atlas = atlas_legendre_1d(10)
        X = np.random.default_rng(6).uniform(-1, 1, (3, 5, 1))
        assert kappa_proxy(MetaDataset(X, np.zeros((3, 5))), atlas) == 0.0

    def test_duplicate_rows_degenerate(self):
        atlas = atlas_legendre_1d(4)
        X = np.tile(np.array([0.1, 0.5]), (2, 4)).reshape(2, 8, 1)
        assert kappa_proxy(MetaDataset(X, np.zeros((2, 8))), atlas) == 0.0

    def test_proxy_lower_bounds_restricted_ratio(self):
        atlas = atlas_legendre_1d(4)
        rng = np.random.default_rng(7)
        data = MetaDataset(rng.uniform(-1, 1, (2, 30, 1)), np.zeros((2, 30)))
        proxy = kappa_proxy(data, atlas)
        assert proxy > 0
        problem = GroupLassoProblem.from_data(data, atlas, 1.0)
        mn = problem.m * problem.n
        # random search over cone vectors for every support of size <= 2
        for size in (1, 2):
            for J in itertools.combinations(range(atlas.p), size):
                for _ in range(50):
                    b = rng.standard_normal((problem.m, problem.d))
                    mask = np.isin(np.arange(problem.d), J)
                    bJ = np.linalg.norm(b[:, mask])
                    out = np.linalg.norm(b[:, ~mask])
                    if out > 3 * bJ:
                        b[:, ~mask] *= 3 * bJ / out
                    ratio = np.linalg.norm(problem.predict(b)) / (math.sqrt(mn) * bJ)
                    assert ratio >= proxy - 1e-12

    def test_population_value(self):
        atlas = atlas_legendre_1d(20, "orthonormal")
        # L2-orthonormal features have second moment I/2 under the uniform law on [-1, 1]
        assert kappa_population(atlas, 50) == pytest.approx(math.sqrt(0.5 / 50), rel=1e-3)
        assert kappa_population(atlas, 50, groups=[]) == 0.0
        with pytest.raises(ValueError):
            kappa_population(atlas, 0)
