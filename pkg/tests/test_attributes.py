import numpy as np
import pytest

from domfeat import (DesignMatrix, DomainError, Euclidean, MaternParams,
                     ScaleSet, decompose_predictors, fit_detail, make_smoother,
                     predict_detail, simulate_gp, smooth)
from domfeat.covariance import matern_cov, pairwise_distances


@pytest.fixture
def setup(rng):
    locs = rng.uniform(size=(40, 2))
    spec = make_smoother(locs, 0.3, 0.5)
    scales = ScaleSet(lambdas=(0.0, 1.0, np.inf))
    return locs, spec, scales


class TestDecomposePredictors:
    def test_telescoping_sum(self, rng, setup):
        locs, spec, scales = setup
        cols = np.column_stack([np.ones(40), rng.normal(size=40), rng.integers(0, 3, 40)])
        designs = decompose_predictors(("intercept", "a", "b"), cols, spec, scales)
        total = sum(d.matrix for d in designs)
        # intercept passes through undecomposed, so compare non-constant columns
        assert np.max(np.abs(total[:, 1:] - cols[:, 1:])) < 1e-8

    def test_intercept_passthrough(self, rng, setup):
        locs, spec, scales = setup
        cols = np.column_stack([np.full(40, 2.0), rng.normal(size=40)])
        designs = decompose_predictors(("intercept", "a"), cols, spec, scales)
        for d in designs:
            assert np.array_equal(d.matrix[:, 0], cols[:, 0])

    def test_binary_column_stays_in_envelope(self, rng, setup):
        locs, spec, scales = setup
        cols = np.column_stack([np.ones(40), rng.integers(0, 2, 40).astype(float)])
        designs = decompose_predictors(("intercept", "flag"), cols, spec, scales)
        for d in designs:
            assert np.all(d.matrix[:, 1] >= -1.0 - 1e-10)
            assert np.all(d.matrix[:, 1] <= 1.0 + 1e-10)

    def test_rank_deficiency_rejected(self, rng, setup):
        locs, spec, scales = setup
        col = rng.normal(size=40)
        cols = np.column_stack([np.ones(40), col, col])
        with pytest.raises(DomainError, match="rank"):
            decompose_predictors(("intercept", "a", "a_copy"), cols, spec, scales)


class TestFitDetail:
    def test_intercept_only_pure_nugget_is_mean(self, rng):
        locs = rng.uniform(size=(30, 2))
        z = rng.normal(size=30) + 1.7
        W = DesignMatrix(names=("intercept",), matrix=np.ones((30, 1)), scale_index=0)
        fit = fit_detail(z, W, locs,
                         fix={"rho": 1.0, "sigma2": 1e-12, "nu": 0.5, "nugget": 1.0})
        assert fit.beta[0] == pytest.approx(float(np.mean(z)), rel=1e-8)

    def test_gls_profile_matches_dense_oracle(self, rng):
        locs = rng.uniform(size=(25, 2))
        W = np.column_stack([np.ones(25), rng.normal(size=25)])
        z = rng.normal(size=25)
        p = MaternParams(0.3, 1.0, 1.0, 0.2)
        dm = DesignMatrix(names=("intercept", "a"), matrix=W, scale_index=0)
        fit = fit_detail(z, dm, locs,
                         fix={"rho": p.rho, "sigma2": p.sigma2, "nu": p.nu,
                              "nugget": p.nugget})
        S = matern_cov(pairwise_distances(locs), p) + p.nugget * np.eye(25)
        Si = np.linalg.inv(S)
        beta_oracle = np.linalg.solve(W.T @ Si @ W, W.T @ Si @ z)
        assert np.max(np.abs(fit.beta - beta_oracle)) < 1e-8

    def test_negligible_variance_column_is_inert(self, rng):
        locs = rng.uniform(size=(35, 2))
        W = np.column_stack([np.ones(35), rng.normal(size=35)])
        # response in the span of W so the extra column has nothing to absorb
        z = W @ np.array([0.3, -0.8])
        fix = {"rho": 0.3, "sigma2": 0.5, "nu": 1.0, "nugget": 0.1}
        f1 = fit_detail(z, DesignMatrix(("intercept", "a"), W, 0), locs, fix=fix)
        W2 = np.column_stack([W, 1e-7 * rng.normal(size=35)])
        f2 = fit_detail(z, DesignMatrix(("intercept", "a", "eps"), W2, 0), locs, fix=fix)
        assert np.max(np.abs(f2.beta[:2] - f1.beta)) < 1e-6

    def test_beta_recovery_with_wald_coverage(self, rng):
        beta_true = np.array([0.5, -1.0])
        hits = np.zeros(2, dtype=int)
        n_seeds = 20
        for seed in range(n_seeds):
            r = np.random.default_rng(seed)
            locs = r.uniform(size=(400, 2))
            W = np.column_stack([np.ones(400), r.normal(size=400)])
            z = W @ beta_true + simulate_gp(locs, MaternParams(0.2, 0.5, 1.0, 0.05),
                                            seed=seed)
            dm = DesignMatrix(("intercept", "a"), W, 0)
            fit = fit_detail(z, dm, locs, fix={"nu": 1.0})
            for j, name in enumerate(("beta_intercept", "beta_a")):
                lo, hi = fit.wald[name]
                hits[j] += int(lo <= beta_true[j] <= hi)
        assert np.all(hits >= 15)

    def test_rank_deficient_design_rejected(self, rng):
        locs = rng.uniform(size=(20, 2))
        with pytest.raises(DomainError, match="rank"):
            DesignMatrix(("a", "b"), np.zeros((20, 2)), 0)


class TestPredictDetail:
    def _fit_fixed(self, z, W, locs, p):
        fix = {"rho": p.rho, "sigma2": p.sigma2, "nu": p.nu, "nugget": p.nugget}
        return fit_detail(z, W, locs, fix=fix)

    def test_interpolates_conditioning_points_without_nugget(self, rng):
        locs = rng.uniform(size=(20, 2))
        p = MaternParams(0.4, 1.0, 1.0, 0.0)
        z = simulate_gp(locs, p, seed=2)
        fit = self._fit_fixed(z, None, locs, p)
        mean, sd = predict_detail(fit, None, locs[:6], z, None, locs)
        assert np.max(np.abs(mean - z[:6])) < 1e-6
        assert np.max(sd) < 1e-4

    def test_zero_correlation_limit_is_regression(self, rng):
        locs = rng.uniform(size=(25, 2))
        W = np.column_stack([np.ones(25), locs[:, 0]])
        beta = np.array([0.4, 1.1])
        z = W @ beta + 0.05 * rng.normal(size=25)
        p = MaternParams(1e-9, 0.7, 0.5, 0.3)
        dm = DesignMatrix(("intercept", "x"), W, 0)
        fit = self._fit_fixed(z, dm, locs, p)
        new = rng.uniform(size=(5, 2)) + 10.0   # far away: no correlation
        W_new = np.column_stack([np.ones(5), new[:, 0]])
        mean, sd = predict_detail(fit, W_new, new, z, dm, locs)
        assert np.max(np.abs(mean - W_new @ fit.beta)) < 1e-8
        assert np.allclose(sd, np.sqrt(0.7 + 0.3), atol=1e-8)

    def test_matches_dense_conditional_gaussian_oracle(self, rng):
        locs = rng.uniform(size=(30, 2))
        p = MaternParams(0.35, 1.2, 1.0, 0.25)
        z = simulate_gp(locs, p.replace(nugget=0.0), seed=8) \
            + np.sqrt(0.25) * rng.normal(size=30)
        fit = self._fit_fixed(z, None, locs, p)
        new = rng.uniform(size=(7, 2))
        mean, sd = predict_detail(fit, None, new, z, None, locs)
        S = matern_cov(pairwise_distances(locs), p) + p.nugget * np.eye(30)
        all_d = pairwise_distances(np.vstack([new, locs]))
        K = matern_cov(all_d[:7, 7:], p)
        Si = np.linalg.inv(S)
        mean_o = K @ Si @ z
        var_o = (p.sigma2 + p.nugget) - np.sum((K @ Si) * K, axis=1)
        assert np.max(np.abs(mean - mean_o)) < 1e-8
        assert np.max(np.abs(sd - np.sqrt(var_o))) < 1e-8

    def test_nonconverged_fit_rejected(self, rng):
        locs = rng.uniform(size=(15, 2))
        p = MaternParams(0.3, 1.0, 1.0, 0.1)
        fit = self._fit_fixed(rng.normal(size=15), None, locs, p)
        fit.converged = False
        with pytest.raises(DomainError):
            predict_detail(fit, None, locs[:2], rng.normal(size=15), None, locs)


def test_covariance_split_diagnostic(rng):
    # fixed-effect variance plus random components roughly reproduce var(z)
    locs = rng.uniform(size=(300, 2))
    W = np.column_stack([np.ones(300), rng.normal(size=300)])
    z = W @ np.array([0.0, 1.0]) + simulate_gp(locs, MaternParams(0.2, 0.5, 1.0, 0.1),
                                               seed=5)
    dm = DesignMatrix(("intercept", "a"), W, 0)
    fit = fit_detail(z, dm, locs, fix={"nu": 1.0})
    total = fit.fixed_effect_variance + fit.spatial.sigma2 + fit.spatial.nugget
    assert total == pytest.approx(float(np.var(z)), rel=0.25)
