import math

import numpy as np
import pytest

from domfeat import (DomainError, Euclidean, MaternParams, NumericError,
                     build_cov, fit_ml, gaussian_loglik, simulate_gp,
                     wald_intervals)
from domfeat.estimation import MLFit


def dense_loglik_oracle(y, mean, entries):
    """Brute-force density via explicit inverse and determinant."""
    n = len(y)
    r = y - mean
    inv = np.linalg.inv(entries)
    _, logdet = np.linalg.slogdet(entries)
    return -0.5 * n * math.log(2 * math.pi) - 0.5 * logdet - 0.5 * r @ inv @ r


class TestGaussianLoglik:
    def test_standard_normal_scalar(self):
        assert gaussian_loglik(np.zeros(1), np.zeros(1), np.array([[1.0]])) \
            == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-12)

    def test_iid_bivariate(self):
        ll = gaussian_loglik(np.ones(2), np.zeros(2), np.eye(2))
        assert ll == pytest.approx(-math.log(2 * math.pi) - 1.0, rel=1e-12)

    def test_matches_dense_oracle(self, rng):
        locs = rng.uniform(size=(5, 2))
        p = MaternParams(rho=0.4, sigma2=1.5, nu=1.0, nugget=0.2)
        cov = build_cov(locs, p, include_nugget=True)
        y = rng.normal(size=5)
        mean = rng.normal(size=5) * 0.1
        assert gaussian_loglik(y, mean, cov) \
            == pytest.approx(dense_loglik_oracle(y, mean, cov.entries), abs=1e-8)

    def test_reordering_invariance(self, rng):
        locs = rng.uniform(size=(15, 2))
        p = MaternParams(0.3, 1.0, 1.0, 0.1)
        y = rng.normal(size=15)
        perm = rng.permutation(15)
        ll1 = gaussian_loglik(y, np.zeros(15), build_cov(locs, p, include_nugget=True))
        ll2 = gaussian_loglik(y[perm], np.zeros(15),
                              build_cov(locs[perm], p, include_nugget=True))
        assert ll1 == pytest.approx(ll2, rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            gaussian_loglik(np.zeros(3), np.zeros(2), np.eye(3))


class TestFitML:
    def test_fix_all_is_noop(self, rng):
        locs = rng.uniform(size=(20, 2))
        init = MaternParams(0.3, 1.0, 1.0, 0.2)
        y = rng.normal(size=20)
        fit = fit_ml(y, locs, init=init, fix={"rho", "sigma2", "nu", "nugget"})
        assert fit.params == init
        cov = build_cov(locs, init, include_nugget=True)
        assert fit.loglik == pytest.approx(gaussian_loglik(y, np.zeros(20), cov))
        assert fit.converged

    def test_white_noise_attributed_to_nugget(self, rng):
        locs = rng.uniform(size=(150, 2))
        y = rng.normal(size=150)
        fit = fit_ml(y, locs, init=MaternParams(0.3, 0.5, 1.0, 0.5), fix={"nu"})
        assert fit.params.sigma2 <= 0.05 * fit.params.nugget

    def test_scale_equivariance(self, rng):
        locs = rng.uniform(size=(100, 2))
        y = simulate_gp(locs, MaternParams(0.25, 1.0, 1.0, 0.1), seed=4)
        init = MaternParams(0.3, 0.5, 1.0, 0.3)
        f1 = fit_ml(y, locs, init=init, fix={"nu"})
        c = 3.0
        f2 = fit_ml(c * y, locs, init=init.replace(sigma2=init.sigma2 * c ** 2,
                                                   nugget=init.nugget * c ** 2),
                    fix={"nu"})
        assert f2.params.sigma2 == pytest.approx(c ** 2 * f1.params.sigma2, rel=1e-3)
        assert f2.params.nugget == pytest.approx(c ** 2 * f1.params.nugget, rel=1e-3)
        assert f2.params.rho == pytest.approx(f1.params.rho, rel=1e-3)

    def test_gradient_small_at_optimum(self, rng):
        locs = rng.uniform(size=(80, 2))
        y = simulate_gp(locs, MaternParams(0.3, 1.0, 1.0, 0.1), seed=9)
        fit = fit_ml(y, locs, init=MaternParams(0.2, 0.5, 1.0, 0.5), fix={"nu"})
        assert fit.converged
        # central numerical gradient over free log-parameters
        free = fit.free_names
        theta = np.log([getattr(fit.params, n) for n in free])

        def ll(t):
            kw = dict(zip(free, np.exp(t)))
            cov = build_cov(locs, fit.params.replace(**kw), include_nugget=True)
            return gaussian_loglik(y, np.zeros_like(y), cov)

        h = 1e-5
        grad = []
        for i in range(len(free)):
            e = np.zeros(len(free))
            e[i] = h
            grad.append((ll(theta + e) - ll(theta - e)) / (2 * h))
        assert np.max(np.abs(grad)) < 1e-3


class TestWaldIntervals:
    def _fit(self, hessian, free):
        return MLFit(params=MaternParams(1.0, 1.0, 1.0, 1.0), loglik=0.0,
                     hessian=hessian, free_names=free, wald={}, converged=True,
                     iterations=1)

    def test_unit_stderr_interval(self):
        fit = self._fit(-np.eye(1), ("rho",))
        lo, hi = wald_intervals(fit, 0.95)["rho"]
        assert lo == pytest.approx(math.exp(-1.959964), rel=1e-6)
        assert hi == pytest.approx(math.exp(1.959964), rel=1e-6)

    def test_degenerate_stderr_limit(self):
        fit = self._fit(-np.eye(1) * 1e18, ("rho",))
        lo, hi = wald_intervals(fit, 0.95)["rho"]
        assert lo == pytest.approx(1.0, abs=1e-6)
        assert hi == pytest.approx(1.0, abs=1e-6)

    def test_fixed_parameters_degenerate(self):
        fit = self._fit(-np.eye(1), ("rho",))
        iv = wald_intervals(fit, 0.95)
        assert iv["sigma2"] == (1.0, 1.0)
        assert iv["nu"] == (1.0, 1.0)

    def test_indefinite_hessian_rejected(self):
        fit = self._fit(np.eye(1), ("rho",))
        with pytest.raises(NumericError, match="negative definite"):
            wald_intervals(fit, 0.95)

    def test_symmetric_on_log_scale(self):
        fit = self._fit(-np.diag([4.0]), ("sigma2",))
        lo, hi = wald_intervals(fit, 0.95)["sigma2"]
        # log-scale midpoint is the estimate
        assert math.sqrt(lo * hi) == pytest.approx(1.0, rel=1e-10)
