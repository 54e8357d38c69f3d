import math

import numpy as np
import pytest

from domfeat import (BlockSplit, DomainError, Euclidean, MaternParams,
                     block_split, crps_gaussian, rmse, run_cv, simulate_gp)


def crps_mc_oracle(mu, sd, y, n=1_000_000, seed=0):
    """Monte Carlo CRPS: E|X - y| - 0.5 E|X - X'| for X, X' ~ N(mu, sd)."""
    r = np.random.default_rng(seed)
    x = r.normal(mu, sd, size=n)
    x2 = r.normal(mu, sd, size=n)
    return float(np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x - x2)))


class TestBlockSplit:
    def test_uniform_grid_counts(self):
        g = np.arange(40) + 0.5
        locs = np.array([(x, y) for x in g for y in g], dtype=float)
        split = block_split(locs, block_size=8.0, k=5, seed=1)
        n = locs.shape[0]
        per_block = (8 * 8)
        for f in range(5):
            train = int(np.sum(split.assignments != f))
            assert abs(train - 0.8 * n) <= per_block

    def test_block_atomicity(self, rng):
        locs = rng.uniform(0, 10, size=(300, 2))
        split = block_split(locs, block_size=2.0, k=4, seed=3)
        ij = np.floor((locs - locs.min(axis=0)) / 2.0).astype(int)
        for key in set(map(tuple, ij)):
            mask = np.all(ij == key, axis=1)
            assert np.unique(split.assignments[mask]).size == 1

    def test_two_folds_near_equal(self, rng):
        locs = rng.uniform(0, 10, size=(400, 2))
        split = block_split(locs, block_size=1.0, k=2, seed=5)
        counts = np.bincount(split.assignments, minlength=2)
        assert abs(counts[0] - counts[1]) < 0.2 * 400

    def test_every_location_assigned_once(self, rng):
        locs = rng.uniform(0, 5, size=(100, 2))
        split = block_split(locs, block_size=1.0, k=3, seed=0)
        assert split.assignments.shape == (100,)
        assert np.all((split.assignments >= 0) & (split.assignments < 3))

    def test_oversized_block_rejected(self, rng):
        locs = rng.uniform(0, 1, size=(50, 2))
        with pytest.raises(DomainError):
            block_split(locs, block_size=10.0, k=2, seed=0)

    def test_deterministic_given_seed(self, rng):
        locs = rng.uniform(0, 10, size=(200, 2))
        a = block_split(locs, 2.0, 5, seed=7).assignments
        b = block_split(locs, 2.0, 5, seed=7).assignments
        assert np.array_equal(a, b)


class TestRMSE:
    def test_examples(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert rmse([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
        assert rmse([3.0, 4.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]) == pytest.approx(2.5)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            rmse([1.0], [1.0, 2.0])

    def test_permutation_invariance(self, rng):
        pred, truth = rng.normal(size=(2, 30))
        perm = rng.permutation(30)
        assert rmse(pred, truth) == pytest.approx(rmse(pred[perm], truth[perm]))


class TestCRPS:
    def test_degenerate_sd_is_absolute_error(self):
        assert crps_gaussian(1.0, 0.0, 3.0) == pytest.approx(2.0)

    def test_centered_value(self):
        from scipy.stats import norm
        expected = 2 * norm.pdf(0) - 1 / math.sqrt(math.pi)
        assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(expected, rel=1e-12)
        assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(0.233694, abs=1e-6)

    def test_one_sigma_off(self):
        assert crps_gaussian(0.0, 1.0, 1.0) == pytest.approx(0.602440, abs=1e-5)

    @pytest.mark.parametrize("mu,sd,y", [(0, 1, 0.5), (2, 0.3, 1.0), (-1, 2.0, 3.0)])
    def test_against_monte_carlo_oracle(self, mu, sd, y):
        assert crps_gaussian(mu, sd, y) == pytest.approx(
            crps_mc_oracle(mu, sd, y), abs=3e-3)

    def test_negative_sd_rejected(self):
        with pytest.raises(DomainError):
            crps_gaussian(0.0, -1.0, 0.0)

    def test_proper_at_desk_scale(self, rng):
        # for y ~ N(0,1), average CRPS is minimized at (mu, sd) = (0, 1)
        ys = rng.normal(size=4000)
        grid = [(mu, sd) for mu in (-0.5, 0.0, 0.5) for sd in (0.5, 1.0, 2.0)]
        scores = {g: float(np.mean(crps_gaussian(g[0], g[1], ys))) for g in grid}
        assert min(scores, key=scores.get) == (0.0, 1.0)


class TestRunCV:
    def _synthetic(self, seed=0, n=220):
        r = np.random.default_rng(seed)
        locs = r.uniform(0, 1, size=(n, 2))
        y = simulate_gp(locs, MaternParams(0.4, 1.0, 1.0, 0.02), seed=seed)
        return locs, y

    def test_noiseless_trend_generalizes(self):
        # a pure linear trend with matching predictors should be predicted
        # essentially exactly on the held-out blocks (the train/test RMSEs
        # are both optimizer noise here, so their ratio is not meaningful)
        r = np.random.default_rng(3)
        n = 140
        locs = r.uniform(0, 1, size=(n, 2))
        y = 0.5 + 2.0 * locs[:, 0] - 1.0 * locs[:, 1]
        preds = np.column_stack([np.ones(n), locs[:, 0], locs[:, 1]])
        split = block_split(locs, block_size=0.34, k=3, seed=1)
        report = run_cv(locs, y, split, B=15, seed=2,
                        predictor_names=("intercept", "x", "y"), predictors=preds,
                        fix_noise={"nu": 1.0}, fix_detail={"nu": 1.0})
        ok = [f for f in report.folds if not f.failed]
        assert len(ok) == 3
        test_rmse = float(np.mean([f.rmse for f in ok]))
        assert test_rmse < 1e-3 * float(np.std(y))

    def test_scale_stability_reported_in_value_sd_format(self):
        locs, y = self._synthetic(seed=3)
        split = block_split(locs, block_size=0.25, k=3, seed=4)
        report = run_cv(locs, y, split, B=20, seed=5,
                        fix_noise={"nu": 1.0}, fix_detail={"nu": 1.0})
        s = report.scale_summary()
        assert "(" in s and s.endswith(")")
        mean, sd = report.scale_stability
        if not math.isnan(mean):
            assert sd >= 0.0

    def test_degenerate_identical_folds_identical_scores(self):
        locs, y = self._synthetic(seed=7, n=120)
        # every fold holds out the same points: k identical problems
        assignments = np.zeros(120, dtype=int)
        assignments[:30] = 1
        split = BlockSplit(block_size=0.25,
                           assignments=np.where(assignments == 1, 0, 1), k=2)
        # same split twice must give byte-identical fold scores given the seed
        r1 = run_cv(locs, y, split, B=15, seed=11,
                    fix_noise={"nu": 1.0}, fix_detail={"nu": 1.0})
        r2 = run_cv(locs, y, split, B=15, seed=11,
                    fix_noise={"nu": 1.0}, fix_detail={"nu": 1.0})
        assert r1.rmse == r2.rmse
        assert r1.crps == r2.crps

    def test_failed_fold_recorded_not_raised(self):
        locs, y = self._synthetic(seed=9, n=60)
        # fold 0 holds nearly everything out: training too small, must be flagged
        assignments = np.zeros(60, dtype=int)
        assignments[:5] = 1
        split = BlockSplit(block_size=0.5, assignments=assignments, k=2)
        report = run_cv(locs, y, split, B=10, seed=1,
                        fix_noise={"nu": 1.0}, fix_detail={"nu": 1.0})
        assert any(f.failed for f in report.folds)

    def test_header_mentions_scale_selection_bias(self):
        locs, y = self._synthetic(seed=1, n=120)
        assignments = (np.arange(120) // 60).astype(int)
        split = BlockSplit(block_size=0.5, assignments=assignments, k=2)
        report = run_cv(locs, y, split, B=10, seed=1,
                        fix_noise={"nu": 1.0}, fix_detail={"nu": 1.0})
        assert "scale selection" in report.header
