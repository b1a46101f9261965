import math

import numpy as np
import pytest

from boxcal.gaussian import (
    marginal_cdf,
    marginal_cdf_columns,
    marginal_nll,
    std_normal_cdf,
    std_normal_quantile,
)
from boxcal.records import GaussianMarginal

from oracles import central_difference, normal_cdf_decimal, quantile_by_bisection


class TestStdNormalCdf:
    def test_symmetry_at_zero(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_symmetry_pair_sums_to_one(self):
        for z in (0.1, 0.7, 1.3, 2.9, 4.4, 7.7):
            assert abs(std_normal_cdf(z) + std_normal_cdf(-z) - 1.0) <= 1e-15

    def test_975_quantile_point(self):
        # Expected value computed with the decimal series oracle.
        expected = float(normal_cdf_decimal(1.959964))
        assert expected == pytest.approx(0.975, abs=1e-6)
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)

    def test_against_decimal_series_oracle(self):
        zs = np.concatenate([
            np.linspace(-9.0, 9.0, 121),
            np.array([-6.5001, -6.4999, 6.4999, 6.5001]),  # branch boundary
            np.array([-0.5067, 1.959964, 2.575829, -3.0902]),
        ])
        got = std_normal_cdf(zs)
        for z, g in zip(zs, got):
            ref = float(normal_cdf_decimal(float(z)))
            assert abs(g - ref) <= 1e-12, f"z={z}"

    def test_monotone_on_grid(self):
        grid = np.linspace(-12.0, 12.0, 4001)
        vals = std_normal_cdf(grid)
        assert (np.diff(vals) >= 0.0).all()
        assert (vals >= 0.0).all() and (vals <= 1.0).all()

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            std_normal_cdf(float("nan"))
        with pytest.raises(ValueError):
            std_normal_cdf(float("inf"))
        with pytest.raises(ValueError):
            std_normal_cdf(np.array([0.0, np.inf]))


class TestStdNormalQuantile:
    def test_median(self):
        assert std_normal_quantile(0.5) == 0.0

    def test_975_point_against_bisection_oracle(self):
        ref = quantile_by_bisection(0.975, std_normal_cdf)
        assert ref == pytest.approx(1.959964, abs=1e-5)
        assert std_normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-5)
        assert std_normal_quantile(0.975) == pytest.approx(ref, abs=1e-9)

    def test_round_trip_random(self):
        rng = np.random.default_rng(20240601)
        p = rng.uniform(1e-6, 1.0 - 1e-6, size=1000)
        back = std_normal_cdf(std_normal_quantile(p))
        assert np.max(np.abs(back - p)) < 1e-9

    def test_round_trip_full_domain(self):
        # Log-spaced into both tails plus a dense central grid.
        tails = np.geomspace(1e-8, 0.02, 400)
        p = np.concatenate([tails, np.linspace(0.02, 0.98, 2000), 1.0 - tails])
        back = std_normal_cdf(std_normal_quantile(p))
        assert np.max(np.abs(back - p)) < 1e-9

    def test_out_of_domain(self):
        for p in (0.0, 1.0, -0.2, 1.3, float("nan")):
            with pytest.raises(ValueError):
                std_normal_quantile(p)


class TestMarginalCdf:
    def test_at_mean(self):
        assert marginal_cdf(GaussianMarginal(3.7, 2.2), 3.7) == 0.5

    def test_unit_marginal_matches_std_normal(self):
        m = GaussianMarginal(0.0, 1.0)
        assert marginal_cdf(m, 1.959964) == pytest.approx(0.975, abs=1e-6)

    def test_variance_inflation_moves_toward_half(self):
        y = 1.3
        narrow = marginal_cdf(GaussianMarginal(0.0, 1.0), y)
        wide = marginal_cdf(GaussianMarginal(0.0, 4.0), y)
        assert abs(wide - 0.5) < abs(narrow - 0.5)

    def test_affine_shift_invariance(self):
        m = GaussianMarginal(0.731, 0.37)
        base = marginal_cdf(m, 1.144)
        for shift in (-5.5, 0.125, 17.0):
            shifted = marginal_cdf(GaussianMarginal(m.mean + shift, m.variance), 1.144 + shift)
            assert shifted == pytest.approx(base, abs=1e-12)

    def test_rejects_invalid_marginal(self):
        with pytest.raises(ValueError):
            marginal_cdf(GaussianMarginal(0.0, 0.0), 1.0)
        with pytest.raises(ValueError):
            marginal_cdf(GaussianMarginal(float("nan"), 1.0), 1.0)

    def test_columns_match_scalar(self):
        rng = np.random.default_rng(3)
        means = rng.normal(size=(40, 6))
        variances = rng.uniform(0.1, 2.0, size=(40, 6))
        values = rng.normal(size=(40, 6))
        bulk = marginal_cdf_columns(means, variances, values)
        for i in (0, 7, 39):
            for j in range(6):
                one = marginal_cdf(GaussianMarginal(means[i, j], variances[i, j]), values[i, j])
                assert bulk[i, j] == pytest.approx(one, abs=1e-15)


class TestMarginalNll:
    def test_at_mean_unit_variance(self):
        got = marginal_nll(GaussianMarginal(0.0, 1.0), 0.0)
        assert got == pytest.approx(0.5 * math.log(2.0 * math.pi), abs=1e-12)
        assert got == pytest.approx(0.918939, abs=1e-6)

    def test_unit_residual(self):
        got = marginal_nll(GaussianMarginal(2.0, 1.0), 3.0)
        assert got == pytest.approx(0.5 + 0.5 * math.log(2.0 * math.pi), abs=1e-12)

    def test_gradient_in_mean_matches_finite_difference(self):
        y, var = 0.9, 0.6
        for mean in (-1.2, 0.0, 2.4):
            analytic = -(y - mean) / var
            fd = central_difference(lambda m: marginal_nll(GaussianMarginal(m, var), y), mean)
            assert fd == pytest.approx(analytic, rel=1e-6)

    def test_rejects_invalid_marginal(self):
        with pytest.raises(ValueError):
            marginal_nll(GaussianMarginal(0.0, -1.0), 0.0)


def test_cdf_quantile_round_trip_under_one_second():
    import time

    tails = np.geomspace(1e-8, 0.02, 2000)
    p = np.concatenate([tails, np.linspace(0.02, 0.98, 16000), 1.0 - tails])
    start = time.perf_counter()
    err = np.max(np.abs(std_normal_cdf(std_normal_quantile(p)) - p))
    elapsed = time.perf_counter() - start
    assert err < 1e-9
    assert elapsed < 1.0
