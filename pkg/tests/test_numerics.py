import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import special

from election.errors import CertificationError
from election.models import DiscreteDist, Theta
from election.numerics import (
    EULER_GAMMA,
    binom_logpmf,
    c_theta,
    cdf_f,
    density_f,
    empirical_dist,
    euler_gamma,
    gap_probability,
    geo0_pmf,
    harmonic_number,
    integrate_density,
    log_binom_ratio,
    log_comb,
    psi_theta,
    sample_geometric,
    split_seeds,
    thinning_pmf,
)


class TestTheta:
    @pytest.mark.parametrize("value", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_rejects_values_outside_open_interval(self, value):
        with pytest.raises(ValueError):
            Theta(value)

    def test_survival(self):
        assert Theta(0.3).survival == pytest.approx(0.7)


class TestConstants:
    def test_c_theta_half(self):
        assert c_theta(0.5) == pytest.approx(1.0 / math.log(2.0), rel=1e-14)

    def test_c_theta_is_one_at_one_minus_inverse_e(self):
        assert c_theta(1.0 - math.exp(-1.0)) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("theta", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    def test_c_theta_is_base_change(self, theta):
        power = (1.0 - theta) ** (c_theta(theta) * math.log(7.0))
        assert power == pytest.approx(1.0 / 7.0, rel=1e-12)

    def test_harmonic_small(self):
        assert harmonic_number(1) == 1.0
        assert harmonic_number(4) == pytest.approx(25.0 / 12.0, rel=1e-15)

    def test_harmonic_rejects_zero(self):
        with pytest.raises(ValueError):
            harmonic_number(0)

    def test_harmonic_minus_log_tends_to_gamma(self):
        n = 10**7
        # прямое суммирование от малых членов к большим
        direct = float(np.sum(1.0 / np.arange(n, 0, -1, dtype=float)))
        assert abs(direct - math.log(n) - euler_gamma()) < 1e-6
        assert harmonic_number(n) == pytest.approx(direct, rel=1e-12)

    def test_harmonic_branches_agree(self):
        n = 10**6
        assert harmonic_number(n) == pytest.approx(float(special.digamma(n + 1.0)) + EULER_GAMMA, rel=1e-13)

    def test_euler_gamma(self):
        assert euler_gamma() == pytest.approx(0.5772156649015329, abs=1e-15)
        assert 0.5 < euler_gamma() < 0.6


class TestDensities:
    def test_density_values(self):
        assert density_f(1, 0.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
        assert density_f(2, 1.0) == pytest.approx(math.exp(-2.0 - math.exp(-1.0)), rel=1e-14)

    def test_density_is_vectorized(self):
        values = density_f(3, np.array([-1.0, 0.0, 1.0]))
        assert values.shape == (3,)
        assert np.all(values > 0)

    @pytest.mark.parametrize("l", range(1, 21))
    def test_density_integrates_to_one(self, l):
        assert abs(integrate_density(l) - 1.0) < 1e-10

    def test_cdf_limits(self):
        assert abs(cdf_f(1, 50.0) - 1.0) < 1e-12
        assert cdf_f(1, -10.0) < 1e-12

    def test_cdf_of_gumbel_at_zero(self):
        assert cdf_f(1, 0.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
        assert integrate_density(1, -40.0, 0.0) == pytest.approx(math.exp(-1.0), abs=1e-10)

    @pytest.mark.parametrize("l", range(1, 11))
    def test_cdf_matches_quadrature(self, l):
        for x in (-2.0, 0.0, 1.5, 4.0):
            assert abs(cdf_f(l, x) - integrate_density(l, -40.0, x)) < 1e-10

    def test_cdf_is_nondecreasing(self):
        grid = np.linspace(-5, 10, 301)
        assert np.all(np.diff(cdf_f(3, grid)) >= 0.0)


class TestGeometricLaws:
    def test_geo0_values(self):
        assert geo0_pmf(0.5, 0) == 0.5
        assert geo0_pmf(0.5, 2) == pytest.approx(0.125, rel=1e-15)

    def test_geo0_sums_to_one(self):
        assert abs(math.fsum(geo0_pmf(0.3, i) for i in range(201)) - 1.0) < 1e-12

    def test_geo0_rejects_bad_parameter(self):
        with pytest.raises(ValueError):
            geo0_pmf(1.0, 0)

    @pytest.mark.parametrize("theta", [0.1, 0.5, 0.9])
    def test_psi_fixes_endpoints(self, theta):
        assert psi_theta(theta, 0.0) == 0.0
        assert psi_theta(theta, 1.0) == pytest.approx(1.0, rel=1e-15)

    def test_psi_value(self):
        assert psi_theta(0.5, 0.5) == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_psi_is_increasing(self):
        grid = np.linspace(0.0, 1.0, 101)
        values = [psi_theta(0.4, z) for z in grid]
        assert all(a < b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
    def test_psi_inverts_thinning_parameter(self, eta):
        theta = 0.4
        zeta = eta / (1.0 - theta + eta * theta)
        assert abs(psi_theta(theta, zeta) - eta) < 1e-14

    def test_sample_geometric_support_and_mean(self):
        rng = np.random.default_rng(3)
        draws = sample_geometric(rng, 0.25, 200_000)
        assert draws.min() >= 1
        se = math.sqrt(0.75 / 0.25**2 / draws.size)
        assert abs(draws.mean() - 4.0) < 5 * se


class TestThinning:
    def test_values(self):
        assert thinning_pmf(2, 0, 0.5) == pytest.approx(0.25, rel=1e-15)
        assert thinning_pmf(0, 0, 0.3) == 1.0
        assert thinning_pmf(3, 4, 0.3) == 0.0

    @pytest.mark.parametrize("theta", [0.2, 0.5, 0.8])
    def test_rows_sum_to_one(self, theta):
        for i in range(51):
            row = thinning_pmf(i, np.arange(i + 1), theta)
            assert abs(math.fsum(row) - 1.0) < 1e-12

    def test_binom_logpmf_handles_huge_population(self):
        n = 1e13
        p = 3.0 / n
        value = math.exp(binom_logpmf(2, n, p))
        assert value == pytest.approx(4.5 * math.exp(-3.0), rel=1e-9)

    def test_log_comb_branches(self):
        assert log_comb(10, 3) == pytest.approx(math.log(120.0), rel=1e-14)
        assert log_comb(200, 100) == pytest.approx(math.log(math.comb(200, 100)), rel=1e-13)
        assert log_comb(5, 7) == -math.inf


class TestBinomRatio:
    def test_example(self):
        assert log_binom_ratio(10, 2, 2, 0) == pytest.approx(28.0 / 45.0, rel=1e-14)

    def test_exhaustive_small_cases(self):
        for n in range(0, 26):
            for m in range(0, n + 1):
                for l in range(0, n + 1):
                    for k in range(0, l + 1):
                        if l - k <= n - m:
                            exact = Fraction(math.comb(n - m, l - k), math.comb(n, l))
                        else:
                            exact = Fraction(0)
                        value = log_binom_ratio(n, m, l, k)
                        if exact == 0:
                            assert value == 0.0
                        else:
                            assert value == pytest.approx(float(exact), rel=1e-12)

    def test_spot_case_n_60(self):
        exact = Fraction(math.comb(55, 27), math.comb(60, 30))
        assert log_binom_ratio(60, 5, 30, 3) == pytest.approx(float(exact), rel=1e-12)

    def test_limit_without_matches(self):
        assert log_binom_ratio(10**6, 2, 5 * 10**5, 0) == pytest.approx(0.25, abs=1e-4)

    def test_limit_with_matches(self):
        # предел α^k (1-α)^{m-k}
        assert log_binom_ratio(10**6, 3, 5 * 10**5, 2) == pytest.approx(0.125, abs=1e-4)

    def test_error_decreases_with_n(self):
        alpha, m, k = 0.3, 4, 1
        limit = alpha**k * (1 - alpha) ** (m - k)
        errors = []
        for n in (10**3, 10**4, 10**5, 10**6):
            l_n = int(math.floor(alpha * n + 0.5))
            errors.append(abs(log_binom_ratio(n, m, l_n, k) - limit))
        assert all(a > b for a, b in zip(errors, errors[1:]))


class TestGapProbability:
    def test_matches_closed_form(self):
        value = gap_probability(1, 1.0, 0.0)
        assert value == pytest.approx(float(special.exp1(1.0)), abs=1e-10)

    def test_reports_unmet_tolerance(self):
        with pytest.raises(CertificationError):
            gap_probability(1, 1.0, 0.0, tol=1e-30)


class TestDiscreteDist:
    def test_rejects_mass_that_does_not_sum_to_one(self):
        with pytest.raises(ValueError):
            DiscreteDist(support=[1, 2], mass=[0.5, 0.4])

    def test_tail_counts_towards_normalization(self):
        dist = DiscreteDist(support=[1, 2], mass=[0.5, 0.4], tail_bound=0.1)
        assert dist.total() == pytest.approx(0.9)

    def test_rejects_unsorted_support(self):
        with pytest.raises(ValueError):
            DiscreteDist(support=[2, 1], mass=[0.5, 0.5])

    def test_shift_and_total_variation(self):
        a = DiscreteDist(support=[1, 2], mass=[0.25, 0.75])
        assert a.shift(3).support == [4, 5]
        b = DiscreteDist(support=[2, 3], mass=[0.5, 0.5])
        assert a.total_variation(b) == pytest.approx(0.5)

    def test_empirical_pairs(self):
        dist = empirical_dist(np.array([[1, 2], [1, 2], [3, 1], [1, 1]]))
        assert dist.support == [(1, 1), (1, 2), (3, 1)]
        assert dist.prob((1, 2)) == pytest.approx(0.5)


def test_split_seeds_are_distinct_and_reproducible():
    first = split_seeds(11, 4)
    assert first == split_seeds(11, 4)
    assert len(set(first)) == 4
