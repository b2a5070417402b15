import math
from collections import Counter, defaultdict

import pytest
from scipy import stats

from election.errors import CertificationError, ConfigError, StateError
from election.maxima_boundary import (
    ExtendedKernelY,
    classify_limit_y,
    extended_kernel_y,
    finite_kernel_y,
    h_transform_pmf,
    h_transform_row,
    harmonic_residual,
    is_state,
    kernel_means,
    simulate_conditioned_y,
    state_log_probability,
)
from election.models import MaxState, Theta, YBoundaryPoint
from tests.conftest import pooled_counts, within_se


def _states(max_m, max_i):
    return [
        MaxState(m, i, k)
        for m in range(1, max_m + 1)
        for i in range(1, max_i + 1)
        for k in range(1, m + 1)
        if is_state((m, i, k))
    ]


ORACLE_HORIZON, ORACLE_CAP = 12, 6


def _step_law(law, theta):
    """Один шаг (M, L) по новому значению ξ; пути с максимумом выше ORACLE_CAP отбрасываются"""
    p = {v: theta * (1.0 - theta) ** (v - 1) for v in range(1, ORACLE_CAP + 1)}
    out = defaultdict(float)
    for (i, k), mass in law.items():
        below = 1.0 - (1.0 - theta) ** (i - 1)
        if below > 0.0:
            out[(i, k)] += mass * below
        out[(i, k + 1)] += mass * p[i]
        for v in range(i + 1, ORACLE_CAP + 1):
            out[(v, 1)] += mass * p[v]
    return out


@pytest.fixture(scope="module", params=[0.5, 0.3])
def enumerated_laws(request):
    """
    Точные P(X_n = y) и P(X_n = y | X_m = x) для n <= 12 и максимумов <= 6.
    Максимум не убывает, поэтому отброшенные пути не влияют на эти вероятности.
    """
    theta = request.param
    law = {(v, 1): theta * (1.0 - theta) ** (v - 1) for v in range(1, ORACLE_CAP + 1)}
    single = {}
    marginals = []
    for m in range(1, ORACLE_HORIZON + 1):
        marginals.append(law)
        for (i, k), mass in law.items():
            single[MaxState(m, i, k)] = mass
        law = _step_law(law, theta)

    conditional = {}
    for m in range(1, ORACLE_HORIZON):
        for (i, k) in marginals[m - 1]:
            x = MaxState(m, i, k)
            forward = {(i, k): 1.0}
            for n in range(m + 1, ORACLE_HORIZON + 1):
                forward = _step_law(forward, theta)
                for (j, l), q in forward.items():
                    conditional[(x, MaxState(n, j, l))] = q
    return Theta(theta), single, conditional


class TestStateSpace:
    def test_membership(self):
        assert is_state((3, 1, 3))
        assert not is_state((3, 1, 1))
        assert not is_state((2, 2, 3))
        assert not is_state((0, 1, 0))

    def test_log_probability(self, theta_half):
        assert math.exp(state_log_probability((2, 1, 2), theta_half)) == pytest.approx(0.25)
        assert state_log_probability((5, 1, 4), theta_half) == -math.inf


class TestFiniteKernel:
    def test_single_step_example(self, theta_half):
        assert finite_kernel_y((1, 1, 1), (10, 2, 3), theta_half) == pytest.approx(1.4, rel=1e-13)

    def test_repeated_ones_example(self, theta_half):
        assert finite_kernel_y((2, 1, 2), (5, 1, 5), theta_half) == pytest.approx(4.0, rel=1e-13)

    def test_rejects_impossible_target(self, theta_half):
        with pytest.raises(StateError):
            finite_kernel_y((2, 1, 2), (5, 1, 4), theta_half)

    def test_rejects_past_target(self, theta_half):
        with pytest.raises(ConfigError):
            finite_kernel_y((5, 2, 1), (5, 2, 1), theta_half)

    def test_maxima_do_not_decrease(self, theta_half):
        assert finite_kernel_y((2, 4, 1), (6, 3, 2), theta_half) == 0.0

    def test_matches_exact_laws(self, enumerated_laws):
        theta, single, conditional = enumerated_laws
        checked = 0
        for x in single:
            for y in single:
                if y.m <= x.m:
                    continue
                exact = conditional.get((x, y), 0.0) / single[y]
                value = finite_kernel_y(x, y, theta)
                if exact == 0.0:
                    assert value == 0.0
                else:
                    assert value == pytest.approx(exact, rel=1e-10)
                    checked += 1
        assert checked > 5_000


class TestExtendedKernel:
    def test_infinite_level(self, theta_half):
        b = YBoundaryPoint(J=None, alpha=0.5)
        assert extended_kernel_y((2, 5, 1), b, theta_half) == pytest.approx(0.25)

    def test_zero_above_level(self, theta_half):
        b = YBoundaryPoint(J=2, alpha=0.4)
        assert extended_kernel_y((3, 3, 1), b, theta_half) == 0.0

    def test_at_level(self, theta_half):
        b = YBoundaryPoint(J=2, alpha=0.4)
        assert extended_kernel_y((3, 2, 2), b, theta_half) == pytest.approx(3.072, rel=1e-13)

    def test_level_one_needs_full_multiplicity(self):
        with pytest.raises(ValueError):
            YBoundaryPoint(J=1, alpha=0.5)
        b = YBoundaryPoint(J=1, alpha=1.0)
        assert extended_kernel_y((4, 1, 4), b, Theta(0.5)) == pytest.approx(0.5**-4)

    @pytest.mark.parametrize("J", [2, 3, 5])
    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 1.0])
    def test_finite_kernels_converge(self, J, alpha):
        theta = Theta(0.5)
        kernel = ExtendedKernelY(YBoundaryPoint(J=J, alpha=alpha), theta)
        states = _states(5, J)
        errors = []
        for n in (10**2, 10**3, 10**4, 10**5):
            l_n = max(1, int(math.floor(alpha * n + 0.5)))
            y = (n, J, l_n)
            errors.append(
                max(abs(finite_kernel_y(x, y, theta) - kernel(x)) / max(1.0, kernel(x)) for x in states)
            )
        if alpha == 1.0:
            # вдоль (n, J, n) конечное ядро совпадает с предельным
            assert max(errors) < 1e-12
        else:
            assert all(a > b for a, b in zip(errors, errors[1:]))

    def test_converges_to_example_value(self, theta_half):
        value = finite_kernel_y((3, 2, 2), (10**6, 2, 4 * 10**5), theta_half)
        assert value == pytest.approx(3.072, rel=1e-4)


class TestHarmonicity:
    def test_example(self, theta_half):
        kernel = ExtendedKernelY(YBoundaryPoint(J=2, alpha=0.3), theta_half)
        assert abs(harmonic_residual(kernel, (3, 1, 3), theta_half)) < 1e-12

    @pytest.mark.parametrize("J", [2, 3, 5])
    @pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0])
    def test_finite_levels_are_harmonic(self, J, alpha):
        theta = Theta(0.5)
        kernel = ExtendedKernelY(YBoundaryPoint(J=J, alpha=alpha), theta)
        for x in _states(20, J):
            h = kernel(x)
            if h > 0.0:
                assert abs(harmonic_residual(kernel, x, theta)) <= 1e-10 * h

    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_infinite_level_is_superharmonic(self, alpha, theta_half):
        kernel = ExtendedKernelY(YBoundaryPoint(J=None, alpha=alpha), theta_half)
        for x in _states(8, 6):
            h = kernel(x)
            assert harmonic_residual(kernel, x, theta_half) == pytest.approx(alpha * h, rel=1e-12)
            assert h > 0.0

    def test_infinite_level_without_mass_is_harmonic(self, theta_half):
        kernel = ExtendedKernelY(YBoundaryPoint(J=None, alpha=0.0), theta_half)
        assert abs(harmonic_residual(kernel, (4, 3, 2), theta_half)) < 1e-14

    def test_generic_constant(self):
        theta = Theta(0.3)
        for x in [(1, 1, 1), (3, 2, 2), (5, 4, 1)]:
            assert abs(harmonic_residual(lambda y: 1.0, x, theta)) < 1e-12

    def test_generic_kernel_agrees_with_exact_sum(self, theta_half):
        kernel = ExtendedKernelY(YBoundaryPoint(J=4, alpha=0.6), theta_half)
        x = (3, 2, 1)
        generic = harmonic_residual(lambda y: kernel(y), x, theta_half)
        assert abs(generic) < 1e-12

    def test_uncertifiable_growth(self, theta_half):
        with pytest.raises(CertificationError):
            harmonic_residual(lambda y: 2.0**y.i, (1, 1, 1), theta_half)

    def test_explicit_bound_certifies_tail(self, theta_half):
        # за пределами вычисленных членов h резко растёт
        def h(y):
            return 1.0 if y.i <= 60 else 1e9

        assert abs(harmonic_residual(h, (2, 3, 1), theta_half)) < 1e-12
        assert abs(harmonic_residual(h, (2, 3, 1), theta_half, h_bound=1.0)) < 1e-12
        with pytest.raises(CertificationError):
            harmonic_residual(h, (2, 3, 1), theta_half, h_bound=1e9)

    def test_rejects_state_outside_space(self, theta_half):
        kernel = ExtendedKernelY(YBoundaryPoint(J=2, alpha=0.3), theta_half)
        with pytest.raises(StateError):
            harmonic_residual(kernel, (3, 1, 1), theta_half)


class TestHTransform:
    def test_example_row(self, theta_half):
        b = YBoundaryPoint(J=3, alpha=0.2)
        start = (1, 1, 1)
        assert h_transform_pmf(start, (2, 1, 1), b, theta_half) == 0.0
        assert h_transform_pmf(start, (2, 1, 2), b, theta_half) == pytest.approx(8.0 / 15.0, rel=1e-12)
        assert h_transform_pmf(start, (2, 2, 1), b, theta_half) == pytest.approx(4.0 / 15.0, rel=1e-12)
        assert h_transform_pmf(start, (2, 3, 1), b, theta_half) == pytest.approx(0.2, rel=1e-12)
        assert h_transform_row(start, b, theta_half).total() == pytest.approx(1.0, abs=1e-12)

    def test_full_multiplicity_at_level(self, theta_half):
        b = YBoundaryPoint(J=3, alpha=1.0)
        assert h_transform_pmf((1, 3, 1), (2, 3, 2), b, theta_half) == pytest.approx(1.0)
        with pytest.raises(StateError):
            h_transform_pmf((1, 2, 1), (2, 3, 1), b, theta_half)

    @pytest.mark.parametrize("theta", [0.2, 0.5, 0.8])
    def test_rows_sum_to_one(self, theta):
        theta = Theta(theta)
        for J in range(1, 7):
            for alpha in (0.0, 0.3, 0.7, 1.0):
                if J == 1 and alpha != 1.0:
                    continue
                b = YBoundaryPoint(J=J, alpha=alpha)
                kernel = ExtendedKernelY(b, theta)
                for x in _states(6, J):
                    if kernel(x) > 0.0:
                        row = h_transform_row(x, b, theta)
                        assert abs(row.total() - 1.0) < 1e-12

    def test_rejects_infinite_level(self, theta_half):
        with pytest.raises(ConfigError):
            h_transform_pmf((1, 1, 1), (2, 1, 2), YBoundaryPoint(J=None, alpha=0.5), theta_half)

    def test_rejects_states_outside_support(self, theta_half):
        b = YBoundaryPoint(J=2, alpha=0.3)
        with pytest.raises(StateError):
            h_transform_pmf((1, 3, 1), (2, 3, 2), b, theta_half)
        with pytest.raises(StateError):
            h_transform_row((2, 1, 1), b, theta_half)


class TestConditionedSimulation:
    def test_without_level_mass_stays_below(self, theta_half):
        path = simulate_conditioned_y(YBoundaryPoint(J=4, alpha=0.0), theta_half, 1000, seed=3)
        assert len(path) == 1001
        assert all(s.i < 4 for s in path)
        assert [s.m for s in path] == list(range(1, 1002))

    def test_full_mass_climbs_level(self, theta_half):
        path = simulate_conditioned_y(YBoundaryPoint(J=3, alpha=1.0), theta_half, 50, seed=3)
        assert path[0] == MaxState(1, 3, 1)
        for t, state in enumerate(path):
            assert state == MaxState(t + 1, 3, t + 1)

    def test_paths_stay_in_support(self, theta_half):
        b = YBoundaryPoint(J=3, alpha=0.2)
        kernel = ExtendedKernelY(b, theta_half)
        path = simulate_conditioned_y(b, theta_half, 2000, seed=8)
        assert all(kernel(s) > 0.0 for s in path)

    def test_reproducible(self, theta_half):
        b = YBoundaryPoint(J=3, alpha=0.2)
        assert simulate_conditioned_y(b, theta_half, 30, seed=5) == simulate_conditioned_y(b, theta_half, 30, seed=5)

    def test_rejects_start_outside_support(self, theta_half):
        with pytest.raises(StateError):
            simulate_conditioned_y(YBoundaryPoint(J=2, alpha=0.3), theta_half, 5, seed=1, start=(1, 3, 1))

    @pytest.mark.slow
    @pytest.mark.parametrize("start", [(1, 1, 1), (3, 2, 2), (2, 3, 1)])
    def test_one_step_frequencies(self, start, theta_half):
        b = YBoundaryPoint(J=3, alpha=0.2)
        runs = 20_000
        observed = Counter(
            simulate_conditioned_y(b, theta_half, 1, seed=seed, start=start)[1] for seed in range(runs)
        )
        expected = h_transform_row(start, b, theta_half).as_dict()
        obs, exp = pooled_counts(observed, expected, runs)
        _, p_value = stats.chisquare(obs, exp)
        assert p_value > 1e-3

    @pytest.mark.slow
    def test_kernel_is_a_martingale(self):
        means, stderr = kernel_means(YBoundaryPoint(J=3, alpha=0.3), Theta(0.5), steps=6, runs=100_000, seed=12)
        for mean, se in zip(means, stderr):
            assert within_se(mean, 1.0, se)


class TestClassify:
    def test_finite_level(self):
        states = [(n, 3, int(math.floor(0.4 * n))) for n in range(100, 10_001, 100)]
        verdict = classify_limit_y(states)
        assert verdict.converged
        assert verdict.point.J == 3
        assert verdict.point.alpha == pytest.approx(0.4, abs=1e-2)

    def test_escaping_level(self):
        verdict = classify_limit_y([(n, n, 1) for n in range(1, 201)])
        assert verdict.converged
        assert verdict.point.is_infinite
        assert verdict.j_diverges
        assert verdict.alpha_estimate < 1e-2

    def test_oscillating_level(self):
        verdict = classify_limit_y([(n, 2 if n % 2 else 5, n // 3) for n in range(1, 401)])
        assert not verdict.converged
        assert verdict.reason == "j_n oscillates on the tail"

    def test_drifting_ratio(self):
        states = [(n, 2, n // 2 if n < 370 else n // 10) for n in range(1, 401)]
        assert not classify_limit_y(states).converged

    def test_level_one_needs_full_ratio(self):
        assert not classify_limit_y([(n, 1, n // 2) for n in range(1, 101)]).converged
        assert classify_limit_y([(n, 1, n) for n in range(1, 101)]).converged

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            classify_limit_y([])
