"""
Быстрые детерминированные проверки: стохастичность строк, гармоничность
Y-ядер, сходимость конечных ядер, замкнутая форма для N и граничный предел.
"""
import math
from typing import Callable, List, Tuple

import numpy as np
import structlog

from election.maxima_boundary import (
    ExtendedKernelY,
    finite_kernel_y,
    h_transform_row,
    harmonic_residual,
    is_state,
)
from election.maxima_chain import y_transition_pmf
from election.models import BackwardChainSpec, MaxState, NBoundaryPoint, Theta, YBoundaryPoint
from election.participants_boundary import (
    backward_transition_pmf,
    extended_kernel_n,
    finite_kernel_n,
    forward_row,
)
from election.participants_chain import n_step_vector, n_transition_pmf, transition_matrix

logger = structlog.get_logger(__name__)

CheckResult = Tuple[str, bool, str]

THETAS = (0.2, 0.5, 0.8)
ROW_TOL = 1e-10


def _expect(condition: bool, message: str):
    if not condition:
        raise AssertionError(message)


def _y_row_sum(i: int, k: int, theta: Theta) -> float:
    """Сумма строки перехода (M, L) с точным хвостом Σ_{j>J} p_j = (1-θ)^J"""
    top = i + 60
    terms = [y_transition_pmf((i, k), (j, 1), theta) for j in range(i + 1, top + 1)]
    terms += [y_transition_pmf((i, k), (i, k + 1), theta), y_transition_pmf((i, k), (i, k), theta)]
    terms.append(theta.survival ** top)
    return math.fsum(terms)


def check_row_sums() -> str:
    worst = 0.0
    for value in THETAS:
        theta = Theta(value)
        spec = BackwardChainSpec(theta=theta)
        for i in range(1, 31):
            for k in range(1, 31):
                worst = max(worst, abs(_y_row_sum(i, k, theta) - 1.0))
        for i in range(0, 31):
            thinning = math.fsum(n_transition_pmf(i, j, theta) for j in range(i + 1))
            backward = math.fsum(backward_transition_pmf(i, j, theta) for j in range(i + 1))
            worst = max(worst, abs(thinning - 1.0), abs(backward - 1.0))
        for j in range(0, 31):
            _, mass, tail = forward_row(spec, 1, j)
            worst = max(worst, abs(math.fsum(mass.tolist()) - 1.0) - tail)
        for J in range(1, 7):
            for alpha in (0.0, 0.3, 0.7, 1.0):
                if J == 1 and alpha != 1.0:
                    continue
                b = YBoundaryPoint(J=J, alpha=alpha)
                kernel = ExtendedKernelY(b, theta)
                for x in _states(6, J):
                    if kernel(x) > 0.0:
                        worst = max(worst, abs(h_transform_row(x, b, theta).total() - 1.0))
    _expect(worst <= ROW_TOL, f"row sum deviates by {worst:.3e}")
    return f"max deviation {worst:.2e}"


def _states(max_m: int, max_i: int) -> List[MaxState]:
    return [
        MaxState(m, i, k)
        for m in range(1, max_m + 1)
        for i in range(1, max_i + 1)
        for k in range(1, m + 1)
        if is_state((m, i, k))
    ]


def check_harmonicity() -> str:
    theta = Theta(0.5)
    worst = 0.0
    for J in (2, 3, 5):
        for alpha in (0.0, 0.3, 1.0):
            kernel = ExtendedKernelY(YBoundaryPoint(J=J, alpha=alpha), theta)
            for x in _states(20, J):
                h = kernel(x)
                if h > 0.0:
                    worst = max(worst, abs(harmonic_residual(kernel, x, theta)) / h)
    _expect(worst <= 1e-10, f"relative residual {worst:.3e}")
    for alpha in (0.3, 0.7):
        kernel = ExtendedKernelY(YBoundaryPoint(J=None, alpha=alpha), theta)
        for x in _states(10, 6):
            h = kernel(x)
            defect = harmonic_residual(kernel, x, theta)
            _expect(abs(defect - alpha * h) <= 1e-12 * h, f"superharmonic defect off at {tuple(x)}")
    return f"max relative residual {worst:.2e}"


def check_kernel_convergence() -> str:
    theta = Theta(0.5)
    b = YBoundaryPoint(J=3, alpha=0.4)
    kernel = ExtendedKernelY(b, theta)
    errors = []
    for n in (10**2, 10**3, 10**4, 10**5):
        y = (n, 3, int(math.floor(0.4 * n + 0.5)))
        errors.append(
            max(
                abs(finite_kernel_y(x, y, theta) / kernel(x) - 1.0) for x in _states(5, 3) if kernel(x) > 0.0
            )
        )
    _expect(all(a > b for a, b in zip(errors, errors[1:])), f"errors not decreasing: {errors}")
    _expect(errors[-1] < 1e-2, f"relative error at n=1e5 is {errors[-1]:.3e}")
    return "errors " + " ".join(f"{e:.2e}" for e in errors)


def check_matrix_power() -> str:
    worst = 0.0
    for value in (0.3, 0.5, 0.7):
        theta = Theta(value)
        matrix = transition_matrix(30, theta)
        power = np.eye(31)
        for r in range(1, 11):
            power = power @ matrix
            for j in range(31):
                worst = max(worst, float(np.abs(power[j, : j + 1] - n_step_vector(j, r, theta)).max()))
    _expect(worst <= 1e-12, f"matrix power deviates by {worst:.3e}")
    return f"max deviation {worst:.2e}"


def check_participants_limit() -> str:
    spec = BackwardChainSpec(theta=0.5)
    limit = extended_kernel_n(spec, 1, 1, NBoundaryPoint.real(0.0))
    finite = finite_kernel_n(spec, 1, 1, 40, 2**40)
    error = abs(finite - limit)
    _expect(error < 1e-3, f"finite kernel at k=40 is off by {error:.3e}")
    return f"error {error:.2e}"


CHECKS: List[Tuple[str, Callable[[], str]]] = [
    ("row_stochasticity", check_row_sums),
    ("y_harmonicity", check_harmonicity),
    ("y_kernel_convergence", check_kernel_convergence),
    ("n_matrix_power", check_matrix_power),
    ("n_boundary_limit", check_participants_limit),
]


def run_checks() -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            detail = check()
            results.append((name, True, detail))
            logger.info("Проверка пройдена", check=name, detail=detail)
        except AssertionError as e:
            results.append((name, False, str(e)))
            logger.error("Проверка не пройдена", check=name, error=str(e))
    return results
