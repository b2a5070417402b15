"""
Цепь числа участников N_n: переход есть биномиальное прореживание с
вероятностью выживания 1-θ. Многошаговые законы, симуляция и длительность.

Длительность: T = первый индекс n >= 1 с N_n ∈ {0, 1} при N_1 = j_start.
Число сыгранных раундов монеты равно T - 1 (duration_rounds).
"""
import math
from typing import List, Optional

import numpy as np
import structlog

from config import settings
from election.errors import ConfigError
from election.models import DiscreteDist, Theta, as_theta
from election.numerics import binom_logpmf, thinning_pmf

logger = structlog.get_logger(__name__)

# матрица переходов для точного DP строится только для небольших численностей
_DP_LIMIT = 2000
_HORIZON_LIMIT = 100_000


def n_transition_pmf(i: int, j: int, theta: Theta) -> float:
    return float(thinning_pmf(i, j, theta))


def transition_matrix(size: int, theta: Theta) -> np.ndarray:
    """Матрица переходов на {0, ..., size}"""
    theta = as_theta(theta)
    counts = np.arange(size + 1)
    return np.exp(binom_logpmf(counts[None, :], counts[:, None], theta.survival))


def _survival_after(rounds: int, theta: Theta) -> float:
    return math.exp(rounds * math.log1p(-theta.value))


def n_step_pmf(j_start: int, r: int, i: int, theta: Theta) -> float:
    """P(N_{n+r} = i | N_n = j_start) = Bin(j_start, (1-θ)^r) в точке i"""
    theta = as_theta(theta)
    if j_start < 0 or r < 0:
        raise ConfigError(f"need j_start >= 0 and r >= 0, got {j_start}, {r}")
    return float(np.exp(binom_logpmf(i, j_start, _survival_after(r, theta))))


def n_step_vector(j_start: int, r: int, theta: Theta) -> np.ndarray:
    """Строка r-шагового закона на {0, ..., j_start}"""
    theta = as_theta(theta)
    return np.exp(binom_logpmf(np.arange(j_start + 1), j_start, _survival_after(r, theta)))


def simulate_n_path(j_start: int, theta: Theta, seed: int) -> List[int]:
    """Траектория до поглощения в нуле; первый элемент равен j_start"""
    theta = as_theta(theta)
    if j_start < 0:
        raise ConfigError(f"j_start must be >= 0, got {j_start}")
    rng = np.random.default_rng(seed)
    path = [int(j_start)]
    while path[-1] > 0:
        path.append(int(rng.binomial(path[-1], theta.survival)))
    return path


def simulate_n_paths(
    j_start: int, theta: Theta, runs: int, seed: int, rounds: Optional[int] = None
) -> np.ndarray:
    """
    Матрица runs x (rounds+1) численностей; без rounds моделируем, пока все
    траектории не поглотятся, и дополняем нулями.
    """
    theta = as_theta(theta)
    rng = np.random.default_rng(seed)
    current = np.full(runs, j_start, dtype=np.int64)
    columns = [current]
    while (rounds is None and current.any()) or (rounds is not None and len(columns) <= rounds):
        current = rng.binomial(current, theta.survival)
        columns.append(current)
    return np.stack(columns, axis=1)


def _log_at_most_one(j: float, p: float) -> float:
    """log P(Bin(j, p) <= 1) = j·log(1-p) + log(1 + j·p/(1-p))"""
    if p >= 1.0:
        return 0.0 if j <= 1 else -math.inf
    return j * math.log1p(-p) + math.log1p(j * p / (1.0 - p))


def _still_running(j: float, t: int, theta: Theta) -> float:
    """P(T > t) = P(Bin(j, (1-θ)^{t-1}) >= 2)"""
    if t < 1 or j < 2:
        return 1.0 if t < 1 else 0.0
    return -math.expm1(_log_at_most_one(j, _survival_after(t - 1, theta)))


def _auto_horizon(j: float, theta: Theta, tail_eps: float) -> int:
    t = 1
    while _still_running(j, t, theta) > tail_eps:
        t += 1
        if t > _HORIZON_LIMIT:
            raise ConfigError(f"no horizon below {_HORIZON_LIMIT} reaches tail {tail_eps}")
    return t


def _duration_dp(j_start: int, theta: Theta, horizon: int) -> DiscreteDist:
    """Тот же закон прямым DP по численностям (контроль для малых j)"""
    matrix = transition_matrix(j_start, theta)
    state = np.zeros(j_start + 1)
    state[j_start] = 1.0
    mass = []
    for _ in range(horizon):
        mass.append(float(state[:2].sum()))
        state[:2] = 0.0
        state = state @ matrix
    tail = max(0.0, 1.0 - math.fsum(mass))
    return DiscreteDist(support=list(range(1, horizon + 1)), mass=mass, tail_bound=tail)


def duration_dist(
    j_start, theta: Theta, horizon: Optional[int] = None, tail_eps: Optional[float] = None, method: str = "closed"
) -> DiscreteDist:
    """
    Закон T: P(T <= t) = P(Bin(j_start, (1-θ)^{t-1}) <= 1), поскольку {0, 1}
    замкнуто. Без horizon он подбирается так, чтобы хвост был не больше tail_eps.
    """
    theta = as_theta(theta)
    if j_start < 0:
        raise ConfigError(f"j_start must be >= 0, got {j_start}")
    if horizon is not None and horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    tail_eps = settings.tail_eps if tail_eps is None else tail_eps
    j = float(j_start)
    if horizon is None:
        horizon = _auto_horizon(j, theta, tail_eps)

    if method == "dp":
        if j_start > _DP_LIMIT:
            raise ConfigError(f"dp method supports j_start <= {_DP_LIMIT}, got {j_start}")
        return _duration_dp(int(j_start), theta, horizon)
    if method != "closed":
        raise ConfigError(f"unknown duration method {method!r}")

    running = [_still_running(j, t, theta) for t in range(horizon + 1)]
    mass = [max(0.0, running[t - 1] - running[t]) for t in range(1, horizon + 1)]
    logger.debug("Закон длительности", j_start=j_start, horizon=horizon, tail=running[-1])
    return DiscreteDist(support=list(range(1, horizon + 1)), mass=mass, tail_bound=running[-1])


def duration_rounds(dist: DiscreteDist) -> DiscreteDist:
    """Закон числа раундов монеты T - 1"""
    return dist.shift(-1)
