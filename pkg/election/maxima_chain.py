"""
Цепь Y_n = (M_n, L_n): текущий максимум i.i.d. геометрических величин и его
кратность. Точные законы, распределения исходов выборов и связанная симуляция.

Соглашение о раундах (формула R = M при L = 1 и R = M + 1 при L >= 2):
в прямой симуляции единственный оставшийся участник «добрасывает» монету
до орла, а одновременный уход k >= 2 участников замечается ещё через раунд.
При k = 1 игра не начинается: rounds = 0.
"""
import math
from typing import List, NamedTuple, Tuple

import numpy as np
import structlog
from scipy import special

from config import settings
from election.errors import ConfigError
from election.models import DiscreteDist, ElectionOutcome, Theta, as_theta
from election.numerics import log_comb, sample_geometric

logger = structlog.get_logger(__name__)

_UNIQUE_TAIL = 1e-18
_CHUNK_ROWS = 200_000


class ElectionBatch(NamedTuple):
    rounds: np.ndarray
    winners: np.ndarray
    rounds_played: np.ndarray


def _log_p(theta: Theta, j):
    """log P(ξ = j) = log θ + (j-1)·log(1-θ)"""
    return math.log(theta.value) + (np.asarray(j, dtype=float) - 1.0) * math.log1p(-theta.value)


def _log_q(theta: Theta, j):
    """log P(ξ < j) = log(1 - (1-θ)^{j-1}); -inf при j = 1"""
    j = np.asarray(j, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1((j - 1.0) * math.log1p(-theta.value)))


def y_transition_pmf(frm: Tuple[int, int], to: Tuple[int, int], theta: Theta) -> float:
    """Переходная вероятность цепи (M_n, L_n) -> (M_{n+1}, L_{n+1})"""
    theta = as_theta(theta)
    i, k = frm
    j, l = to
    if min(i, k, j, l) < 1:
        return 0.0
    r = theta.survival
    if j > i:
        return theta.value * r ** (j - 1) if l == 1 else 0.0
    if j == i:
        if l == k + 1:
            return theta.value * r ** (i - 1)
        if l == k:
            return 1.0 - r ** (i - 1)
    return 0.0


def max_level(n: int, theta: Theta, tail_eps: float) -> Tuple[int, float]:
    """Наименьшее J с P(M_n > J) <= tail_eps и сама масса хвоста"""
    theta = as_theta(theta)
    log_r = math.log1p(-theta.value)
    log_target = math.log1p(-tail_eps)

    def log_cdf(level: int) -> float:
        return n * math.log1p(-math.exp(level * log_r))

    target = -math.expm1(log_target / n)
    level = max(1, math.ceil(math.log(target) / log_r))
    while log_cdf(level) < log_target:
        level += 1
    while level > 1 and log_cdf(level - 1) >= log_target:
        level -= 1
    return level, -math.expm1(log_cdf(level))


def _check_tail_eps(tail_eps: float) -> float:
    tail_eps = settings.tail_eps if tail_eps is None else tail_eps
    if not 0.0 < tail_eps < 1.0:
        raise ConfigError(f"tail_eps must lie in (0,1), got {tail_eps}")
    return tail_eps


def _joint_log_table(n: int, theta: Theta, j_max: int) -> np.ndarray:
    """log P(M_n = j, L_n = l) на сетке j = 1..j_max, l = 1..n"""
    j = np.arange(1, j_max + 1, dtype=float)[:, None]
    l = np.arange(1, n + 1, dtype=float)[None, :]
    with np.errstate(invalid="ignore"):
        table = log_comb(n, l) + l * _log_p(theta, j) + special.xlogy(n - l, np.exp(_log_q(theta, j)))
    return np.where(np.isnan(table), -np.inf, table)


def joint_dist_ml(n: int, theta: Theta, tail_eps: float = None) -> DiscreteDist:
    """Совместный закон (M_n, L_n) с учтённым хвостом P(M_n > J_max)"""
    theta = as_theta(theta)
    tail_eps = _check_tail_eps(tail_eps)
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    j_max, tail = max_level(n, theta, tail_eps)
    mass = np.exp(_joint_log_table(n, theta, j_max))
    logger.debug("Совместная таблица построена", n=n, j_max=j_max, tail=tail)
    support = [(j, l) for j in range(1, j_max + 1) for l in range(1, n + 1)]
    return DiscreteDist(support=support, mass=mass.ravel().tolist(), tail_bound=tail)


def prob_unique_winner(n: int, theta: Theta) -> float:
    """P(L_n = 1) = Σ_j n·θ(1-θ)^{j-1}·(1-(1-θ)^{j-1})^{n-1}"""
    theta = as_theta(theta)
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    # хвост Σ_{j>J} n·p_j <= n·(1-θ)^J
    j_max = math.ceil(math.log(_UNIQUE_TAIL / n) / math.log1p(-theta.value)) + 1
    j = np.arange(1, j_max + 1, dtype=float)
    with np.errstate(invalid="ignore"):
        log_terms = math.log(n) + _log_p(theta, j) + special.xlogy(n - 1, np.exp(_log_q(theta, j)))
    log_terms = np.where(np.isnan(log_terms), -np.inf, log_terms)
    return min(1.0, math.fsum(np.exp(log_terms)))


def rounds_dist(n: int, theta: Theta, tail_eps: float = None) -> DiscreteDist:
    """Закон числа раундов: P(R=r) = P(M=r, L=1) + P(M=r-1, L>=2)"""
    theta = as_theta(theta)
    tail_eps = _check_tail_eps(tail_eps)
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    j_max, tail = max_level(n, theta, tail_eps)
    j = np.arange(1, j_max + 1, dtype=float)
    log_q = _log_q(theta, j)
    with np.errstate(invalid="ignore"):
        unique = np.exp(math.log(n) + _log_p(theta, j) + special.xlogy(n - 1, np.exp(log_q)))
    unique = np.nan_to_num(unique)
    # P(M = j) = q_{j+1}^n - q_j^n
    cdf_next = np.exp(n * _log_q(theta, j + 1.0))
    cdf_here = np.exp(n * log_q)
    several = np.clip(cdf_next - cdf_here - unique, 0.0, None)

    mass = np.zeros(j_max + 1)
    mass[:j_max] += unique
    mass[1:] += several
    return DiscreteDist(support=list(range(1, j_max + 2)), mass=mass.tolist(), tail_bound=tail)


def election_law(n: int, theta: Theta, tail_eps: float = None) -> DiscreteDist:
    """Закон пары (R_n, L_n), полученный из (M_n, L_n)"""
    joint = joint_dist_ml(n, theta, tail_eps)
    table = {}
    for (j, l), p in zip(joint.support, joint.mass):
        table[(j, 1) if l == 1 else (j + 1, l)] = p
    return DiscreteDist.from_mapping(table, tail_bound=joint.tail_bound)


def simulate_y_path(n_max: int, theta: Theta, seed: int) -> List[Tuple[int, int]]:
    """Траектория (M_t, L_t), t = 1..n_max, по одной последовательности ξ_t"""
    theta = as_theta(theta)
    if n_max < 1:
        raise ConfigError(f"path length must be >= 1, got {n_max}")
    rng = np.random.default_rng(seed)
    xi = sample_geometric(rng, theta, n_max)
    path = []
    current, count = 0, 0
    for value in xi.tolist():
        if value > current:
            current, count = value, 1
        elif value == current:
            count += 1
        path.append((current, count))
    return path


def simulate_maxima(n: int, theta: Theta, runs: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Независимые копии (M_n, L_n): массивы максимумов и кратностей"""
    theta = as_theta(theta)
    rng = np.random.default_rng(seed)
    maxima, counts = [], []
    for start in range(0, runs, _CHUNK_ROWS):
        rows = min(_CHUNK_ROWS, runs - start)
        xi = sample_geometric(rng, theta, (rows, n))
        top = xi.max(axis=1)
        maxima.append(top)
        counts.append((xi == top[:, None]).sum(axis=1))
    return np.concatenate(maxima), np.concatenate(counts)


def simulate_election(k: int, theta: Theta, seed: int) -> ElectionOutcome:
    """Один прогон протокола: каждый оставшийся уходит при орле"""
    theta = as_theta(theta)
    if k < 1:
        raise ConfigError(f"group size must be >= 1, got {k}")
    if k == 1:
        return ElectionOutcome(rounds=0, winners=1, rounds_played=0, trajectory=[])

    rng = np.random.default_rng(seed)
    remaining, played = k, 0
    trajectory = []
    while True:
        played += 1
        heads = int(rng.binomial(remaining, theta.value))
        if heads == remaining:
            trajectory.append((played, 0))
            return ElectionOutcome(
                rounds=played + 1, winners=remaining, rounds_played=played, trajectory=trajectory
            )
        remaining -= heads
        trajectory.append((played, remaining))
        if remaining == 1:
            extra = int(sample_geometric(rng, theta))
            return ElectionOutcome(
                rounds=played + extra, winners=1, rounds_played=played, trajectory=trajectory
            )


def simulate_elections(k: int, theta: Theta, runs: int, seed: int) -> ElectionBatch:
    """Векторизованный прогон протокола для runs независимых групп"""
    theta = as_theta(theta)
    if k < 1:
        raise ConfigError(f"group size must be >= 1, got {k}")
    rounds = np.zeros(runs, dtype=np.int64)
    winners = np.ones(runs, dtype=np.int64)
    played = np.zeros(runs, dtype=np.int64)
    if k == 1:
        return ElectionBatch(rounds, winners, played)

    rng = np.random.default_rng(seed)
    remaining = np.full(runs, k, dtype=np.int64)
    active = np.ones(runs, dtype=bool)
    step = 0
    while active.any():
        step += 1
        idx = np.flatnonzero(active)
        heads = rng.binomial(remaining[idx], theta.value)
        wiped = heads == remaining[idx]
        done_wiped = idx[wiped]
        winners[done_wiped] = remaining[done_wiped]
        rounds[done_wiped] = step + 1
        played[done_wiped] = step

        left = remaining[idx] - heads
        remaining[idx] = left
        done_unique = idx[~wiped & (left == 1)]
        played[done_unique] = step
        rounds[done_unique] = step + sample_geometric(rng, theta, done_unique.size)

        active[done_wiped] = False
        active[done_unique] = False
    logger.debug("Выборы просимулированы", k=k, runs=runs, max_rounds=step)
    return ElectionBatch(rounds, winners, played)
