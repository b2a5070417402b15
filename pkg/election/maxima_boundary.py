"""
Ядра Мартина, гармоничность и h-преобразования для пространственно-временной
цепи X_n = (n, M_n, L_n).

Пространство состояний E: 1 <= k <= m, i >= 1, и при i = 1 обязательно k = m
(если максимум равен единице, все наблюдения равны единице).
"""
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import special

from election.errors import CertificationError, ConfigError, StateError
from election.models import DiscreteDist, LimitVerdict, MaxState, Theta, YBoundaryPoint, as_theta
from election.numerics import log_binom_ratio, log_comb, sample_geometric

logger = structlog.get_logger(__name__)

# пороги эвристики classify_limit_y
_TAIL_SHARE = 0.25
_RATIO_RANGE = 1e-2


def _as_state(x) -> MaxState:
    return x if isinstance(x, MaxState) else MaxState(*x)


def is_state(x) -> bool:
    """Принадлежность пространству состояний E"""
    m, i, k = x
    if m < 1 or i < 1 or k < 1 or k > m:
        return False
    return i > 1 or k == m


def _require_state(x) -> MaxState:
    x = _as_state(x)
    if not is_state(x):
        raise StateError(f"{tuple(x)} is not a state of the space-time maxima chain")
    return x


def _log_p(theta: Theta, j: float) -> float:
    return math.log(theta.value) + (j - 1) * math.log1p(-theta.value)


def _q(theta: Theta, j: float) -> float:
    """P(ξ < j) = 1 - (1-θ)^{j-1}"""
    return -math.expm1((j - 1) * math.log1p(-theta.value))


def state_log_probability(state, theta: Theta) -> float:
    """log P(X_n = (n, j, l)); -inf вне E"""
    theta = as_theta(theta)
    state = _as_state(state)
    if not is_state(state):
        return -math.inf
    n, j, l = state
    return float(log_comb(n, l) + l * _log_p(theta, j) + special.xlogy(n - l, _q(theta, j)))


def finite_kernel_y(x, y, theta: Theta) -> float:
    """K(x, y) = P(X_n = y | X_m = x) / P(X_n = y)"""
    theta = as_theta(theta)
    x, y = _require_state(x), _require_state(y)
    m, i, k = x
    n, j, l = y
    if n <= m:
        raise ConfigError(f"kernel needs n > m, got m={m}, n={n}")
    if j < i:
        return 0.0
    if j > i:
        ratio = log_binom_ratio(n, m, l, 0)
        if ratio == 0.0:
            return 0.0
        return ratio * math.exp(-m * math.log(_q(theta, j)))
    ratio = log_binom_ratio(n, m, l, k)
    if ratio == 0.0:
        return 0.0
    # 0^0 = 1: при i = 1 в E всегда k = m
    log_factor = -k * _log_p(theta, i) + float(special.xlogy(k - m, _q(theta, i)))
    return ratio * math.exp(log_factor)


class ExtendedKernelY:
    """
    Расширенное ядро K(·; (J, α)) как функция на E.

    Помимо значения в точке умеет точно считать Σ_y p(x,y)·h(y): при конечном J
    вклад скачков j > J нулевой, а при J = ∞ ядро не зависит от j и хвост
    геометрического ряда суммируется в замкнутом виде.
    """

    def __init__(self, b: YBoundaryPoint, theta: Theta):
        self.b = b
        self.theta = as_theta(theta)

    def log_values(self, m, i, k) -> np.ndarray:
        """Векторизованный log K((m,i,k); b); -inf там, где ядро нулевое"""
        m, i, k = (np.asarray(v, dtype=float) for v in (m, i, k))
        alpha, theta = self.b.alpha, self.theta
        if self.b.is_infinite:
            return np.broadcast_to(special.xlogy(m, 1.0 - alpha), np.broadcast(m, i, k).shape).copy()
        J = self.b.J
        log_p_J = _log_p(theta, J)
        q_J = _q(theta, J)
        with np.errstate(divide="ignore", invalid="ignore"):
            below = special.xlogy(m, 1.0 - alpha) - special.xlogy(m, q_J)
            at = (
                special.xlogy(k, alpha)
                + special.xlogy(m - k, 1.0 - alpha)
                - k * log_p_J
                + special.xlogy(k - m, q_J)
            )
        out = np.where(i < J, below, np.where(i == J, at, -np.inf))
        return np.where(np.isnan(out), -np.inf, out)

    def __call__(self, x) -> float:
        x = _require_state(x)
        return float(np.exp(self.log_values(x.m, x.i, x.k)))

    def successor_sum(self, x) -> float:
        """Σ_y p(x, y)·K(y; b), точная сумма"""
        x = _require_state(x)
        m, i, k = x
        theta = self.theta
        p_i = math.exp(_log_p(theta, i))
        q_i = _q(theta, i)
        total = [p_i * self(MaxState(m + 1, i, k + 1))]
        if q_i > 0.0:
            total.append(q_i * self(MaxState(m + 1, i, k)))
        if self.b.is_infinite:
            # все (m+1, j, 1) при j > i дают одно и то же значение
            total.append(theta.survival ** i * self(MaxState(m + 1, i + 1, 1)))
        else:
            for j in range(i + 1, self.b.J + 1):
                total.append(math.exp(_log_p(theta, j)) * self(MaxState(m + 1, j, 1)))
        return math.fsum(total)


def extended_kernel_y(x, b: YBoundaryPoint, theta: Theta) -> float:
    """K(x; (J, α)) по трём случаям; ноль при i > J"""
    return ExtendedKernelY(b, theta)(x)


def harmonic_residual(
    h: Callable[[MaxState], float],
    x,
    theta: Theta,
    tol: float = 1e-12,
    h_bound: Optional[float] = None,
    j_max: Optional[int] = None,
) -> float:
    """
    h(x) - Σ_y p(x, y)·h(y).

    Для ExtendedKernelY сумма точная. Для произвольной h ряд по j > i обрезается
    на j_max, хвост Σ_{j > j_max} p_j = (1-θ)^{j_max} подставляется со значением
    h(m+1, j_max+1, 1), а погрешность оценивается через h_bound = sup|h|.

    Гарантия есть только с явным h_bound. Без него берётся максимум |h| по
    вычисленным членам j <= j_max + 1; это эвристика, h за j_max она не оценивает.
    """
    theta = as_theta(theta)
    x = _require_state(x)
    if isinstance(h, ExtendedKernelY):
        return h(x) - h.successor_sum(x)

    m, i, k = x
    log_r = math.log1p(-theta.value)
    if j_max is None:
        j_max = max(i + 1, math.ceil(math.log(tol * 1e-3) / log_r))
    terms = [math.exp(_log_p(theta, j)) * h(MaxState(m + 1, j, 1)) for j in range(i + 1, j_max + 1)]
    tail_mass = math.exp(j_max * log_r)
    tail_value = h(MaxState(m + 1, j_max + 1, 1))
    if h_bound is None:
        seen = [abs(tail_value)] + [abs(h(MaxState(m + 1, j, 1))) for j in range(i + 1, j_max + 1)]
        h_bound = max(seen)
        logger.debug("Эвристическая оценка sup|h| по вычисленным членам", x=tuple(x), h_bound=h_bound)
    bound = tail_mass * (h_bound + abs(tail_value))
    if bound > tol:
        raise CertificationError(f"tail bound {bound:.3e} exceeds tolerance {tol:.1e}", bound=bound)

    terms.append(tail_mass * tail_value)
    terms.append(math.exp(_log_p(theta, i)) * h(MaxState(m + 1, i, k + 1)))
    q_i = _q(theta, i)
    if q_i > 0.0:
        terms.append(q_i * h(MaxState(m + 1, i, k)))
    return h(x) - math.fsum(terms)


def _check_finite(b: YBoundaryPoint):
    if b.is_infinite:
        raise ConfigError("h-transform is implemented for finite J only")


def h_transform_pmf(frm, to, b: YBoundaryPoint, theta: Theta) -> float:
    """p_h(x, y) = p(x, y)·h(y)/h(x) с h = K(·; (J, α))"""
    _check_finite(b)
    theta = as_theta(theta)
    kernel = ExtendedKernelY(b, theta)
    frm = _require_state(frm)
    h_from = kernel(frm)
    if h_from <= 0.0:
        raise StateError(f"{tuple(frm)} lies outside the support of the kernel for {b.label()}")
    to = _as_state(to)
    m, i, k = frm
    if to.m != m + 1 or not is_state(to):
        return 0.0
    if to.i > i and to.k == 1:
        p = math.exp(_log_p(theta, to.i))
    elif to.i == i and to.k == k + 1:
        p = math.exp(_log_p(theta, i))
    elif to.i == i and to.k == k:
        p = _q(theta, i)
    else:
        return 0.0
    return p * kernel(to) / h_from


def h_transform_row(frm, b: YBoundaryPoint, theta: Theta) -> DiscreteDist:
    """Вся строка h-преобразованной цепи из frm (носитель конечен)"""
    _check_finite(b)
    frm = _require_state(frm)
    m, i, k = frm
    candidates = [MaxState(m + 1, j, 1) for j in range(i + 1, b.J + 1)]
    candidates += [MaxState(m + 1, i, k), MaxState(m + 1, i, k + 1)]
    table = {}
    for y in candidates:
        if not is_state(y):
            continue
        p = h_transform_pmf(frm, y, b, theta)
        if p > 0.0:
            table[y] = p
    return DiscreteDist.from_mapping(table)


def _conditioned_geometric(u: float, theta: Theta, J: int) -> int:
    """Геометрическая величина, обусловленная на {1, ..., J-1}, обращением ФР"""
    log_r = math.log1p(-theta.value)
    value = math.ceil(math.log1p(-u * _q(theta, J)) / log_r)
    return min(max(value, 1), J - 1)


def simulate_conditioned_y(
    b: YBoundaryPoint, theta: Theta, steps: int, seed: int, start=None
) -> List[MaxState]:
    """
    Конструктивная реализация h-преобразования для (J, α), J конечно.

    Пока максимум меньше J: с вероятностью α скачок в (·, J, 1), иначе шаг цепи
    максимумов Y^J с геометрическими величинами, обусловленными на {1, ..., J-1}.
    На уровне J кратность растёт с вероятностью α и стоит на месте с 1-α.
    Без start траектория начинается с X_1; длина пути steps + 1.
    """
    _check_finite(b)
    theta = as_theta(theta)
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    J, alpha = b.J, b.alpha
    rng = np.random.default_rng(seed)
    switch = rng.random(steps + 1)
    draws = rng.random(steps + 1)

    if start is None:
        if switch[0] < alpha:
            state = MaxState(1, J, 1)
        else:
            state = MaxState(1, _conditioned_geometric(draws[0], theta, J), 1)
    else:
        state = _require_state(start)
        if ExtendedKernelY(b, theta)(state) <= 0.0:
            raise StateError(f"start {tuple(state)} lies outside the support of the kernel for {b.label()}")

    path = [state]
    for step in range(1, steps + 1):
        m, i, k = state
        if i == J:
            state = MaxState(m + 1, J, k + 1 if switch[step] < alpha else k)
        elif switch[step] < alpha:
            state = MaxState(m + 1, J, 1)
        else:
            value = _conditioned_geometric(draws[step], theta, J)
            if value > i:
                state = MaxState(m + 1, value, 1)
            elif value == i:
                state = MaxState(m + 1, i, k + 1)
            else:
                state = MaxState(m + 1, i, k)
        path.append(state)
    return path


def kernel_means(
    b: YBoundaryPoint, theta: Theta, steps: int, runs: int, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Эмпирическое среднее h(X_t), t = 1..steps, по безусловным траекториям и его
    стандартная ошибка; для гармонической h средние постоянны (мартингал).
    """
    theta = as_theta(theta)
    rng = np.random.default_rng(seed)
    xi = sample_geometric(rng, theta, (runs, steps))
    maxima = np.maximum.accumulate(xi, axis=1)
    counts = np.empty_like(maxima)
    for t in range(steps):
        counts[:, t] = (xi[:, : t + 1] == maxima[:, t : t + 1]).sum(axis=1)
    times = np.broadcast_to(np.arange(1, steps + 1), maxima.shape)
    values = np.exp(ExtendedKernelY(b, theta).log_values(times, maxima, counts))
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(runs)


def classify_limit_y(states: Sequence[Tuple[int, int, int]]) -> LimitVerdict:
    """
    Эвристическая классификация предела последовательности (n, j_n, l_n):
    j_n должно быть постоянно на последней четверти (или расти), размах l_n/n
    на последней четверти меньше 1e-2.
    """
    if not states:
        raise ConfigError("classify_limit_y needs a nonempty sequence")
    size = len(states)
    tail = states[max(0, size - max(1, int(size * _TAIL_SHARE))):]
    js = [s[1] for s in tail]
    ratios = [s[2] / s[0] for s in tail]
    alpha_range = max(ratios) - min(ratios)
    alpha = min(max(ratios[-1], 0.0), 1.0)

    j_constant = len(set(js)) == 1
    j_increasing = all(a <= b for a, b in zip(js, js[1:])) and js[-1] > js[0]
    if not (j_constant or j_increasing):
        return LimitVerdict(
            converged=False, alpha_estimate=alpha, alpha_range=alpha_range,
            reason="j_n oscillates on the tail",
        )
    if alpha_range >= _RATIO_RANGE:
        return LimitVerdict(
            converged=False, j_estimate=js[-1] if j_constant else None, j_diverges=j_increasing,
            alpha_estimate=alpha, alpha_range=alpha_range, reason="l_n/n does not stabilize",
        )

    J = js[-1] if j_constant else None
    if J == 1 and alpha != 1.0:
        return LimitVerdict(
            converged=False, j_estimate=1, alpha_estimate=alpha, alpha_range=alpha_range,
            reason="J=1 is reachable only with alpha=1",
        )
    return LimitVerdict(
        converged=True, point=YBoundaryPoint(J=J, alpha=alpha), j_estimate=J,
        j_diverges=not j_constant, alpha_estimate=alpha, alpha_range=alpha_range,
        reason="stabilized",
    )
