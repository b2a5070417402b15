"""
Обращённая во времени цепь численностей: обратное прореживание, опорная цепь
с маргиналами Geo0(ζ_n), ядро Мартина через гумбелевские пределы, входные
меры и логарифмическая периодичность.

Интенсивность экспоненциального зазора в числителе ядра (это i) и параметр
Geo0 маргинала X_n (marginal_param) это разные величины.
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import special

from config import settings
from election.errors import CertificationError, ConfigError, StateError
from election.maxima_chain import prob_unique_winner
from election.models import (
    BackwardChainSpec,
    DiscreteDist,
    EntranceLaw,
    NBoundaryPoint,
    Theta,
    as_theta,
)
from election.numerics import (
    EULER_GAMMA,
    binom_logpmf,
    c_theta,
    cdf_f,
    empirical_dist,
    gap_probability,
    geo0_pmf,
    harmonic_number,
    psi_theta,
    thinning_pmf,
)
from election.participants_chain import duration_dist, simulate_n_path, simulate_n_paths

logger = structlog.get_logger(__name__)

_ROW_LIMIT = 10**7
_INT64_SAFE = 2**62


def marginal_param(spec: BackwardChainSpec, n: int) -> float:
    """ζ_n: ζ_1 из spec, далее ζ_{k+1} = ψ_θ(ζ_k)"""
    if n < 1:
        raise ConfigError(f"time index must be >= 1, got {n}")
    zeta = spec.zeta1
    for _ in range(n - 1):
        zeta = psi_theta(spec.theta, zeta)
    return zeta


def _log_geo0(eta: float, i):
    return math.log(eta) + np.asarray(i, dtype=float) * math.log1p(-eta)


def backward_transition_pmf(i: int, j: int, theta: Theta) -> float:
    """P(X_n = j | X_{n+1} = i) = C(i,j)·(1-θ)^j·θ^{i-j}"""
    return float(thinning_pmf(i, j, theta))


def forward_transition_pmf(spec: BackwardChainSpec, n: int, j: int, i: int) -> float:
    """P(X_{n+1} = i | X_n = j), обращение по Байесу против маргиналов Geo0"""
    if i < j or j < 0:
        return 0.0
    zeta_n, zeta_next = marginal_param(spec, n), marginal_param(spec, n + 1)
    log_value = binom_logpmf(j, i, spec.theta.survival) + _log_geo0(zeta_next, i) - _log_geo0(zeta_n, j)
    return float(np.exp(log_value))


def forward_row(
    spec: BackwardChainSpec, n: int, j: int, tol: float = 1e-13
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Строка прямых переходов из X_n = j: носитель i = j..i_max, массы и оценка
    хвоста. Отношение соседних членов (i+1)/(i+1-j)·θ·(1-ζ_{n+1}) убывает по i,
    поэтому хвост после i не больше t_i·ρ_i/(1-ρ_i), как только ρ_i < 1.
    """
    theta = spec.theta.value
    zeta_n, zeta_next = marginal_param(spec, n), marginal_param(spec, n + 1)
    rho_limit = theta * (1.0 - zeta_next)
    width = max(64, int(4 * (j + 1) * rho_limit / (1.0 - rho_limit)) + 64)
    while True:
        support = np.arange(j, j + width + 1)
        log_mass = binom_logpmf(j, support, 1.0 - theta) + _log_geo0(zeta_next, support) - _log_geo0(zeta_n, j)
        mass = np.exp(log_mass)
        last = int(support[-1])
        rho = (last + 1) / (last + 1 - j) * rho_limit
        if rho < 1.0:
            tail = float(mass[-1] * rho / (1.0 - rho))
            if tail <= tol:
                return support, mass, tail
        width *= 2
        if width > _ROW_LIMIT:
            raise CertificationError(f"forward row from j={j} not certified", bound=float(mass[-1]))


def c_infinity(m: int, i: int, z: float, theta: Theta) -> float:
    """c∞(m, i; z) = H_i - γ - (m + z)/c(θ)"""
    return harmonic_number(i) - EULER_GAMMA - (m + z) / c_theta(theta)


def kernel_numerator(i: int, c: float) -> float:
    """
    ∫_{-∞}^{c} f_i(w)·exp(-i(c-w)) dw квадратурой: P(W < c < W + gap) для W с
    плотностью f_i и независимого зазора Exp(i).
    """
    if i < 1:
        raise StateError(f"numerator needs i >= 1, got {i}")
    return gap_probability(i, float(i), c, tol=settings.quad_tol)


def kernel_numerator_closed(i: int, c: float) -> float:
    """Тот же интеграл в замкнутом виде: e^{-ic}·E1(e^{-c})/(i-1)!"""
    return float(np.exp(-i * c - special.gammaln(i)) * special.exp1(np.exp(-c)))


def boundary_numerator(i: int, c: float) -> float:
    """
    Числитель граничного ядра для предела мартингала W_i, у которого плотность
    f_{i+1}(x - H_i + γ): в точке x = c - H_i + γ это exp(-ix - e^{-x})/i!,
    т.е. вероятность Пуассона(e^{-x}) в точке i.
    """
    if i < 0:
        raise StateError(f"numerator needs i >= 0, got {i}")
    x = c - (harmonic_number(i) if i > 0 else 0.0) + EULER_GAMMA
    return float(np.exp(-i * x - np.exp(-x) - special.gammaln(i + 1.0)))


def _log_poisson(lam: float, i):
    i = np.asarray(i, dtype=float)
    return special.xlogy(i, lam) - lam - special.gammaln(i + 1.0)


def _entrance_mean(m: int, z: float, theta: Theta) -> float:
    """λ_m = (1-θ)^{-(m+z)}: предел j·(1-θ)^{n-m} при c(θ)·log j - n -> z"""
    return math.exp(-(m + z) * math.log1p(-theta.value))


def extended_kernel_n(spec: BackwardChainSpec, m: int, i: int, b: NBoundaryPoint) -> float:
    """K(m, i; z) = числитель / P(X_m = i); K(m, i; ⋄) ≡ 0"""
    if m < 1 or i < 1:
        raise StateError(f"kernel needs m >= 1 and i >= 1, got m={m}, i={i}")
    if b.is_diamond:
        return 0.0
    c = c_infinity(m, i, b.z, spec.theta)
    numerator = boundary_numerator(i, c)
    return numerator / geo0_pmf(marginal_param(spec, m), i)


def extended_kernel_n_row(spec: BackwardChainSpec, m: int, i_values, b: NBoundaryPoint) -> np.ndarray:
    """K(m, i; b) сразу для массива i, в логарифмах: числитель и P(X_m = i) могут быть крошечными"""
    i = np.asarray(i_values, dtype=np.int64)
    if m < 1 or i.size == 0 or int(i.min()) < 1:
        raise StateError(f"kernel needs m >= 1 and i >= 1, got m={m}")
    if b.is_diamond:
        return np.zeros(i.shape)
    # числитель не зависит от i через c_∞: это Пуассон(λ_m) в точке i
    lam = _entrance_mean(m, b.z, spec.theta)
    return np.exp(_log_poisson(lam, i) - _log_geo0(marginal_param(spec, m), i.astype(float)))


def finite_kernel_n(spec: BackwardChainSpec, m: int, i: int, n: int, j) -> float:
    """Bin(j, (1-θ)^{n-m}) в точке i, делённое на P(X_m = i)"""
    if n <= m:
        raise ConfigError(f"kernel needs n > m, got m={m}, n={n}")
    if i > j:
        return 0.0
    p = math.exp((n - m) * math.log1p(-spec.theta.value))
    log_value = binom_logpmf(i, float(j), p) - _log_geo0(marginal_param(spec, m), i)
    return float(np.exp(log_value))


def n_harmonic_residual(spec: BackwardChainSpec, m: int, i: int, z: float, tol: float = 1e-15) -> float:
    """
    h(m, i) - Σ_j p((m,i), (m+1,j))·h(m+1, j) для h = K(·; z).

    Член суммы пропорционален C(j,i)·θ^{j-i}·λ_{m+1}^j/j!, отношение соседних
    членов θ·λ_{m+1}/(j+1-i) убывает, отсюда гарантированная оценка хвоста.
    """
    theta = spec.theta
    b = NBoundaryPoint.real(z)
    h_here = extended_kernel_n(spec, m, i, b)
    lam = _entrance_mean(m + 1, z, theta)
    zeta_m, zeta_next = marginal_param(spec, m), marginal_param(spec, m + 1)
    width = int(lam + 20.0 * math.sqrt(lam) + 64)
    while True:
        support = np.arange(i, i + width + 1)
        log_forward = binom_logpmf(i, support, theta.survival) + _log_geo0(zeta_next, support) - _log_geo0(zeta_m, i)
        terms = np.exp(log_forward) * extended_kernel_n_row(spec, m + 1, support, b)
        last = int(support[-1])
        rho = theta.value * lam / (last + 1 - i)
        if rho < 1.0:
            tail = float(terms[-1] * rho / (1.0 - rho))
            if tail <= tol * max(h_here, 1e-300):
                return h_here - math.fsum(terms.tolist())
        width *= 2
        if width > _ROW_LIMIT:
            raise CertificationError(f"harmonic sum at (m={m}, i={i}) not certified", bound=float(terms[-1]))


def sample_w(i: int, seed: int, size=None):
    """W_i = -log G, G ~ Gamma(i, 1): точная выборка из плотности f_i"""
    if i < 1:
        raise ConfigError(f"i must be >= 1, got {i}")
    rng = np.random.default_rng(seed)
    return -np.log(rng.gamma(float(i), 1.0, size))


def exp_order_stats(n: int, seed: int, size=None) -> np.ndarray:
    """
    Порядковые статистики n экспонент по Реньи-Сухатме: накопленные суммы
    V_n, V_n + V_{n-1}, ... с V_l ~ Exp(l). При size результат size x n.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    rates = np.arange(n, 0, -1, dtype=float)
    shape = (n,) if size is None else (size, n)
    gaps = rng.exponential(1.0, shape) / rates
    return np.cumsum(gaps, axis=-1)


def martingale_limit_cdf(i: int, x):
    """ФР предела W_i = lim Σ_{l=i+1}^{j} (V_l - 1/l): плотность f_{i+1}(x - H_i + γ)"""
    shift = (harmonic_number(i) if i > 0 else 0.0) - EULER_GAMMA
    return cdf_f(i + 1, np.asarray(x, dtype=float) - shift)


def partial_sum_cdf(i: int, j: int, x):
    """
    Точная ФР частичной суммы S_j = Σ_{l=i+1}^{j} (V_l - 1/l): сумма V_l есть
    (j-i)-я порядковая статистика j экспонент, так что
    P(S_j <= x) = P(Bin(j, e^{-t}) <= i) при t = x + H_j - H_i.
    """
    centre = harmonic_number(j) - (harmonic_number(i) if i > 0 else 0.0)
    t = np.asarray(x, dtype=float) + centre
    out = np.where(t > 0.0, special.bdtr(i, j, np.exp(-np.maximum(t, 0.0))), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def martingale_partial_sums(i: int, j: int, size: int, seed: int, method: str = "beta") -> np.ndarray:
    """
    Выборка S_j. method="beta": Σ V_l = -log B, B ~ Beta(i+1, j-i) (точно и
    быстро при больших j); method="direct": прямое суммирование экспонент.
    """
    if not 0 <= i < j:
        raise ConfigError(f"need 0 <= i < j, got i={i}, j={j}")
    rng = np.random.default_rng(seed)
    centre = harmonic_number(j) - (harmonic_number(i) if i > 0 else 0.0)
    if method == "beta":
        return -np.log(rng.beta(i + 1.0, float(j - i), size)) - centre
    if method == "direct":
        rates = np.arange(i + 1, j + 1, dtype=float)
        return (rng.exponential(1.0, (size, j - i)) / rates).sum(axis=1) - centre
    raise ConfigError(f"unknown method {method!r}")


def entrance_population(z: float, theta: Theta, k: int) -> int:
    """j_k = round-half-up((1-θ)^{-(k+z)})"""
    theta = as_theta(theta)
    value = math.exp(-(float(k) + float(z)) * math.log1p(-theta.value))
    return int(math.floor(value + 0.5))


def entrance_duration(
    z: float,
    theta: Theta,
    k: int,
    seed: Optional[int] = None,
    exact: bool = True,
    runs: Optional[int] = None,
) -> EntranceLaw:
    """
    Закон абсолютного момента входа в {0, 1}, t = T - k, для цепи, стартующей
    из j_k в момент -k+1. Точно через duration_dist или Монте-Карло.
    """
    theta = as_theta(theta)
    if k < 1:
        raise ConfigError(f"level k must be >= 1, got {k}")
    j_k = entrance_population(z, theta, k)
    if j_k < 1:
        raise ConfigError(f"starting population rounds to {j_k} for z={z}, k={k}")
    if j_k > settings.max_population:
        raise ConfigError(f"starting population {j_k:.3e} exceeds {settings.max_population:.1e}")
    achieved = c_theta(theta) * math.log(j_k) - k

    if exact:
        law = duration_dist(j_k, theta)
    else:
        if j_k >= _INT64_SAFE:
            raise ConfigError(f"population {j_k:.3e} is too large to simulate")
        runs = settings.mc_runs if runs is None else runs
        paths = simulate_n_paths(j_k, theta, runs, seed)
        # первый индекс с численностью <= 1, индексация с единицы
        durations = np.argmax(paths <= 1, axis=1) + 1
        law = empirical_dist(durations)
    logger.info("Закон входа построен", z=z, k=k, j_k=j_k, achieved_z=achieved, exact=exact)
    return EntranceLaw(k=k, j_k=j_k, z=z, achieved_z=achieved, law=law.shift(-k))


def entrance_diagnostic(z: float, theta: Theta, k: int, seed: int) -> List[Tuple[int, float]]:
    """
    Значения c(θ)·log N + (n - 1) - k вдоль одной траектории из j_k, n = 1, 2, ...
    пока N >= 1; при больших N они держатся около z.
    """
    theta = as_theta(theta)
    j_k = entrance_population(z, theta, k)
    if not 1 <= j_k < _INT64_SAFE:
        raise ConfigError(f"population {j_k} cannot be simulated")
    scale = c_theta(theta)
    path = simulate_n_path(j_k, theta, seed)
    return [(n, scale * math.log(count) + (n - 1) - k) for n, count in enumerate(path, start=1) if count >= 1]


def periodicity_scan(theta: Theta, n_list: Sequence[int]) -> List[Tuple[int, float]]:
    """Таблица (n, P(L_n = 1))"""
    if not n_list:
        raise ConfigError("n_list must be nonempty")
    theta = as_theta(theta)
    return [(int(n), prob_unique_winner(int(n), theta)) for n in n_list]


def subsequence_report(
    theta: Theta, offsets: Sequence[float], ks: Sequence[int]
) -> Dict[float, List[Tuple[int, int, float]]]:
    """P(L_n = 1) вдоль n_k = round(c·(1-θ)^{-k}) для каждого смещения c"""
    theta = as_theta(theta)
    log_r = math.log1p(-theta.value)
    report = {}
    for offset in offsets:
        rows = []
        for k in ks:
            n = int(math.floor(offset * math.exp(-k * log_r) + 0.5))
            if n < 1:
                raise ConfigError(f"n_k rounds to {n} for offset={offset}, k={k}")
            rows.append((int(k), n, prob_unique_winner(n, theta)))
        report[offset] = rows
    return report


def total_variation(p: DiscreteDist, q: DiscreteDist) -> float:
    return p.total_variation(q)
