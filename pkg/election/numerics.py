"""
Общие численные примитивы: специальные функции, элементарные распределения
и комбинаторика в логарифмической шкале.

Все биномиальные величины считаются через логарифмы, чтобы поддерживать
численности участников до ~1e13 и выше без переполнения.
"""
import math
from typing import List, Union

import numpy as np
import structlog
from scipy import integrate, special

from config import settings
from election.errors import CertificationError
from election.models import DiscreteDist, Theta, as_theta

logger = structlog.get_logger(__name__)

EULER_GAMMA = float(np.euler_gamma)

# до этой длины падающий факториал считаем прямым произведением
_FALLING_CUTOFF = 64
_HARMONIC_DIRECT_LIMIT = 10**6

ArrayLike = Union[float, np.ndarray]


def _scalar_or_array(out: np.ndarray):
    return float(out) if np.ndim(out) == 0 else out


def c_theta(theta: Theta) -> float:
    """c(θ) = -1/log(1-θ): c(θ)·log y есть логарифм y по основанию 1/(1-θ)"""
    theta = as_theta(theta)
    return -1.0 / math.log1p(-theta.value)


def euler_gamma() -> float:
    return EULER_GAMMA


def harmonic_number(n: int) -> float:
    """n-е гармоническое число H_n"""
    if n < 1:
        raise ValueError(f"harmonic number needs n >= 1, got {n}")
    if n <= _HARMONIC_DIRECT_LIMIT:
        # суммируем от малых слагаемых к большим
        return float(np.sum(1.0 / np.arange(n, 0, -1, dtype=float)))
    return float(special.digamma(n + 1.0) + EULER_GAMMA)


def density_f(l: int, x: ArrayLike) -> ArrayLike:
    """Плотность f_l(x) = exp(-l·x - e^{-x}) / (l-1)!"""
    if l < 1:
        raise ValueError(f"density index must be >= 1, got {l}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-l * x - np.exp(-x) - special.gammaln(l))
    return _scalar_or_array(out)


def cdf_f(l: int, x: ArrayLike) -> ArrayLike:
    """P(W_l <= x) для W_l с плотностью f_l; W_l = -log G, G ~ Gamma(l, 1)"""
    if l < 1:
        raise ValueError(f"density index must be >= 1, got {l}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = special.gammaincc(l, np.exp(-x))
    return _scalar_or_array(out)


def integrate_density(l: int, lower: float = None, upper: float = None) -> float:
    """Адаптивная квадратура f_l на окне [-40, 40] (или заданном)"""
    lower = -settings.quad_window if lower is None else lower
    upper = settings.quad_window if upper is None else upper
    points = [0.0] if lower < 0.0 < upper else None
    value, _ = integrate.quad(
        lambda w: density_f(l, w), lower, upper, epsabs=1e-13, epsrel=1e-13, limit=200, points=points
    )
    return value


def geo0_pmf(eta: float, i: ArrayLike) -> ArrayLike:
    """Geo0(η): P(V=i) = (1-η)^i·η, число неудач до первого успеха"""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0,1), got {eta}")
    i = np.asarray(i, dtype=float)
    out = np.where(i >= 0, eta * np.exp(i * math.log1p(-eta)), 0.0)
    return _scalar_or_array(out)


def psi_theta(theta: Theta, zeta: float) -> float:
    """ψ_θ(ζ) = ζ(1-θ)/(1-ζθ), сдвиг параметра Geo0 на один шаг времени"""
    theta = as_theta(theta)
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must lie in [0,1], got {zeta}")
    return zeta * (1.0 - theta.value) / (1.0 - zeta * theta.value)


def log_comb(n: ArrayLike, k: ArrayLike) -> ArrayLike:
    """log C(n, k); -inf вне 0 <= k <= n"""
    n_arr, k_arr = np.broadcast_arrays(np.asarray(n, dtype=float), np.asarray(k, dtype=float))
    out = np.full(n_arr.shape, -np.inf)
    valid = (k_arr >= 0) & (k_arr <= n_arr)
    kk = np.where(valid, np.minimum(k_arr, n_arr - k_arr), 0.0)

    small = valid & (kk <= _FALLING_CUTOFF)
    if np.any(small):
        acc = np.zeros(n_arr.shape)
        for r in range(int(kk[small].max())):
            mask = small & (kk > r)
            acc[mask] += np.log(n_arr[mask] - r)
        out[small] = acc[small] - special.gammaln(kk[small] + 1.0)

    large = valid & ~small
    if np.any(large):
        nl, kl = n_arr[large], k_arr[large]
        out[large] = -np.log1p(nl) - special.betaln(nl - kl + 1.0, kl + 1.0)
    return _scalar_or_array(out)


def binom_logpmf(k: ArrayLike, n: ArrayLike, p: float) -> ArrayLike:
    """log P(Bin(n, p) = k), устойчиво для n до ~1e30"""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_comb(n, k) + special.xlogy(k, p) + special.xlog1py(n - k, -p)
    out = np.where(np.isnan(out), -np.inf, out)
    return _scalar_or_array(out)


def thinning_pmf(i: ArrayLike, j: ArrayLike, theta: Theta) -> ArrayLike:
    """Переход биномиального прореживания: C(i,j)·θ^{i-j}·(1-θ)^j; 1 при i=j=0"""
    theta = as_theta(theta)
    return _scalar_or_array(np.exp(binom_logpmf(j, i, theta.survival)))


def _log_falling(a: int, d: int) -> float:
    """log(a!/(a-d)!) для 0 <= d <= a"""
    if d <= _FALLING_CUTOFF:
        return math.fsum(math.log(a - r) for r in range(d))
    return float(special.gammaln(a + 1.0) - special.gammaln(a - d + 1.0))


def log_binom_ratio(n: int, m: int, l: int, k: int) -> float:
    """
    C(n-m, l-k) / C(n, l), посчитанное через логарифмы.

    Раскладываем в три падающих факториала с короткими длинами m, k, m-k,
    поэтому отношение точно и при n ~ 1e6 и выше.
    """
    if not (0 <= m <= n and 0 <= k and 0 <= l <= n):
        return 0.0
    if l - k < 0 or l - k > n - m:
        return 0.0
    log_value = -_log_falling(n, m) + _log_falling(l, k)
    a = n - l
    if m >= k:
        log_value += _log_falling(a, m - k)
    else:
        log_value -= _log_falling(a + (k - m), k - m)
    return math.exp(log_value)


def sample_geometric(rng: np.random.Generator, theta: Theta, size=None) -> np.ndarray:
    """Геометрические величины на {1,2,...} обращением: ceil(log U / log(1-θ))"""
    theta = as_theta(theta)
    u = rng.random(size)
    xi = np.ceil(np.log1p(-u) / math.log1p(-theta.value))
    return np.maximum(xi, 1).astype(np.int64)


def gap_probability(l: int, rate: float, c: float, tol: float = None) -> float:
    """
    ∫_{-∞}^{c} f_l(w)·exp(-rate·(c-w)) dw = P(W < c < W + ζ) для W ~ f_l
    и независимой ζ ~ Exp(rate); квадратура на окне [c - 60/l - 40, c].
    """
    tol = settings.quad_tol if tol is None else tol
    lower = c - 60.0 / l - settings.quad_window
    points = [0.0] if lower < 0.0 < c else None

    log_norm = float(special.gammaln(l))

    def integrand(w):
        if w < -700.0:
            return 0.0
        return math.exp(-l * w - math.exp(-w) - log_norm - rate * (c - w))

    value, abserr = integrate.quad(integrand, lower, c, epsabs=tol * 1e-2, epsrel=1e-12, limit=200, points=points)
    if abserr > tol:
        logger.warning("Квадратура не достигла допуска", l=l, c=c, abserr=abserr, tol=tol)
        raise CertificationError(f"quadrature error {abserr:.3e} exceeds tolerance {tol:.1e}", bound=abserr)
    return min(max(value, 0.0), 1.0)


def split_seeds(seed: int, count: int) -> List[int]:
    """Независимые дочерние сиды через SeedSequence.spawn (по одному на задачу)"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def empirical_dist(samples: np.ndarray) -> DiscreteDist:
    """Эмпирический закон выборки; строки двумерного массива трактуются как пары"""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        values, counts = np.unique(samples, return_counts=True)
        support = values.tolist()
    else:
        values, counts = np.unique(samples, axis=0, return_counts=True)
        support = [tuple(row) for row in values.tolist()]
    total = counts.sum()
    return DiscreteDist(support=support, mass=(counts / total).tolist())
