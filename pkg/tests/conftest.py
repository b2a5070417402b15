import math

import numpy as np
import pytest

from election.models import BackwardChainSpec, Theta


@pytest.fixture
def theta_half():
    return Theta(0.5)


@pytest.fixture
def spec_half():
    return BackwardChainSpec(theta=0.5, zeta1=0.5)


def within_se(estimate: float, expected: float, se: float, width: float = 5.0) -> bool:
    """Оценка Монте-Карло в пределах width стандартных ошибок"""
    return abs(estimate - expected) <= width * se + 1e-12


def binomial_se(p: float, runs: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 1e-300) / runs)


def pooled_counts(observed: dict, expected: dict, runs: int, min_expected: float = 5.0):
    """Сводит ячейки с малым ожиданием в одну и возвращает массивы для chisquare"""
    obs, exp = [], []
    rest_obs, rest_exp = 0.0, 0.0
    for key, p in expected.items():
        if p * runs >= min_expected:
            obs.append(observed.get(key, 0))
            exp.append(p * runs)
        else:
            rest_obs += observed.get(key, 0)
            rest_exp += p * runs
    rest_obs += sum(v for key, v in observed.items() if key not in expected)
    obs.append(rest_obs)
    exp.append(runs - sum(exp))
    obs, exp = np.asarray(obs, dtype=float), np.asarray(exp, dtype=float)
    keep = exp > 0
    return obs[keep], exp[keep]
