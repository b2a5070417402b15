# Пакет вероятностного анализа геометрических выборов лидера
from election.errors import CertificationError, ConfigError, ElectionError, StateError
from election.models import (
    BackwardChainSpec,
    CountState,
    DiscreteDist,
    ElectionOutcome,
    EntranceLaw,
    LimitVerdict,
    MaxState,
    NBoundaryPoint,
    Theta,
    YBoundaryPoint,
)

__all__ = [
    "ElectionError", "ConfigError", "StateError", "CertificationError",
    "Theta", "DiscreteDist", "MaxState", "ElectionOutcome", "YBoundaryPoint", "LimitVerdict",
    "NBoundaryPoint", "BackwardChainSpec", "CountState", "EntranceLaw",
]
