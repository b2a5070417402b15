import math
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

NORMALIZATION_TOL = 1e-12

State = Union[int, Tuple[int, ...]]


class Theta(BaseModel):
    """Вероятность выпадения орла, θ ∈ (0,1)"""
    model_config = ConfigDict(frozen=True)

    value: float

    def __init__(self, value: float = None, **data):
        if value is not None:
            data["value"] = value
        super().__init__(**data)

    @field_validator("value")
    @classmethod
    def _open_interval(cls, v: float) -> float:
        if not (0.0 < v < 1.0) or math.isnan(v):
            raise ValueError(f"theta must lie in (0,1), got {v}")
        return float(v)

    @property
    def survival(self) -> float:
        """1 - θ: вероятность остаться в игре на одном раунде"""
        return 1.0 - self.value

    def __float__(self) -> float:
        return self.value


def as_theta(theta: Union[Theta, float]) -> Theta:
    if isinstance(theta, Theta):
        return theta
    return Theta(float(theta))


class DiscreteDist(BaseModel):
    """Конечная таблица вероятностей с явно учтённой массой хвоста"""
    model_config = ConfigDict(frozen=True)

    support: List[Any]
    mass: List[float]
    tail_bound: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        if len(self.support) != len(self.mass):
            raise ValueError("support and mass differ in length")
        for prev, nxt in zip(self.support, self.support[1:]):
            if not prev < nxt:
                raise ValueError(f"support not strictly increasing at {prev!r}, {nxt!r}")
        if any(p < 0.0 or math.isnan(p) for p in self.mass):
            raise ValueError("negative or NaN mass")
        total = math.fsum(self.mass) + self.tail_bound
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"masses plus tail sum to {total!r}, not 1")
        return self

    @classmethod
    def from_mapping(cls, table: Dict[Any, float], tail_bound: float = 0.0) -> "DiscreteDist":
        keys = sorted(table)
        return cls(support=keys, mass=[float(table[x]) for x in keys], tail_bound=tail_bound)

    def as_dict(self) -> Dict[Any, float]:
        return dict(zip(self.support, self.mass))

    def prob(self, x: Any) -> float:
        return self.as_dict().get(x, 0.0)

    def total(self) -> float:
        return math.fsum(self.mass)

    def mean(self) -> float:
        return math.fsum(x * p for x, p in zip(self.support, self.mass)) / self.total()

    def shift(self, offset: int) -> "DiscreteDist":
        """Сдвиг целочисленного носителя на offset"""
        return DiscreteDist(
            support=[x + offset for x in self.support],
            mass=list(self.mass),
            tail_bound=self.tail_bound,
        )

    def total_variation(self, other: "DiscreteDist") -> float:
        """Расстояние по вариации (хвосты считаются непересекающимися)"""
        a, b = self.as_dict(), other.as_dict()
        diff = math.fsum(abs(a.get(x, 0.0) - b.get(x, 0.0)) for x in set(a) | set(b))
        return 0.5 * (diff + self.tail_bound + other.tail_bound)


class MaxState(NamedTuple):
    """Состояние (m, i, k) пространственно-временной цепи максимумов"""
    m: int
    i: int
    k: int


class ElectionOutcome(BaseModel):
    rounds: int = Field(ge=0)
    winners: int = Field(ge=1)
    rounds_played: int = Field(ge=0)
    # (раунд, число оставшихся после раунда)
    trajectory: Optional[List[Tuple[int, int]]] = None


class YBoundaryPoint(BaseModel):
    """Граничная точка (J, α); J=None означает ∞"""
    model_config = ConfigDict(frozen=True)

    J: Optional[int] = None
    alpha: float

    @field_validator("alpha")
    @classmethod
    def _unit_interval(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"alpha must lie in [0,1], got {v}")
        return float(v)

    @model_validator(mode="after")
    def _check_J(self):
        if self.J is not None:
            if self.J < 1:
                raise ValueError(f"J must be >= 1, got {self.J}")
            # из (n,1,l) достижимо только l=n
            if self.J == 1 and self.alpha != 1.0:
                raise ValueError("J=1 is a boundary point only together with alpha=1")
        return self

    @property
    def is_infinite(self) -> bool:
        return self.J is None

    def label(self) -> str:
        return f"({'inf' if self.J is None else self.J},{self.alpha:g})"


class LimitVerdict(BaseModel):
    converged: bool
    point: Optional[YBoundaryPoint] = None
    j_estimate: Optional[int] = None
    j_diverges: bool = False
    alpha_estimate: float
    alpha_range: float
    reason: str


class NBoundaryPoint(BaseModel):
    """Точка ℝ* = ℝ ⊔ {⋄}; z=None означает ⋄"""
    model_config = ConfigDict(frozen=True)

    z: Optional[float] = None

    @field_validator("z")
    @classmethod
    def _finite(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not math.isfinite(v):
            raise ValueError("z must be a finite real; use the diamond point instead")
        return v

    @classmethod
    def real(cls, z: float) -> "NBoundaryPoint":
        return cls(z=float(z))

    @classmethod
    def diamond(cls) -> "NBoundaryPoint":
        return cls(z=None)

    @property
    def is_diamond(self) -> bool:
        return self.z is None


class BackwardChainSpec(BaseModel):
    """Опорная цепь с обратным прореживанием и маргиналами Geo0(ζ_n)"""
    model_config = ConfigDict(frozen=True)

    theta: Theta
    zeta1: Optional[float] = None

    @field_validator("theta", mode="before")
    @classmethod
    def _coerce_theta(cls, v):
        if isinstance(v, (int, float)):
            return Theta(float(v))
        return v

    @model_validator(mode="after")
    def _default_zeta(self):
        if self.zeta1 is None:
            object.__setattr__(self, "zeta1", self.theta.value)
        if not 0.0 < self.zeta1 < 1.0:
            raise ValueError(f"zeta1 must lie in (0,1), got {self.zeta1}")
        return self


class CountState(BaseModel):
    """Состояние (n, i) цепи численностей; 0 поглощающее"""
    model_config = ConfigDict(frozen=True)

    n: int
    i: int = Field(ge=0)


class EntranceLaw(BaseModel):
    """Закон абсолютного момента входа в {0,1} для старта j_k в момент -k+1"""
    k: int
    j_k: int
    z: float
    achieved_z: float
    law: DiscreteDist
