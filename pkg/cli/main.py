"""
Пакетный интерфейс: точные таблицы, симуляции, ядра и сканы периодичности.

    python -m cli.main exact-ml --n 2 --theta 0.5
    python -m cli.main periodicity --theta 0.5 --n-geom 2 --k 8..16

Коды выхода: 0 успех, 1 непрошедший selftest, 2 ошибка конфигурации,
3 не удалось гарантировать точность (хвост или квадратура).
"""
import argparse
import math
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config import settings
from election.errors import CertificationError, ConfigError, StateError
from election.maxima_boundary import (
    ExtendedKernelY,
    finite_kernel_y,
    h_transform_row,
    harmonic_residual,
    is_state,
    simulate_conditioned_y,
)
from election.maxima_chain import (
    election_law,
    joint_dist_ml,
    prob_unique_winner,
    rounds_dist,
    simulate_elections,
    simulate_maxima,
    simulate_y_path,
)
from election.models import BackwardChainSpec, MaxState, NBoundaryPoint, Theta, YBoundaryPoint
from election.numerics import empirical_dist, split_seeds
from election.participants_boundary import (
    entrance_duration,
    extended_kernel_n,
    finite_kernel_n,
    periodicity_scan,
    subsequence_report,
)
from election.participants_chain import simulate_n_path, simulate_n_paths
from cli.emitters import emit
from log_config import setup_logging

logger = structlog.get_logger(__name__)

COMMANDS = ("exact-ml", "simulate", "kernel-y", "htransform-y", "kernel-n", "entrance", "periodicity", "selftest")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3


class RunConfig(BaseModel):
    """Проверенная конфигурация одного запуска"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    command: str
    theta: Theta
    seed: int = Field(ge=0, lt=2**64)
    output_format: str = "csv"
    output: str = "-"
    params: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("command")
    @classmethod
    def _known_command(cls, v: str) -> str:
        if v not in COMMANDS:
            raise ValueError(f"unknown command {v!r}")
        return v

    @field_validator("theta", mode="before")
    @classmethod
    def _parse_theta(cls, v):
        if isinstance(v, (str, int, float)):
            return Theta(float(v))
        return v

    @field_validator("output_format")
    @classmethod
    def _known_format(cls, v: str) -> str:
        if v not in ("csv", "json"):
            raise ValueError(f"output format must be csv or json, got {v!r}")
        return v


def parse_range(text: str) -> List[int]:
    """Целочисленный диапазон 'a..b' (включительно) или одно число"""
    try:
        if ".." in text:
            start, stop = text.split("..", 1)
            values = list(range(int(start), int(stop) + 1))
        else:
            values = [int(text)]
    except ValueError:
        raise ConfigError(f"cannot parse integer range {text!r}")
    if not values:
        raise ConfigError(f"empty range {text!r}")
    return values


def parse_j(text: Optional[str]) -> Optional[int]:
    """J: натуральное число или inf"""
    if text is None or text.lower() in ("inf", "infinity", "∞"):
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"J must be a positive integer or inf, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Вероятностный анализ геометрических выборов лидера")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--theta", default="0.5", help="Вероятность орла θ ∈ (0,1)")
    common.add_argument("--seed", type=int, default=None, help="Сид (по умолчанию GEOLEADER_SEED)")
    common.add_argument("--format", dest="output_format", choices=["csv", "json"], default=None)
    common.add_argument("--output", default="-", help="Путь к файлу или '-' для stdout")
    common.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact-ml", parents=[common], help="Точный закон (M_n, L_n)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--what", choices=["joint", "rounds", "election", "unique"], default="joint")
    p.add_argument("--tail-eps", type=float, default=None)

    p = sub.add_parser("simulate", parents=[common], help="Монте-Карло")
    p.add_argument(
        "--kind", choices=["election", "maxima", "participants", "y-path", "n-path"], default="election"
    )
    p.add_argument("--k", type=int, default=10, help="Размер группы (election, participants, n-path)")
    p.add_argument("--n", type=int, default=10, help="Размер выборки (maxima, y-path)")
    p.add_argument("--runs", type=int, default=None)

    p = sub.add_parser("kernel-y", parents=[common], help="Ядра цепи максимумов")
    p.add_argument("--J", default="inf")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--max-m", type=int, default=5)
    p.add_argument("--max-i", type=int, default=5)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--j", type=int, default=None)
    p.add_argument("--l", type=int, default=None)

    p = sub.add_parser("htransform-y", parents=[common], help="h-преобразование и его симуляция")
    p.add_argument("--J", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--steps", type=int, default=0)

    p = sub.add_parser("kernel-n", parents=[common], help="Ядра цепи численностей")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--z", type=float)
    group.add_argument("--diamond", action="store_true")
    p.add_argument("--zeta1", type=float, default=None)
    p.add_argument("--max-m", type=int, default=5)
    p.add_argument("--max-i", type=int, default=5)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--j", type=float, default=None)

    p = sub.add_parser("entrance", parents=[common], help="Законы момента входа в {0,1}")
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--k", default="10..20")
    p.add_argument("--mc-runs", type=int, default=None, help="Монте-Карло вместо точного закона")

    p = sub.add_parser("periodicity", parents=[common], help="P(L_n = 1) и подпоследовательности")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--n-geom", type=int, help="N смещений (1-θ)^{-s/N}, s = 0..N-1")
    group.add_argument("--offsets", help="Смещения через запятую")
    group.add_argument("--n-range", help="Диапазон n вида a..b")
    p.add_argument("--k", default="8..16")

    sub.add_parser("selftest", parents=[common], help="Быстрые детерминированные проверки")
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    shared = {"command", "theta", "seed", "output_format", "output", "log_level"}
    params = {key: value for key, value in vars(args).items() if key not in shared}
    return RunConfig(
        command=args.command,
        theta=args.theta,
        seed=settings.seed if args.seed is None else args.seed,
        output_format=args.output_format or settings.output_format,
        output=args.output,
        params=params,
    )


Table = Tuple[List[str], List[tuple], Dict[str, Any]]


def run_exact_ml(config: RunConfig) -> Table:
    p = config.params
    n, theta = p["n"], config.theta
    if p["what"] == "unique":
        return ["n", "p_unique"], [(n, prob_unique_winner(n, theta))], {}
    if p["what"] == "rounds":
        dist = rounds_dist(n, theta, p["tail_eps"])
        return ["r", "mass"], list(zip(dist.support, dist.mass)), {"tail_bound": dist.tail_bound}
    if p["what"] == "election":
        dist = election_law(n, theta, p["tail_eps"])
        rows = [(r, l, mass) for (r, l), mass in zip(dist.support, dist.mass)]
        return ["rounds", "winners", "mass"], rows, {"tail_bound": dist.tail_bound}
    dist = joint_dist_ml(n, theta, p["tail_eps"])
    rows = [(j, l, mass) for (j, l), mass in zip(dist.support, dist.mass)]
    extra = {"tail_bound": dist.tail_bound, "p_unique": prob_unique_winner(n, theta)}
    return ["j", "l", "mass"], rows, extra


def run_simulate(config: RunConfig) -> Table:
    p = config.params
    # одиночные траектории не зависят от --runs
    if p["kind"] == "y-path":
        path = simulate_y_path(p["n"], config.theta, config.seed)
        rows = [(t, m, l) for t, (m, l) in enumerate(path, start=1)]
        return ["t", "M", "L"], rows, {"n": p["n"]}
    if p["kind"] == "n-path":
        path = simulate_n_path(p["k"], config.theta, config.seed)
        return ["t", "N"], list(enumerate(path)), {"j_start": p["k"]}
    runs = settings.mc_runs if p["runs"] is None else p["runs"]
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    if p["kind"] == "election":
        batch = simulate_elections(p["k"], config.theta, runs, config.seed)
        dist = empirical_dist(np.stack([batch.rounds, batch.winners], axis=1))
        rows = [(r, w, mass) for (r, w), mass in zip(dist.support, dist.mass)]
        return ["rounds", "winners", "freq"], rows, {"runs": runs, "k": p["k"]}
    if p["kind"] == "maxima":
        maxima, counts = simulate_maxima(p["n"], config.theta, runs, config.seed)
        dist = empirical_dist(np.stack([maxima, counts], axis=1))
        rows = [(j, l, mass) for (j, l), mass in zip(dist.support, dist.mass)]
        return ["j", "l", "freq"], rows, {"runs": runs, "n": p["n"]}
    paths = simulate_n_paths(p["k"], config.theta, runs, config.seed)
    dist = empirical_dist(np.argmax(paths <= 1, axis=1) + 1)
    return ["t", "freq"], list(zip(dist.support, dist.mass)), {"runs": runs, "j_start": p["k"]}


def _y_states(max_m: int, max_i: int) -> List[MaxState]:
    states = []
    for m in range(1, max_m + 1):
        for i in range(1, max_i + 1):
            for k in range(1, m + 1):
                if is_state((m, i, k)):
                    states.append(MaxState(m, i, k))
    return states


def run_kernel_y(config: RunConfig) -> Table:
    p = config.params
    b = YBoundaryPoint(J=parse_j(p["J"]), alpha=p["alpha"])
    kernel = ExtendedKernelY(b, config.theta)
    target = None
    if p["n"] is not None:
        if p["j"] is None or p["l"] is None:
            raise ConfigError("--n needs --j and --l")
        target = (p["n"], p["j"], p["l"])

    columns = ["m", "i", "k", "value", "residual"] + (["finite"] if target else [])
    rows = []
    for x in _y_states(p["max_m"], p["max_i"]):
        row = (x.m, x.i, x.k, kernel(x), harmonic_residual(kernel, x, config.theta))
        if target:
            row += (finite_kernel_y(x, target, config.theta) if x.m < target[0] else float("nan"),)
        rows.append(row)
    return columns, rows, {"J": b.J, "alpha": b.alpha}


def run_htransform_y(config: RunConfig) -> Table:
    p = config.params
    J = parse_j(p["J"])
    if J is None:
        raise ConfigError("htransform-y needs a finite J")
    b = YBoundaryPoint(J=J, alpha=p["alpha"])
    start = MaxState(p["m"], p["i"], p["k"])
    if p["steps"] > 0:
        path = simulate_conditioned_y(b, config.theta, p["steps"], config.seed, start=start)
        rows = [(step, x.m, x.i, x.k) for step, x in enumerate(path)]
        return ["step", "m", "i", "k"], rows, {"J": J, "alpha": b.alpha}
    row = h_transform_row(start, b, config.theta)
    rows = [(y.m, y.i, y.k, mass) for y, mass in zip(row.support, row.mass)]
    return ["m", "i", "k", "prob"], rows, {"J": J, "alpha": b.alpha, "from": f"{start.m}:{start.i}:{start.k}"}


def run_kernel_n(config: RunConfig) -> Table:
    p = config.params
    spec = BackwardChainSpec(theta=config.theta, zeta1=p["zeta1"])
    b = NBoundaryPoint.diamond() if p["diamond"] else NBoundaryPoint.real(p["z"])
    with_finite = p["n"] is not None and p["j"] is not None
    columns = ["m", "i", "value"] + (["finite"] if with_finite else [])
    rows = []
    for m in range(1, p["max_m"] + 1):
        for i in range(1, p["max_i"] + 1):
            row = (m, i, extended_kernel_n(spec, m, i, b))
            if with_finite:
                row += (finite_kernel_n(spec, m, i, p["n"], p["j"]) if m < p["n"] else float("nan"),)
            rows.append(row)
    return columns, rows, {"z": b.z, "zeta1": spec.zeta1}


def run_entrance(config: RunConfig) -> Table:
    p = config.params
    levels = parse_range(p["k"])
    seeds = split_seeds(config.seed, len(levels))
    rows = []
    for k, seed in zip(levels, seeds):
        if p["mc_runs"] is None:
            law = entrance_duration(p["z"], config.theta, k)
        else:
            law = entrance_duration(p["z"], config.theta, k, seed=seed, exact=False, runs=p["mc_runs"])
        tail = law.law.tail_bound
        rows += [(k, law.j_k, t, mass, tail) for t, mass in zip(law.law.support, law.law.mass)]
    return ["k", "j_k", "t", "mass", "tail_bound"], rows, {"z": p["z"]}


def run_periodicity(config: RunConfig) -> Table:
    p = config.params
    theta = config.theta
    if p["n_range"]:
        rows = periodicity_scan(theta, parse_range(p["n_range"]))
        return ["n", "p_unique"], rows, {}
    if p["offsets"]:
        try:
            offsets = [float(v) for v in p["offsets"].split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse offsets {p['offsets']!r}")
    else:
        if p["n_geom"] < 1:
            raise ConfigError("--n-geom must be >= 1")
        offsets = [math.exp(-s / p["n_geom"] * math.log1p(-theta.value)) for s in range(p["n_geom"])]
    report = subsequence_report(theta, offsets, parse_range(p["k"]))
    rows = [(offset, k, n, value) for offset in offsets for k, n, value in report[offset]]
    return ["offset", "k", "n", "p_unique"], rows, {}


def run_selftest_command(config: RunConfig) -> Table:
    from cli.selftest import run_checks

    results = run_checks()
    rows = [(name, passed, detail) for name, passed, detail in results]
    return ["check", "passed", "detail"], rows, {"passed": all(r[1] for r in results)}


HANDLERS = {
    "exact-ml": run_exact_ml,
    "simulate": run_simulate,
    "kernel-y": run_kernel_y,
    "htransform-y": run_htransform_y,
    "kernel-n": run_kernel_n,
    "entrance": run_entrance,
    "periodicity": run_periodicity,
    "selftest": run_selftest_command,
}


def run(config: RunConfig) -> int:
    """Выполняет одну подкоманду и пишет артефакт"""
    columns, rows, extra = HANDLERS[config.command](config)
    emit(
        config.command,
        config.theta.value,
        config.seed,
        columns,
        rows,
        output_format=config.output_format,
        output=config.output,
        extra=extra,
    )
    if config.command == "selftest" and not extra["passed"]:
        return EXIT_FAILED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = make_config(args)
        logger.info("Запуск подкоманды", command=config.command, theta=config.theta.value, seed=config.seed)
        return run(config)
    except (ConfigError, StateError, ValidationError) as e:
        logger.error("Ошибка конфигурации", error=str(e))
        return EXIT_CONFIG
    except CertificationError as e:
        logger.error("Точность не гарантирована", error=str(e), bound=e.bound)
        return EXIT_CERTIFICATION


if __name__ == "__main__":
    sys.exit(main())
