"""
Запись артефактов: CSV с комментарием-метаданными в первой строке и JSON с
теми же полями. Одинаковые входы дают побайтно одинаковый вывод.
"""
import json
import sys
from contextlib import contextmanager
from typing import Any, Dict, List, Sequence

from config import settings
from election.errors import ConfigError


def format_value(value: Any) -> str:
    """Вещественные числа с 17 значащими цифрами, остальное как есть"""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return "inf"
    return str(value)


def _plain(value: Any) -> Any:
    """numpy-скаляры и кортежи в типы, понятные json"""
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


@contextmanager
def _open_output(path: str):
    if path in (None, "-"):
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        yield handle


def _metadata(command: str, theta: float, seed: int, extra: Dict[str, Any]) -> Dict[str, Any]:
    meta = {
        "schema_version": settings.schema_version,
        "command": command,
        "theta": theta,
        "seed": seed,
    }
    meta.update(extra or {})
    return meta


def render_csv(meta: Dict[str, Any], columns: Sequence[str], rows: List[Sequence[Any]]) -> str:
    first = ", ".join(f"{key}={format_value(_plain(value))}" for key, value in meta.items())
    lines = [f"# {first}", ",".join(columns)]
    lines += [",".join(format_value(_plain(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def render_json(meta: Dict[str, Any], columns: Sequence[str], rows: List[Sequence[Any]]) -> str:
    payload = {key: _plain(value) for key, value in meta.items()}
    payload["columns"] = list(columns)
    payload["rows"] = [[_plain(v) for v in row] for row in rows]
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def emit(
    command: str,
    theta: float,
    seed: int,
    columns: Sequence[str],
    rows: List[Sequence[Any]],
    output_format: str = "csv",
    output: str = "-",
    extra: Dict[str, Any] = None,
) -> None:
    meta = _metadata(command, theta, seed, extra)
    if output_format == "csv":
        text = render_csv(meta, columns, rows)
    elif output_format == "json":
        text = render_json(meta, columns, rows)
    else:
        raise ConfigError(f"unknown output format {output_format!r}")
    with _open_output(output) as handle:
        handle.write(text)
