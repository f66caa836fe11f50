import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, List, Optional, Union

from config.settings import settings
from ..core.errors import OutputError
from ..core.simulator import Trajectory
from ..models.result_models import SweepRow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_number(value: Optional[float], digits: Optional[int] = None) -> str:
    """有限浮点数按有效位数输出，None 输出空串"""
    if value is None:
        return ""
    digits = settings.csv_significant_digits if digits is None else digits
    return f"{float(value):.{digits}g}"


def sanitize(data: Any) -> Any:
    """递归地把 inf / nan 替换为 None，使结果是合法 JSON"""
    if isinstance(data, float):
        return data if math.isfinite(data) else None
    if isinstance(data, dict):
        return {key: sanitize(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [sanitize(value) for value in data]
    return data


def to_json_text(data: Any) -> str:
    """UTF-8 JSON 文本（缩进 2，末尾换行）"""
    return json.dumps(sanitize(data), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path}")
    return path


def _write_rows(path: PathLike, header: List[str], rows: Iterable[List[str]]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path}")
    return path


def write_json(path: PathLike, data: Any) -> Path:
    """写 JSON 文件"""
    return _write_text(path, to_json_text(data))


def write_trajectory_csv(path: PathLike, trajectory: Trajectory) -> Path:
    """
    写轨迹 CSV，表头 t,x1,...,xn,norm，每个网格点一行

    Args:
        path: 输出路径
        trajectory: 轨迹

    Returns:
        Path: 写入的文件
    """
    n = trajectory.states.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["norm"]
    norms = trajectory.norms()
    rows = (
        [format_number(t)] + [format_number(v) for v in state] + [format_number(norm)]
        for t, state, norm in zip(trajectory.times, trajectory.states, norms)
    )
    return _write_rows(path, header, rows)


def write_sweep_csv(path: PathLike, rows: Iterable[SweepRow]) -> Path:
    """写 η 扫描表，表头 eta,C,D,verdict_D"""
    lines = (
        [format_number(r.eta), format_number(r.C), format_number(r.D), "true" if r.verdict_D else "false"]
        for r in rows
    )
    return _write_rows(path, ["eta", "C", "D", "verdict_D"], lines)
