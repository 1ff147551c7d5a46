# reporting.py
"""
扫描报告与输出文件

- SweepReport: 命名列的数值表 + 元数据
- CSV 只含表头和数据行（重复运行字节一致），元数据写入 <out>.meta.json
- 纯文本矩阵、分层矩阵、JSON 结果记录
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import Config


def format_float(value: Any) -> str:
    """浮点数统一 12 位有效数字"""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{Config.FLOAT_DIGITS}g")
    return str(value)


def config_hash(payload: Dict[str, Any]) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def extrapolate_linear(xs: Sequence[float], ys: Sequence[float], x_target: float, last: int = 3) -> float:
    """最后 last 个点的一次最小二乘拟合，在 x_target 处取值"""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size == 0:
        raise ValueError("没有数据点可外推")
    if x.size == 1:
        return float(y[0])
    order = np.argsort(np.abs(x - x_target))[:last]
    slope, intercept = np.polyfit(x[order], y[order], 1)
    return float(slope * x_target + intercept)


@dataclass
class SweepReport:
    """参数扫描的表格记录"""
    columns: Sequence[str]
    rows: List[tuple] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def add_row(self, *values, **named) -> None:
        if named:
            if values:
                raise ValueError("add_row 不能同时使用位置参数和关键字参数")
            missing = [c for c in self.columns if c not in named]
            if missing:
                raise ValueError(f"缺少列: {', '.join(missing)}")
            values = tuple(named[c] for c in self.columns)
        if len(values) != len(self.columns):
            raise ValueError(f"列数不一致: 期望 {len(self.columns)}, 收到 {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name: str) -> np.ndarray:
        index = list(self.columns).index(name)
        return np.asarray([row[index] for row in self.rows], dtype=float)

    def row_dicts(self) -> List[Dict[str, Any]]:
        return [dict(zip(self.columns, row)) for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv_text(self) -> str:
        lines = [",".join(self.columns)]
        lines.extend(",".join(format_float(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str, flags: Optional[Dict[str, Any]] = None,
                  wall_time: Optional[float] = None) -> str:
        """写 CSV 和元数据旁车文件，返回旁车路径"""
        _ensure_parent(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())
        meta = dict(self.metadata)
        meta.setdefault("code_version", Config.VERSION)
        if flags is not None:
            meta["flags"] = flags
            meta["config_hash"] = config_hash(flags)
        if wall_time is not None:
            meta["wall_time_s"] = wall_time
        meta_path = path + ".meta.json"
        write_json(meta_path, meta)
        return meta_path

    def print_table(self, tag: str = "Report") -> None:
        print(f"[{tag}] 📊 " + " | ".join(self.columns))
        for row in self.rows:
            print(f"[{tag}]    " + " | ".join(format_float(v) for v in row))


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    return value


def write_json(path: str, payload: Dict[str, Any]) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonable(payload), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def matrix_text(values: np.ndarray, header: Optional[str] = None) -> str:
    """二维数组按窗口顶部在前输出（与 PGM 行序一致）"""
    arr = np.asarray(values, dtype=float)
    rows = arr[np.newaxis, :] if arr.ndim == 1 else arr.T[::-1]
    lines = [] if header is None else [f"# {header}"]
    lines.extend(" ".join(format_float(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_matrix(path: str, values: np.ndarray, header: Optional[str] = None) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(matrix_text(values, header))


def write_levels(path: str, heights: Iterable[float], slabs: Iterable[np.ndarray]) -> None:
    """分层矩阵：每层一行表头 '# level k t=...'"""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        for k, (t, slab) in enumerate(zip(heights, slabs)):
            fh.write(matrix_text(slab, header=f"level {k} t={format_float(t)}"))


class Stopwatch:
    """墙钟计时（只进入元数据，不进入 CSV）"""

    def __init__(self):
        self._start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._start
