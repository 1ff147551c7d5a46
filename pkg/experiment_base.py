# experiment_base.py
"""
实验抽象基类
定义统一的实验配置与运行接口，供命令行、HTTP 服务和验收脚本共用
"""

import math
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional

from config import Config, ExperimentKind
from errors import (
    BadRadii,
    BadWindow,
    EpsOutOfRange,
    FracLabError,
    SOutOfRange,
    UnknownConfigKey,
    ValidationError,
    exit_code_for,
)
from reporting import Stopwatch, SweepReport, config_hash


class ExperimentStatus(Enum):
    """实验状态枚举"""
    PENDING = "pending"
    VALIDATING = "validating"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


SWEEP_MODES = ("to_half", "to_zero")
METHOD_ALIASES = {"flip": "flip-descent"}


@dataclass
class ExperimentConfig:
    """
    一次实验的完整参数

    JSON 配置文件与命令行参数都转换成这个结构（命令行覆盖文件），
    未知的键直接拒绝；settings 段覆盖 Config 的类属性
    """
    experiment: str
    shape: Optional[str] = None
    s: Optional[float] = None
    s_list: Optional[List[float]] = None
    eps: Optional[float] = None
    eps_list: Optional[List[float]] = None
    h: Optional[float] = None
    rt: Optional[float] = None
    window: Optional[str] = None
    radii: Optional[List[float]] = None
    thetas: Optional[List[float]] = None
    seed: int = 0
    mode: Optional[str] = None
    method: str = "maxflow"
    x0: Optional[List[float]] = None
    r: Optional[float] = None
    height: Optional[float] = None
    iters: Optional[int] = None
    ids: Optional[List[str]] = None
    out: Optional[str] = None
    report: Optional[str] = None
    record: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """从字典构建，键名中的 '-' 视为 '_'"""
        known = set(cls.field_names())
        normalized = {}
        for key, value in data.items():
            name = str(key).replace("-", "_")
            if name not in known:
                raise UnknownConfigKey(f"未知的配置键: {key}")
            normalized[name] = value
        if "experiment" not in normalized:
            raise ValidationError("配置缺少 experiment")
        return cls(**normalized)

    @classmethod
    def merged(cls, file_data: Optional[Dict[str, Any]], flags: Dict[str, Any]) -> "ExperimentConfig":
        """文件为底，命令行中非 None 的值覆盖"""
        data = dict(file_data or {})
        data.update({k: v for k, v in flags.items() if v is not None})
        return cls.from_dict(data)

    @property
    def kind(self) -> ExperimentKind:
        try:
            return ExperimentKind(str(self.experiment).strip().lower())
        except ValueError:
            raise ValidationError(f"未知的实验: {self.experiment}")

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def config_hash(self) -> str:
        """不含输出路径的参数哈希（同一参数写到不同位置哈希相同）"""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("out", "report", "record")}
        return config_hash(payload)

    def validate(self) -> "ExperimentConfig":
        """分发前校验数值范围；实验特有的上界（如 s < 1/2）由各模块自己检查"""
        _ = self.kind
        if self.s is not None:
            _check_open_unit(self.s, SOutOfRange, "s ∈ (0,1)")
        for s in self.s_list or []:
            _check_open_unit(s, SOutOfRange, "s_list 中的 s ∈ (0,1)")
        if self.eps is not None:
            _check_open_unit(self.eps, EpsOutOfRange, "ε ∈ (0,1)")
        for eps in self.eps_list or []:
            _check_open_unit(eps, EpsOutOfRange, "eps_list 中的 ε ∈ (0,1)")
        if self.h is not None and not (self.h > 0.0 and math.isfinite(self.h)):
            raise BadWindow(f"h 必须为正: {self.h}")
        for name in ("rt", "r", "height"):
            value = getattr(self, name)
            if value is not None and not value > 0.0:
                raise BadRadii(f"{name} 必须为正: {value}")
        if self.radii is not None and (not self.radii or min(self.radii) <= 0.0):
            raise BadRadii(f"radii 必须非空且全为正: {self.radii}")
        if self.thetas is not None:
            if len(self.thetas) != 2 or not (-1.0 < self.thetas[0] < self.thetas[1] < 1.0):
                raise ValidationError(f"thetas 需要 −1 < θ₁ < θ₂ < 1: {self.thetas}")
        if self.iters is not None and int(self.iters) < 1:
            raise ValidationError(f"iters 至少为 1: {self.iters}")
        if self.mode is not None and self.mode not in SWEEP_MODES:
            raise ValidationError(f"未知的极限模式: {self.mode}（{' 或 '.join(SWEEP_MODES)}）")
        self.method = METHOD_ALIASES.get(self.method, self.method)
        if not isinstance(self.settings, dict):
            raise ValidationError(f"settings 必须是对象: {self.settings!r}")
        for key, value in self.settings.items():
            Config.coerce_setting(key, value)
        if self.shape is not None:
            from shapes import parse_shape
            parse_shape(self.shape)
        if self.window is not None:
            from shapes import Window
            Window.parse(self.window, self.h or 1.0 / 32)
        return self


def _check_open_unit(value: float, error: type, label: str) -> None:
    if not (0.0 < float(value) < 1.0):
        raise error(f"需要 {label}, 收到 {value}")


@dataclass
class ExperimentResult:
    """实验结果：表格报告、JSON 记录和写出的文件"""
    kind: ExperimentKind
    report: Optional[SweepReport] = None
    record: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    wall_time: float = 0.0

    def to_payload(self) -> Dict[str, Any]:
        payload = {"experiment": self.kind.value, "record": self.record,
                   "artifacts": list(self.artifacts), "wall_time_s": self.wall_time}
        if self.report is not None:
            payload["columns"] = list(self.report.columns)
            payload["rows"] = self.report.row_dicts()
            payload["metadata"] = self.report.metadata
        return payload


class ExperimentBase(ABC):
    """
    实验抽象基类

    子类只实现 _execute；基类负责：
    - 参数校验
    - 状态管理
    - 统计信息
    - 错误计数与重新抛出
    - 报告输出（CSV + 元数据旁车）
    """

    kind: ExperimentKind = ExperimentKind.PERIMETER

    def __init__(self, config: ExperimentConfig, debug: bool = False):
        self.config = config
        self.debug = debug or Config.DEBUG_MODE

        # 状态管理
        self._status = ExperimentStatus.PENDING
        self._status_lock = threading.Lock()

        # 统计信息
        self._stats = {
            "start_time": None,
            "end_time": None,
            "total_runs": 0,
            "total_rows": 0,
            "total_files": 0,
            "total_errors": 0,
            "last_error": None,
        }
        self._stats_lock = threading.Lock()
        self._watch = Stopwatch()

        if self.debug:
            print(f"[Experiment] 初始化实验: {self.kind.value}")

    @abstractmethod
    def _execute(self) -> ExperimentResult:
        """执行实验并写出产物"""
        pass

    # 运行

    def run(self) -> ExperimentResult:
        """校验 → 执行 → 统计；库异常计数后原样抛出，由调用方映射为退出码"""
        self._set_status(ExperimentStatus.VALIDATING)
        self._watch = Stopwatch()
        with self._stats_lock:
            self._stats["start_time"] = time.time()
            self._stats["total_runs"] += 1
        try:
            self.config.validate()
            with Config.overridden(self.config.settings):
                self._set_status(ExperimentStatus.RUNNING)
                result = self._execute()
        except Exception as e:
            self._handle_error(e, f"{self.kind.value} ")
            raise
        result.wall_time = self._watch.elapsed
        if result.report is not None:
            self._increment_stat("total_rows", len(result.report))
        self._increment_stat("total_files", len(result.artifacts))
        with self._stats_lock:
            self._stats["end_time"] = time.time()
        self._set_status(ExperimentStatus.COMPLETED)
        if self.debug:
            print(f"[Experiment] ✅ {self.kind.value} 完成, 用时 {result.wall_time:.2f}s")
        return result

    def stream_rows(self) -> Iterator[Dict[str, Any]]:
        """逐行产出报告（WebSocket 使用），最后一条为摘要"""
        result = self.run()
        if result.report is not None:
            for row in result.report.row_dicts():
                yield {"type": "row", "row": row}
        yield {"type": "summary", **result.to_payload()}

    # 输出

    def _flags(self) -> Dict[str, Any]:
        return self.config.to_dict()

    def _write_report(self, result: ExperimentResult, path: Optional[str] = None,
                      wall_time: Optional[float] = None) -> None:
        path = path or self.config.out
        if path is None or result.report is None:
            return
        result.report.metadata.setdefault("config_hash", self.config.config_hash())
        result.report.metadata.setdefault("numeric_config", Config.get_numeric_config())
        wall_time = self._watch.elapsed if wall_time is None else wall_time
        meta_path = result.report.write_csv(path, flags=self._flags(), wall_time=wall_time)
        result.artifacts.extend([path, meta_path])
        print(f"[Experiment] ✅ 写出 {path}")

    # 状态管理方法

    def get_status(self) -> ExperimentStatus:
        with self._status_lock:
            return self._status

    def _set_status(self, status: ExperimentStatus) -> None:
        with self._status_lock:
            old_status = self._status
            self._status = status
            if self.debug and old_status != status:
                print(f"[Experiment] 状态变化: {old_status.value} -> {status.value}")

    def is_healthy(self) -> bool:
        return self.get_status() != ExperimentStatus.FAILED

    # 统计信息方法

    def get_stats(self) -> Dict[str, Any]:
        with self._stats_lock:
            stats = self._stats.copy()
        if stats["start_time"]:
            end = stats["end_time"] or time.time()
            stats["runtime"] = max(0.0, end - stats["start_time"])
        else:
            stats["runtime"] = 0
        stats["status"] = self.get_status().value
        stats["is_healthy"] = self.is_healthy()
        return stats

    def reset_stats(self) -> None:
        with self._stats_lock:
            self._stats = {
                "start_time": None,
                "end_time": None,
                "total_runs": 0,
                "total_rows": 0,
                "total_files": 0,
                "total_errors": 0,
                "last_error": None,
            }
        if self.debug:
            print("[Experiment] 统计信息已重置")

    def _increment_stat(self, stat_name: str, increment: int = 1) -> None:
        with self._stats_lock:
            if stat_name in self._stats:
                self._stats[stat_name] += increment

    def _handle_error(self, error: Exception, context: str = "") -> None:
        """计数并置为 FAILED；退出码由异常类型决定"""
        self._increment_stat("total_errors")
        with self._stats_lock:
            self._stats["last_error"] = f"{type(error).__name__}: {error}"
        self._set_status(ExperimentStatus.FAILED)
        tag = "⚠️" if isinstance(error, FracLabError) else "❌"
        print(f"[Experiment] {tag} {context}错误 (exit {exit_code_for(error)}): {error}")

    def print_stats(self) -> None:
        stats = self.get_stats()
        print(f"\n[Experiment] 📊 统计信息 ({self.kind.value}):")
        print(f"  状态: {stats['status']}")
        print(f"  运行时间: {stats['runtime']:.1f}s")
        print(f"  运行次数: {stats['total_runs']}")
        print(f"  输出行数: {stats['total_rows']}")
        print(f"  写出文件: {stats['total_files']}")
        print(f"  错误次数: {stats['total_errors']}")
        if stats["last_error"]:
            print(f"  最近错误: {stats['last_error']}")
        print(f"  健康状态: {'✅ 健康' if stats['is_healthy'] else '❌ 不健康'}")
        print()
