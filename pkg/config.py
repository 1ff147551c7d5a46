# config.py
"""
配置管理模块
数值实验的默认参数集中在这里
环境变量只读取 FRACLAB_THREADS（线程上限），其余参数由 JSON 配置文件和命令行覆盖
"""

import os
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional, Tuple
from enum import Enum

# 尝试导入dotenv，如果未安装则忽略
try:
    from dotenv import load_dotenv
    load_dotenv()
    DOTENV_AVAILABLE = True
except ImportError:
    DOTENV_AVAILABLE = False
    print("[Config] python-dotenv not available, using environment variables only")


class ExperimentKind(Enum):
    """实验（命令行子命令）枚举"""
    PERIMETER = "perimeter"
    SWEEP_S = "sweep-s"
    EL = "el"
    MINIMIZE = "minimize"
    ALLEN_CAHN = "allen-cahn"
    GAMMA_SWEEP = "gamma-sweep"
    EXTEND = "extend"
    CONE_DEMO = "cone-demo"
    REPRO = "repro"


def _env_threads(default: Optional[int] = None) -> int:
    raw = os.getenv("FRACLAB_THREADS")
    fallback = default or os.cpu_count() or 1
    if raw is None or not raw.strip():
        return max(1, fallback)
    try:
        return max(1, int(raw.strip()))
    except ValueError:
        print(f"[Config] ⚠️ FRACLAB_THREADS 无法解析: {raw!r}, 使用默认: {fallback}")
        return max(1, fallback)


_TRUE_WORDS = ("1", "true", "yes", "on")
_FALSE_WORDS = ("0", "false", "no", "off", "")


def _parse_bool(value: Any) -> bool:
    """JSON 里的 true/false 或字符串 "false"/"0"/"off" 等"""
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return value != 0
    text = str(value).strip().lower()
    if text in _TRUE_WORDS:
        return True
    if text in _FALSE_WORDS:
        return False
    raise ValueError(f"无法解析为布尔值: {value!r}")


# 同一时刻只允许一组 settings 覆盖生效
_override_lock = threading.RLock()


class Config:
    """系统配置类"""

    VERSION: str = "1.0.0"

    # 并行配置（唯一的环境变量）
    THREADS: int = _env_threads()

    # 核函数近场求积
    NEAR_SEPARATION: int = 4
    NEAR_DEPTH: int = 8
    TABLE_OFFSET_CAP: int = 400_000
    CACHE_DIR: Optional[str] = None

    # 最小割
    MINCUT_CELL_CAP: int = 4096
    BRUTE_CELL_CAP: int = 20

    # Euler-Lagrange 极坐标网格
    EL_RADII_PER_DECADE: int = 64
    EL_ANGLES: int = 256

    # Allen-Cahn 下降
    DESCENT_BACKTRACKS: int = 40
    DESCENT_MAX_ITERS: int = 400
    DESCENT_TOL: float = 1e-10
    DESCENT_PG_TOL: float = 1e-6           # 回溯用尽时的投影梯度阈值
    DENSITY_FLOOR: float = 0.05

    # 延拓网格
    EXTENSION_LEVEL_RATIO: float = 1.2
    EXTENSION_CUTOFF_FACTOR: float = 16.0   # 截断半径 = 因子 × 高度
    EXTENSION_STENCIL_CAP: int = 256        # 每个方向的细网格模板半宽上限
    EXTENSION_QUAD_RADIUS: float = 64.0

    # 输出
    FLOAT_DIGITS: int = 12

    # 调试配置
    DEBUG_MODE: bool = False

    @classmethod
    def get_experiment(cls, name: str) -> ExperimentKind:
        """把子命令字符串转换为实验枚举"""
        try:
            return ExperimentKind(name.strip().lower())
        except ValueError:
            print(f"[Config] ⚠️ 未知的实验: {name}, 使用默认: perimeter")
            return ExperimentKind.PERIMETER

    @classmethod
    def validate_config(cls) -> Dict[str, Any]:
        """验证配置并返回验证结果"""
        results = {
            "valid": True,
            "warnings": [],
            "errors": [],
            "threads": cls.THREADS
        }

        if cls.THREADS < 1:
            results["errors"].append("FRACLAB_THREADS 必须 >= 1")
            results["valid"] = False
        elif cls.THREADS > (os.cpu_count() or 1) * 4:
            results["warnings"].append(f"线程数远大于CPU核数: {cls.THREADS}")

        if cls.NEAR_SEPARATION < 2:
            results["errors"].append("NEAR_SEPARATION 至少为 2")
            results["valid"] = False
        if cls.NEAR_DEPTH < 1:
            results["errors"].append("NEAR_DEPTH 至少为 1")
            results["valid"] = False

        if cls.MINCUT_CELL_CAP > 16384:
            results["warnings"].append(f"稠密最小割上限过大: {cls.MINCUT_CELL_CAP}")

        if not (0.0 < cls.DENSITY_FLOOR < 1.0):
            results["errors"].append("DENSITY_FLOOR 必须在 (0,1) 内")
            results["valid"] = False

        if cls.EL_ANGLES % 4 != 0:
            results["errors"].append("EL_ANGLES 必须是 4 的倍数（反向配对与象限对称）")
            results["valid"] = False

        if cls.CACHE_DIR and not os.path.isdir(cls.CACHE_DIR):
            results["warnings"].append(f"缓存目录不存在，将自动创建: {cls.CACHE_DIR}")

        return results

    @classmethod
    def get_numeric_config(cls) -> Dict[str, Any]:
        """获取数值参数字典（写入报告元数据）"""
        return {
            "version": cls.VERSION,
            "near_separation": cls.NEAR_SEPARATION,
            "near_depth": cls.NEAR_DEPTH,
            "table_offset_cap": cls.TABLE_OFFSET_CAP,
            "mincut_cell_cap": cls.MINCUT_CELL_CAP,
            "el_radii_per_decade": cls.EL_RADII_PER_DECADE,
            "el_angles": cls.EL_ANGLES,
            "descent_backtracks": cls.DESCENT_BACKTRACKS,
            "descent_pg_tol": cls.DESCENT_PG_TOL,
            "density_floor": cls.DENSITY_FLOOR,
            "extension_level_ratio": cls.EXTENSION_LEVEL_RATIO,
            "extension_cutoff_factor": cls.EXTENSION_CUTOFF_FACTOR,
            "extension_stencil_cap": cls.EXTENSION_STENCIL_CAP,
        }

    @classmethod
    def coerce_setting(cls, key: str, value: Any) -> Tuple[str, Any]:
        attr = key.upper()
        if not hasattr(cls, attr) or attr.startswith("_"):
            from errors import UnknownConfigKey
            raise UnknownConfigKey(f"未知的配置项: {key}")
        current = getattr(cls, attr)
        if value is None:
            return attr, value
        try:
            if isinstance(current, bool):
                value = _parse_bool(value)
            elif isinstance(current, int):
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
        except (TypeError, ValueError) as e:
            from errors import ValidationError
            raise ValidationError(f"配置项 {key} 的值无效: {value!r} ({e})")
        return attr, value

    @classmethod
    def apply_overrides(cls, overrides: Dict[str, Any]) -> Dict[str, Any]:
        """
        用 JSON 配置文件中的 "settings" 段覆盖类属性

        先校验全部键值再写入；返回被覆盖前的值，交给 restore_overrides 还原
        """
        coerced = dict(cls.coerce_setting(key, value) for key, value in overrides.items())
        previous = {attr: getattr(cls, attr) for attr in coerced}
        for attr, value in coerced.items():
            setattr(cls, attr, value)
            if cls.DEBUG_MODE:
                print(f"[Config] 覆盖配置: {attr}={value}")
        return previous

    @classmethod
    def restore_overrides(cls, previous: Dict[str, Any]) -> None:
        for attr, value in previous.items():
            setattr(cls, attr, value)

    @classmethod
    @contextmanager
    def overridden(cls, overrides: Optional[Dict[str, Any]]) -> Iterator[None]:
        """
        只在 with 块内生效的覆盖，退出时（包括异常）还原

        带 settings 的运行互相串行
        """
        if not overrides:
            yield
            return
        with _override_lock:
            previous = cls.apply_overrides(overrides)
            try:
                yield
            finally:
                cls.restore_overrides(previous)
                if cls.DEBUG_MODE:
                    print(f"[Config] 已还原配置: {', '.join(previous)}")

    @classmethod
    def print_config_summary(cls):
        """打印配置摘要"""
        print("\n[Config] 🔧 系统配置摘要:")
        print(f"  版本: {cls.VERSION}")
        print(f"  线程上限: {cls.THREADS}")
        print(f"  近场求积: separation={cls.NEAR_SEPARATION}, depth={cls.NEAR_DEPTH}")
        print(f"  最小割单元上限: {cls.MINCUT_CELL_CAP}")
        print(f"  表缓存目录: {cls.CACHE_DIR or '未设置'}")
        print(f"  调试模式: {'开启' if cls.DEBUG_MODE else '关闭'}")

        validation = cls.validate_config()
        if not validation["valid"]:
            print(f"  ❌ 配置错误: {', '.join(validation['errors'])}")
        elif validation["warnings"]:
            print(f"  ⚠️  配置警告: {', '.join(validation['warnings'])}")
        else:
            print("  ✅ 配置验证通过")
        print()


# 创建全局配置实例
config = Config()

if __name__ == "__main__":
    print("=== fraclab 配置管理 ===")
    config.print_config_summary()
    print("数值参数:")
    for key, value in config.get_numeric_config().items():
        print(f"  {key}: {value}")
