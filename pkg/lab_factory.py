# lab_factory.py
"""
实验工厂
统一创建和管理不同的实验实例，并检查各实验依赖的数值库
"""

import importlib
from typing import Any, Dict, Optional, Union

from config import Config, ExperimentKind
from experiment_base import ExperimentBase, ExperimentConfig

# 每个实验依赖的第三方模块（导入名, 显示名）
_BASE_DEPS = (("numpy", "numpy"), ("scipy", "scipy"))
_REQUIREMENTS = {
    ExperimentKind.PERIMETER: _BASE_DEPS,
    ExperimentKind.SWEEP_S: _BASE_DEPS,
    ExperimentKind.EL: _BASE_DEPS,
    ExperimentKind.MINIMIZE: _BASE_DEPS + (("maxflow", "PyMaxflow"),),
    ExperimentKind.ALLEN_CAHN: _BASE_DEPS + (("skimage", "scikit-image"),),
    ExperimentKind.GAMMA_SWEEP: _BASE_DEPS + (("skimage", "scikit-image"),),
    ExperimentKind.EXTEND: _BASE_DEPS,
    ExperimentKind.CONE_DEMO: _BASE_DEPS + (("maxflow", "PyMaxflow"),),
    ExperimentKind.REPRO: _BASE_DEPS + (("maxflow", "PyMaxflow"), ("skimage", "scikit-image")),
}

_DESCRIPTIONS = {
    ExperimentKind.PERIMETER: "分数阶周长 Per_s(E, U)",
    ExperimentKind.SWEEP_S: "s→1/2 与 s→0 的缩放极限扫描",
    ExperimentKind.EL: "边界点上的 Euler–Lagrange 积分",
    ExperimentKind.MINIMIZE: "离散 s-极小元（最小割）",
    ExperimentKind.ALLEN_CAHN: "分数阶 Allen–Cahn 能量下降",
    ExperimentKind.GAMMA_SWEEP: "ε 扫描：界面与密度估计",
    ExperimentKind.EXTEND: "Poisson 核延拓与加权能量",
    ExperimentKind.CONE_DEMO: "十字锥不是 s-极小的演示",
    ExperimentKind.REPRO: "验收准则 A1–A16",
}


class LabFactory:
    """
    实验工厂类

    负责把配置分发给具体的实验类；
    实验模块按需导入，缺少依赖时给出明确的错误
    """

    @staticmethod
    def create_experiment(
        config: Union[ExperimentConfig, Dict[str, Any], str],
        config_override: Optional[Dict[str, Any]] = None,
        debug: bool = False,
        **kwargs
    ) -> ExperimentBase:
        """
        创建实验实例

        Args:
            config: ExperimentConfig、配置字典，或只给实验名
            config_override: 覆盖配置的字段
            **kwargs: 额外的配置字段

        Returns:
            ExperimentBase: 创建的实验实例

        Raises:
            ValidationError: 未知实验或未知配置键
            ImportError: 缺少必要的依赖
        """
        if isinstance(config, str):
            config = {"experiment": config}
        if isinstance(config, dict):
            data = dict(config)
            data.update(config_override or {})
            data.update(kwargs)
            config = ExperimentConfig.from_dict(data)
        elif config_override or kwargs:
            data = config.to_dict()
            data.update(config_override or {})
            data.update(kwargs)
            config = ExperimentConfig.from_dict(data)

        kind = config.kind
        print(f"[LabFactory] 创建实验: {kind.value}")
        experiment_cls = LabFactory._load_class(kind)
        return experiment_cls(config, debug=debug)

    @staticmethod
    def _load_class(kind: ExperimentKind):
        missing = [label for module, label in _REQUIREMENTS[kind] if not LabFactory._has_module(module)]
        if missing:
            raise ImportError(f"{kind.value} 依赖缺失: {', '.join(missing)}")
        try:
            from experiments import EXPERIMENTS
        except ImportError as e:
            raise ImportError(f"实验模块依赖缺失: {e}")
        return EXPERIMENTS[kind]

    @staticmethod
    def _has_module(name: str) -> bool:
        try:
            importlib.import_module(name)
            return True
        except ImportError:
            return False

    @staticmethod
    def get_available_experiments() -> Dict[ExperimentKind, Dict[str, Any]]:
        """
        获取各实验及其依赖状态

        Returns:
            Dict[ExperimentKind, Dict[str, Any]]: 实验状态信息
        """
        experiments = {}
        for kind, deps in _REQUIREMENTS.items():
            missing = [label for module, label in deps if not LabFactory._has_module(module)]
            info = {
                "available": not missing,
                "requires": [label for _, label in deps],
                "description": _DESCRIPTIONS[kind],
            }
            if missing:
                info["error"] = f"缺少: {', '.join(missing)}"
            experiments[kind] = info
        return experiments

    @staticmethod
    def validate_experiment_config(config: ExperimentConfig) -> Dict[str, Any]:
        """
        验证实验配置（不执行）

        Returns:
            Dict[str, Any]: 验证结果
        """
        result = {
            "experiment": str(config.experiment),
            "valid": False,
            "errors": [],
            "warnings": [],
            "config": {}
        }
        try:
            config.validate()
        except ValueError as e:
            result["errors"].append(str(e))
            return result
        result["valid"] = True
        result["config"] = config.to_dict()
        if config.kind == ExperimentKind.MINIMIZE and config.method == "brute":
            result["warnings"].append(f"brute 只适用于不超过 {Config.BRUTE_CELL_CAP} 个单元的窗口")
        if config.out is None and config.kind != ExperimentKind.REPRO:
            result["warnings"].append("未设置 --out，结果只打印到终端")
        return result

    @staticmethod
    def print_experiment_status():
        """打印所有实验的可用状态"""
        print("\n[LabFactory] 📊 实验状态:")
        for kind, info in LabFactory.get_available_experiments().items():
            status = "✅ 可用" if info["available"] else "❌ 不可用"
            print(f"  {kind.value}: {status}")
            print(f"    描述: {info['description']}")
            print(f"    依赖: {', '.join(info['requires'])}")
            if not info["available"]:
                print(f"    错误: {info.get('error', '未知错误')}")
        print(f"\n线程上限: {Config.THREADS}")
