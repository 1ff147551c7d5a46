#!/usr/bin/env python3
# fraclab.py
"""
fraclab 命令行入口

子命令: perimeter, sweep-s, el, minimize, allen-cahn, gamma-sweep, extend, cone-demo, repro
退出码: 0 成功, 2 参数/配置错误, 3 数值失败
配置: 可选 JSON 文件 (--config)，命令行参数覆盖文件；环境变量只读 FRACLAB_THREADS
"""

import argparse
import json
import sys
from typing import Any, Dict, List, Optional, Sequence

from config import Config, ExperimentKind
from errors import ValidationError, exit_code_for
from experiment_base import ExperimentConfig, ExperimentResult
from lab_factory import LabFactory


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的数值: {text!r}")


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    """参数错误抛出 ValidationError，由 main 统一映射为退出码 2"""

    def error(self, message):
        raise ValidationError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", dest="config_file", help="JSON 配置文件（命令行参数覆盖文件）")
    p.add_argument("--h", type=float, help="网格步长")
    p.add_argument("--window", help="窗口 'x0,x1,y0,y1' 或一维 'x0,x1'")
    p.add_argument("--rt", type=float, help="截断半径 R_t")
    p.add_argument("--out", help="主输出文件")
    p.add_argument("--record", help="JSON 结果记录")
    p.add_argument("--debug", action="store_true", default=None, help="调试输出")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fraclab", description="分数阶周长与相场数值实验")
    parser.add_argument("--version", action="version", version=f"fraclab {Config.VERSION}")
    sub = parser.add_subparsers(dest="experiment", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser(ExperimentKind.PERIMETER.value, help="Per_s(E, U)")
    _common(p)
    p.add_argument("--shape")
    p.add_argument("--s", type=float)
    p.add_argument("--r", type=float, help="限制到 B_r")

    p = sub.add_parser(ExperimentKind.SWEEP_S.value, help="s 扫描与极限外推")
    _common(p)
    p.add_argument("--shape")
    p.add_argument("--s-list", dest="s_list", type=_float_list)
    p.add_argument("--mode", choices=("to_half", "to_zero"))
    p.add_argument("--r", type=float, help="限制到 B_r")

    p = sub.add_parser(ExperimentKind.EL.value, help="Euler–Lagrange 积分")
    _common(p)
    p.add_argument("--shape")
    p.add_argument("--x0", type=_float_list)
    p.add_argument("--s", type=float)

    p = sub.add_parser(ExperimentKind.MINIMIZE.value, help="离散 s-极小元")
    _common(p)
    p.add_argument("--exterior", dest="shape")
    p.add_argument("--s", type=float)
    p.add_argument("--method", choices=("maxflow", "brute", "flip", "flip-descent"))
    p.add_argument("--seed", type=int)

    p = sub.add_parser(ExperimentKind.ALLEN_CAHN.value, help="𝒢_ε 下降")
    _common(p)
    p.add_argument("--exterior", dest="shape")
    p.add_argument("--s", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--report", help="密度报告 CSV")
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--thetas", type=_float_list)

    p = sub.add_parser(ExperimentKind.GAMMA_SWEEP.value, help="ε 扫描")
    _common(p)
    p.add_argument("--exterior", dest="shape")
    p.add_argument("--s", type=float)
    p.add_argument("--eps-list", dest="eps_list", type=_float_list)
    p.add_argument("--iters", type=int)
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--thetas", type=_float_list)

    p = sub.add_parser(ExperimentKind.EXTEND.value, help="Poisson 核延拓")
    _common(p)
    p.add_argument("--trace", dest="shape")
    p.add_argument("--s", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--report", help="逐层统计 CSV")

    p = sub.add_parser(ExperimentKind.CONE_DEMO.value, help="十字锥演示")
    _common(p)
    p.add_argument("--s", type=float)
    p.add_argument("--s-list", dest="s_list", type=_float_list)

    p = sub.add_parser(ExperimentKind.REPRO.value, help="验收准则")
    _common(p)
    p.add_argument("--ids", type=_str_list, help="只运行这些准则，例如 A1,A9")
    return parser


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ValidationError(f"无法读取配置文件 {path}: {e}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"配置文件不是合法 JSON: {path} ({e})")
    if not isinstance(data, dict):
        raise ValidationError(f"配置文件顶层必须是对象: {path}")
    return data


def config_from_args(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    args = vars(build_parser().parse_args(argv))
    file_data = load_config_file(args.pop("config_file", None))
    if args.pop("debug", None):
        Config.DEBUG_MODE = True
    if "experiment" in file_data and file_data["experiment"] != args["experiment"]:
        print(f"[CLI] ⚠️ 配置文件中的实验 {file_data['experiment']} 被子命令 {args['experiment']} 覆盖")
    return ExperimentConfig.merged(file_data, args)


def run(config: ExperimentConfig) -> ExperimentResult:
    """把配置分发给对应实验；异常原样抛出"""
    experiment = LabFactory.create_experiment(config)
    result = experiment.run()
    if Config.DEBUG_MODE:
        experiment.print_stats()
    return result


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = config_from_args(argv)
        result = run(config)
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)
    except Exception as e:
        code = exit_code_for(e)
        print(f"[CLI] ❌ {type(e).__name__}: {e}", file=sys.stderr)
        return code

    if result.kind == ExperimentKind.REPRO and not result.record.get("all_passed", False):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
