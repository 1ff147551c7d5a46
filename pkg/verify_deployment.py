#!/usr/bin/env python3
# verify_deployment.py
"""
安装验证脚本
验证所有模块和数值依赖都可以正确导入，并跑一个很小的实验
"""

import importlib
import sys
import tempfile


def verify_imports():
    """验证所有关键模块导入"""
    required_modules = {
        'config': ['Config', 'ExperimentKind'],
        'errors': ['FracLabError', 'exit_code_for'],
        'shapes': ['parse_shape', 'Window', 'rasterize'],
        'kernel': ['build_table', 'kahan_sum'],
        'perimeter': ['frac_perimeter', 'scaled_limits'],
        'euler_lagrange': ['el_integral'],
        'mincut': ['minimize_exact', 'flip_descent'],
        'allen_cahn': ['minimize_G', 'gamma_sweep'],
        'extension': ['extend', 'weighted_energy'],
        'experiment_base': ['ExperimentBase', 'ExperimentConfig'],
        'lab_factory': ['LabFactory'],
        'acceptance': ['repro_all'],
        'fraclab': ['main', 'run'],
    }

    print("🔍 验证模块导入...")
    print("=" * 50)

    success_count = 0
    total_count = len(required_modules)

    for module_name, names in required_modules.items():
        try:
            module = importlib.import_module(module_name)
            missing = [name for name in names if not hasattr(module, name)]
            if missing:
                print(f"⚠️ {module_name}: 导入成功但缺少 {', '.join(missing)}")
                success_count += 0.5
            else:
                print(f"✅ {module_name}: 导入成功 ({', '.join(names)})")
                success_count += 1
        except ImportError as e:
            print(f"❌ {module_name}: 导入失败 - {e}")
        except Exception as e:
            print(f"⚠️ {module_name}: 导入时出错 - {e}")
            success_count += 0.5

    print("=" * 50)
    print(f"导入验证结果: {success_count}/{total_count} 成功")
    return success_count == total_count


def verify_numeric_stack():
    """验证数值依赖与一个最小实验"""
    print("\n🔧 验证数值依赖...")
    print("=" * 50)

    try:
        from lab_factory import LabFactory

        experiments = LabFactory.get_available_experiments()
        available = [kind.value for kind, info in experiments.items() if info["available"]]
        print(f"✅ 可用实验: {available} ({len(available)}个)")

        with tempfile.TemporaryDirectory() as tmp:
            experiment = LabFactory.create_experiment({
                "experiment": "perimeter", "shape": "ball:r=0.25", "s": 0.25,
                "h": 0.125, "window": "-0.5,0.5,-0.5,0.5", "out": f"{tmp}/per.csv",
            })
            result = experiment.run()
            print(f"✅ Per_s(B_0.25) = {result.record['per_s']:.8g}")
        print("🎉 数值依赖验证通过！")
        return True

    except Exception as e:
        print(f"❌ 数值依赖验证失败: {e}")
        return False


def verify_main_app():
    """验证服务应用可以导入"""
    print("\n🚀 验证服务应用导入...")
    print("=" * 50)

    try:
        import main

        assert hasattr(main, 'app')
        print("✅ FastAPI应用对象存在")
        paths = {route.path for route in main.app.routes}
        for path in ("/health", "/experiments", "/run", "/ws/sweep"):
            if path in paths:
                print(f"✅ 路由 {path} 存在")
            else:
                print(f"⚠️ 路由 {path} 缺失")
        print("🎉 服务应用验证通过！")
        return True

    except Exception as e:
        print(f"❌ 服务应用验证失败: {e}")
        return False


def main():
    """主验证函数"""
    print("fraclab 安装验证")
    print("=" * 60)
    print(f"Python版本: {sys.version}")
    print()

    results = [verify_imports(), verify_numeric_stack(), verify_main_app()]

    print("\n" + "=" * 60)
    print("最终验证结果")
    print("=" * 60)
    for name, result in zip(["模块导入", "数值依赖", "服务应用"], results):
        print(f"{'✅ 通过' if result else '❌ 失败'} {name}")

    passed = sum(results)
    total = len(results)
    print(f"\n通过率: {passed}/{total} ({passed/total*100:.1f}%)")
    if passed == total:
        print("\n🎉 所有验证通过！")
        return True
    print(f"\n⚠️ {total-passed} 个验证失败")
    return False


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
