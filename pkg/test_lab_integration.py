#!/usr/bin/env python3
# test_lab_integration.py
"""
fraclab 命令行集成测试脚本

在临时目录中端到端地运行各子命令：
- 输出文件与元数据
- 逐字节可复现
- 退出码与错误信息
- 验收准则子集
"""

import contextlib
import io
import json
import os
import sys
import tempfile
import time
from typing import List, Tuple

from config import Config
import fraclab

# 粗网格：每个实验在秒级完成
SMALL = ["--h", "0.125", "--window", "-0.5,0.5,-0.5,0.5"]


class LabTestRunner:
    """命令行测试运行器"""

    def __init__(self, workdir: str):
        self.workdir = workdir
        self.test_results = []

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    def cli(self, *argv: str) -> Tuple[int, str]:
        """运行一次命令行，返回 (退出码, stderr)"""
        stderr = io.StringIO()
        with contextlib.redirect_stderr(stderr):
            code = fraclab.main(list(argv))
        print(f"[Test] fraclab {' '.join(argv)} → {code}")
        return code, stderr.getvalue()

    def run_test(self, test_name: str, test_func) -> bool:
        """运行单个测试"""
        print(f"\n{'='*60}")
        print(f"运行测试: {test_name}")
        print(f"{'='*60}")

        start_time = time.time()
        try:
            result = test_func()
            duration = time.time() - start_time

            if result:
                print(f"✅ 测试通过: {test_name} (用时: {duration:.2f}s)")
                self.test_results.append((test_name, True, duration, None))
                return True
            print(f"❌ 测试失败: {test_name} (用时: {duration:.2f}s)")
            self.test_results.append((test_name, False, duration, "测试返回False"))
            return False

        except Exception as e:
            duration = time.time() - start_time
            print(f"❌ 测试异常: {test_name} - {e} (用时: {duration:.2f}s)")
            self.test_results.append((test_name, False, duration, str(e)))
            return False

    def test_perimeter_csv(self) -> bool:
        """测试周长输出 CSV 与元数据旁车"""
        out = self.path("per.csv")
        code, _ = self.cli("perimeter", "--shape", "ball:r=0.25", "--s", "0.25", *SMALL,
                           "--out", out, "--record", self.path("per.json"))
        if code != 0:
            return False
        with open(out, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        print(f"CSV: {lines}")
        if lines[0] != "s,per_s,interior,e_to_exterior,exterior_to_o,tail_share" or len(lines) != 2:
            return False
        with open(out + ".meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(self.path("per.json"), encoding="utf-8") as fh:
            record = json.load(fh)
        print(f"Per_s = {record['per_s']}")
        return meta["code_version"] == Config.VERSION and record["per_s"] > 0.0

    def test_determinism(self) -> bool:
        """同样的参数两次运行，CSV 逐字节相同"""
        blobs: List[bytes] = []
        for name in ("det_a.csv", "det_b.csv"):
            code, _ = self.cli("sweep-s", "--shape", "ball:r=0.25", "--mode", "to_zero",
                               "--s-list", "0.2,0.1", *SMALL, "--out", self.path(name))
            if code != 0:
                return False
            with open(self.path(name), "rb") as fh:
                blobs.append(fh.read())
        print(f"CSV 长度: {len(blobs[0])} 字节")
        return blobs[0] == blobs[1]

    def test_invalid_s(self) -> bool:
        """s=0.7 的 to_half 扫描返回 2 并说明约束"""
        code, err = self.cli("sweep-s", "--shape", "halfplane", "--mode", "to_half",
                             "--s-list", "0.7", *SMALL)
        print(f"stderr: {err.strip()}")
        return code == 2 and "s ∈ (0,1/2)" in err

    def test_unknown_config_key(self) -> bool:
        """配置文件中的未知键返回 2"""
        path = self.path("bad.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"experiment": "perimeter", "shape": "ball:r=0.25", "s": 0.2, "colour": "red"}, fh)
        code, err = self.cli("perimeter", "--config", path)
        print(f"stderr: {err.strip()}")
        return code == 2 and "colour" in err

    def test_el(self) -> bool:
        """半平面边界点上 EL 积分接近 0"""
        record = self.path("el.json")
        code, _ = self.cli("el", "--shape", "halfplane", "--s", "0.3", "--x0", "0,0", "--record", record)
        if code != 0:
            return False
        with open(record, encoding="utf-8") as fh:
            data = json.load(fh)
        print(f"EL = {data['value']:.3e} ± {data['error']:.3e}")
        return abs(data["value"]) <= max(1e-6, 10.0 * data["error"])

    def test_minimize(self) -> bool:
        """最小割输出 PGM 与 JSON 记录"""
        out = self.path("min.pgm")
        code, _ = self.cli("minimize", "--exterior", "halfplane:ny=-1", "--s", "0.25", *SMALL, "--out", out)
        if code != 0:
            return False
        with open(out, encoding="utf-8") as fh:
            header = fh.read().split("\n")[:3]
        with open(self.path("min.json"), encoding="utf-8") as fh:
            record = json.load(fh)
        print(f"PGM 头: {header}, 方法: {record['method']}, margin: {record['margin_vs_input']}")
        return header == ["P2", "8 8", "1"] and record["method"] == "maxflow" and "config_hash" in record

    def test_allen_cahn(self) -> bool:
        """𝒢_ε 下降输出场矩阵与密度报告"""
        out, report = self.path("ac.txt"), self.path("ac_density.csv")
        code, _ = self.cli("allen-cahn", "--exterior", "halfplane:ny=-1", "--s", "0.3", "--eps", "0.1",
                           "--iters", "20", "--thetas=-0.95,0.5", "--radii", "0.25,0.5", *SMALL,
                           "--out", out, "--report", report)
        if code != 0:
            return False
        with open(out, encoding="utf-8") as fh:
            rows = [line for line in fh.read().splitlines() if line and not line.startswith("#")]
        with open(report, encoding="utf-8") as fh:
            density = fh.read().splitlines()
        print(f"场矩阵 {len(rows)} 行, 密度报告: {density}")
        return len(rows) == 8 and density[0] == "R,measure,ratio" and len(density) == 3

    def test_extend(self) -> bool:
        """延拓按层输出且取值在 [−1,1] 内"""
        out, record = self.path("ext.txt"), self.path("ext.json")
        code, _ = self.cli("extend", "--trace", "halfplane", "--s", "0.5", *SMALL, "--height", "0.5",
                           "--out", out, "--record", record)
        if code != 0:
            return False
        with open(out, encoding="utf-8") as fh:
            levels = [line for line in fh.read().splitlines() if line.startswith("# level")]
        with open(record, encoding="utf-8") as fh:
            data = json.load(fh)
        print(f"{len(levels)} 层, min={data['min']:.4f}, max={data['max']:.4f}")
        return len(levels) == data["levels"] and -1.0 - 1e-9 <= data["min"] <= data["max"] <= 1.0 + 1e-9

    def test_cone_demo(self) -> bool:
        """十字锥演示：周长近似相等，离散极小元不劣于 𝒦"""
        out = self.path("cone.csv")
        code, _ = self.cli("cone-demo", "--s", "0.25", *SMALL, "--out", out)
        if code != 0:
            return False
        with open(out, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        values = dict(zip(lines[0].split(","), map(float, lines[1].split(","))))
        print(f"rel_diff={values['rel_diff']:.3e}, margin={values['margin']:.4g}")
        return values["margin"] >= -1e-9 and values["el_K_prime"] > 0.0

    def test_repro_subset(self) -> bool:
        """只运行 A3 与 A10 准则；A3 的窗口为 [−1,1]²"""
        record = self.path("repro.json")
        code, _ = self.cli("repro", "--ids", "A3,A10", "--record", record)
        with open(record, encoding="utf-8") as fh:
            summary = json.load(fh)
        print(f"准则: {[c['id'] for c in summary['criteria']]}, 全部通过: {summary['all_passed']}")
        a3 = summary["criteria"][0]
        return (code == 0 and [c["id"] for c in summary["criteria"]] == ["A3", "A10"]
                and a3["detail"]["window"] == [[-1.0, -1.0], [1.0, 1.0]])

    def run_all_tests(self) -> bool:
        """运行所有测试"""
        tests = [
            ("周长 CSV", self.test_perimeter_csv),
            ("逐字节可复现", self.test_determinism),
            ("非法 s 的退出码", self.test_invalid_s),
            ("未知配置键", self.test_unknown_config_key),
            ("Euler–Lagrange 积分", self.test_el),
            ("最小割 PGM", self.test_minimize),
            ("Allen–Cahn 下降", self.test_allen_cahn),
            ("Poisson 延拓", self.test_extend),
            ("十字锥演示", self.test_cone_demo),
            ("验收准则子集", self.test_repro_subset),
        ]
        passed = sum(1 for name, func in tests if self.run_test(name, func))
        total = len(tests)

        print(f"\n{'='*60}")
        print("测试结果汇总")
        print(f"{'='*60}")
        for test_name, success, duration, error in self.test_results:
            status = "✅ 通过" if success else "❌ 失败"
            print(f"{status} {test_name} ({duration:.2f}s)")
            if error and not success:
                print(f"     错误: {error}")

        print(f"\n总计: {passed}/{total} 测试通过")
        print(f"成功率: {passed / total * 100:.1f}%")
        if passed == total:
            print("\n🎉 所有测试通过！")
            return True
        print(f"\n⚠️ {total - passed} 个测试失败")
        return False


def main():
    """主函数"""
    print("fraclab 集成测试")
    print("=" * 60)
    print(f"FRACLAB_THREADS: {os.getenv('FRACLAB_THREADS', '未设置')} (线程上限 {Config.THREADS})")

    with tempfile.TemporaryDirectory() as workdir:
        runner = LabTestRunner(workdir)
        success = runner.run_all_tests()
    return 0 if success else 1


if __name__ == "__main__":
    sys.exit(main())
