#!/usr/bin/env python3
# test_mincut.py
"""
最小割极小化测试 - 与穷举比对、半平面、十字锥、翻转下降
"""

import dataclasses
import sys
import unittest
from unittest.mock import patch

import numpy as np

from errors import SOutOfRange, TooLarge
from kernel import build_table
from mincut import (
    _break_ties_out,
    _flip_gain,
    _neighbor_sums,
    build_problem,
    flip_descent,
    minimize,
    minimize_brute,
    minimize_exact,
)
from perimeter import frac_perimeter
from shapes import Ball, CrossCone, GridSet, HalfPlane, Window, rasterize


def _random_problem(seed: int, s: float = 0.3):
    """4×4 窗口，随机的非负一元代价"""
    window = Window.square(0.5, 0.25)
    problem = build_problem(HalfPlane(), window, s, rt=1.0)
    rng = np.random.default_rng(seed)
    scale = float(np.mean(problem.cost_in + problem.cost_out))
    return dataclasses.replace(problem,
                               cost_in=scale * rng.random(window.shape),
                               cost_out=scale * rng.random(window.shape))


def _ties_out_by_recount(problem, mask, tol):
    """每次翻转都重新做整幅相关的参照实现"""
    mask = mask.copy()
    while True:
        s_in, s_all = _neighbor_sums(problem, mask)
        candidates = np.argwhere(mask & (-_flip_gain(problem, s_in, s_all) <= tol))
        if candidates.size == 0:
            return mask
        mask[tuple(candidates[0])] = False


class MinCutTestCase(unittest.TestCase):
    """最小割测试用例"""

    def test_matches_brute_force(self):
        """测试 4×4 随机实例与穷举一致"""
        print("\n=== 测试与穷举比对 ===")
        for seed in range(6):
            problem = _random_problem(seed)
            exact = minimize_exact(problem)
            brute = minimize_brute(problem)
            self.assertAlmostEqual(exact.objective, brute.objective,
                                   delta=1e-9 * max(1.0, abs(brute.objective)))
            self.assertAlmostEqual(exact.objective, exact.certificate,
                                   delta=1e-9 * max(1.0, abs(exact.certificate)))
        print("✅ 6 个随机实例的最小值与 2^16 穷举一致")

    def test_objective_matches_perimeter(self):
        """测试目标函数与 frac_perimeter 一致"""
        window = Window.square(0.5, 1.0 / 16)
        problem = build_problem(Ball(0.3), window, 0.25, rt=0.5)
        for mask in (rasterize(Ball(0.3), window).mask, rasterize(HalfPlane(), window).mask,
                     np.zeros(window.shape, dtype=bool)):
            per = frac_perimeter(GridSet(window, mask, Ball(0.3)), 0.25, table=problem.table)
            self.assertAlmostEqual(problem.objective(mask), per.total, delta=1e-9 * per.total)
        print("✅ objective(mask) = Per_s(mask)")

    def test_halfplane_is_minimizer(self):
        """测试半平面外部数据的极小元就是半平面"""
        print("\n=== 测试半平面 ===")
        window = Window.square(1.0, 1.0 / 16)
        expected = rasterize(HalfPlane(), window).mask
        for s in (0.1, 0.25, 0.4):
            result = minimize_exact(build_problem(HalfPlane(), window, s))
            self.assertTrue(np.array_equal(result.mask, expected))
            print(f"✅ s={s}: 极小元 = 栅格化半平面, objective={result.objective:.8f}")

    def test_cross_cone_is_not_minimal(self):
        """测试 𝒦 不是极小元"""
        print("\n=== 测试十字锥 ===")
        window = Window.square(1.0, 1.0 / 16)
        problem = build_problem(CrossCone(), window, 0.25)
        cone = rasterize(CrossCone(), window).mask
        result = minimize_exact(problem)
        margin = problem.objective(cone) - result.objective
        self.assertGreater(margin, 1e-6)
        diff = np.argwhere(result.mask != cone)
        self.assertGreater(diff.size, 0)
        center = np.array(window.shape) / 2.0
        self.assertLess(np.min(np.max(np.abs(diff + 0.5 - center), axis=1)), 4)
        print(f"✅ 目标下降 {margin:.3e}，截断上界 {problem.truncation_bound(cone, result.mask):.3e}")

    def test_complement_duality(self):
        """测试补集对偶"""
        window = Window.square(1.0, 1.0 / 8)
        problem = build_problem(HalfPlane((0.2, 1.0), 0.05), window, 0.3)
        a = minimize_exact(problem)
        b = minimize_exact(problem.complemented())
        self.assertTrue(np.array_equal(a.mask, ~b.mask))
        self.assertAlmostEqual(a.objective, b.objective, delta=1e-10 * a.objective)
        print("✅ E↔Eᶜ 得到互补的极小元")

    def test_shifted_halfplane_stays_in_strip(self):
        """测试外部数据位于水平带内时极小元也在带内"""
        window = Window.square(1.0, 1.0 / 16)
        d = 0.1
        result = minimize_exact(build_problem(HalfPlane((0.0, 1.0), d / 2), window, 0.25))
        reference = rasterize(HalfPlane(), window).mask
        rows = window.centers()[result.mask ^ reference][:, 1]
        self.assertTrue(np.all(np.abs(rows) <= d + window.h))

    def test_flip_descent(self):
        """测试单单元翻转下降"""
        print("\n=== 测试翻转下降 ===")
        hits = 0
        for seed in range(6):
            problem = _random_problem(seed)
            best = minimize_brute(problem)
            local = flip_descent(problem, seed=seed)
            self.assertGreaterEqual(local.objective, best.objective - 1e-12)
            self.assertTrue(all(x > y for x, y in zip(local.history, local.history[1:])))
            hits += abs(local.objective - best.objective) <= 1e-9 * abs(best.objective)

            again = flip_descent(problem, init=best.mask, seed=seed + 100)
            self.assertTrue(np.array_equal(again.mask, best.mask))
            self.assertEqual(len(again.history), 1)
        print(f"✅ 翻转下降不低于全局最优，{hits}/6 次达到最优")

    def test_minimize_record(self):
        """测试 minimize 结果记录"""
        window = Window.square(0.5, 1.0 / 8)
        result = minimize(HalfPlane(), window, 0.25, method="flip-descent", rt=0.5)
        record = result.to_record()
        self.assertEqual(record["method"], "flip-descent")
        self.assertEqual(record["cells"], 64)
        self.assertAlmostEqual(record["margin_vs_input"], 0.0, places=12)

    def test_errors(self):
        """测试错误处理"""
        window = Window.square(1.0, 1.0 / 16)
        with self.assertRaises(SOutOfRange):
            build_problem(HalfPlane(), window, 0.6)
        problem = build_problem(HalfPlane(), Window.square(0.5, 0.125), 0.25, rt=0.5)
        with patch("config.Config.MINCUT_CELL_CAP", 10):
            with self.assertRaises(TooLarge):
                minimize_exact(problem)
        with self.assertRaises(TooLarge):
            minimize_brute(problem)
        print("✅ s 越界与窗口过大均被拒绝")

    def test_ties_resolved_to_out(self):
        """测试平局翻到 OUT：增量更新与逐次重算一致，只做一次整幅相关"""
        print("\n=== 测试平局处理 ===")
        window = Window.square(0.5, 0.125)
        base = build_problem(HalfPlane(), window, 0.3, rt=0.5)
        mask = rasterize(HalfPlane(), window).mask
        s_in, s_all = _neighbor_sums(base, mask)
        a = tuple(np.argwhere(mask)[0])
        # 调整 a 的 OUT 代价，使 IN→OUT 的变化恰为零
        cost_out = base.cost_out.copy()
        cost_out[a] += _flip_gain(base, s_in, s_all)[a]
        tied = dataclasses.replace(base, cost_out=cost_out)
        value = abs(tied.objective(mask))
        with patch("mincut._neighbor_sums", wraps=_neighbor_sums) as sums:
            resolved = _break_ties_out(tied, mask, value)
        self.assertEqual(sums.call_count, 1)
        self.assertFalse(resolved[a])
        self.assertTrue(mask[a])
        self.assertFalse(np.any(resolved & ~mask))
        self.assertLessEqual(tied.objective(resolved), tied.objective(mask) + 1e-9 * max(1.0, value))
        np.testing.assert_array_equal(resolved, _ties_out_by_recount(tied, mask, 1e-12 * max(1.0, value)))

        rng = np.random.default_rng(5)
        for _ in range(4):
            start = rng.random(window.shape) < 0.5
            value = abs(base.objective(start))
            fast = _break_ties_out(base, start, value)
            np.testing.assert_array_equal(fast, _ties_out_by_recount(base, start, 1e-12 * max(1.0, value)))
            self.assertLessEqual(base.objective(fast), base.objective(start) + 1e-9 * max(1.0, value))
        print("✅ 平局翻转与逐次重算的结果相同")

    def test_shared_table(self):
        """测试共享权重表"""
        window = Window.square(0.5, 0.125)
        table = build_table(window, 0.25, 0.5)
        a = build_problem(Ball(0.3), window, 0.25, table=table)
        b = build_problem(Ball(0.3), window, 0.25, rt=0.5)
        self.assertTrue(np.allclose(a.cost_in, b.cost_in, rtol=1e-14, atol=0.0))


def main():
    """主函数"""
    print("最小割极小化测试")
    print(f"Python版本: {sys.version}")
    suite = unittest.TestLoader().loadTestsFromTestCase(MinCutTestCase)
    result = unittest.TextTestRunner(verbosity=1).run(suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(main())
