#!/usr/bin/env python3
# test_kernel.py
"""
核函数模块测试 - 单元对权重、解析尾部、权重表与缓存
"""

import math
import os
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
from scipy import integrate

import kernel
from errors import BadRadii, SOutOfRange, ZeroOffset
from kernel import (
    Constants,
    KahanAccumulator,
    build_table,
    kahan_sum,
    load_table,
    pair_weight,
    save_table,
    tail,
    unit_weight,
)
from shapes import Window


def _adjacent_pair_oracle(s: float) -> float:
    """
    相邻单位正方形 (offset (1,0)) 的二重积分：
    ∫ T(u₁−1) T(u₂) |u|^{−2−2s} du，T 为两个均匀分布之差的三角密度，
    在以原点为中心的极坐标下逐层求积
    """
    p = 2.0 + 2.0 * s

    def tri(z):
        return max(0.0, 1.0 - abs(z))

    def inner(phi):
        c, sn = math.cos(phi), math.sin(phi)
        r_max = 2.0 / c if abs(sn) < 1e-15 else min(2.0 / c, 1.0 / abs(sn))
        kink = 1.0 / c
        pts = [kink] if kink < r_max else None
        val, _ = integrate.quad(lambda r: r ** (1.0 - p) * tri(r * c - 1.0) * tri(r * sn),
                                0.0, r_max, points=pts, limit=400, epsabs=1e-13, epsrel=1e-11)
        return val

    half, _ = integrate.quad(inner, 0.0, math.pi / 2 - 1e-15, points=[math.atan(0.5), math.pi / 4],
                             limit=400, epsabs=1e-12, epsrel=1e-10)
    return 2.0 * half


class KernelTestCase(unittest.TestCase):
    """核函数测试用例"""

    def test_constants(self):
        """测试常数"""
        c = Constants(2, 0.25)
        self.assertEqual(c.omega, 2.0 * math.pi)
        self.assertEqual(c.c_n, c.omega)
        self.assertEqual(Constants(1, 0.25).omega, 2.0)
        print("✅ ω_1 = 2π, ω_0 = 2, c_n = ω_{n−1}")

    def test_far_field_midpoint(self):
        """测试远场中点公式"""
        print("\n=== 测试单元对权重 ===")
        w = pair_weight((10, 0), 1.0, 0.25, 2)
        self.assertAlmostEqual(w / 10 ** (-2.5), 1.0, delta=1e-6)
        w = pair_weight((4, 3), 0.5, 0.3, 2)
        expected = 0.5 ** 4 * (0.5 * 5.0) ** (-2.6)
        self.assertAlmostEqual(w / expected, 1.0, delta=1e-12)
        print(f"✅ offset (10,0): {w:.6e}")

    def test_adjacent_cells_against_oracle(self):
        """测试相邻单元与独立求积"""
        for s in (0.25, 0.1):
            oracle = _adjacent_pair_oracle(s)
            value = pair_weight((1, 0), 1.0, s, 2)
            self.assertAlmostEqual(value / oracle, 1.0, delta=1e-4)
            print(f"✅ s={s}: 近场权重 {value:.8f}, 求积 {oracle:.8f}")

    def test_one_dimensional_adjacent(self):
        """测试一维相邻区间的闭式积分"""
        s = 0.2
        # ∫_0^1∫_1^2 (y−x)^{−1−2s} = [2·1^{1−2s} − 2^{1−2s}] / (2s(1−2s))
        exact = (2.0 - 2.0 ** (1 - 2 * s)) / (2 * s * (1 - 2 * s))
        self.assertAlmostEqual(unit_weight((1,), s, 1) / exact, 1.0, delta=1e-6)
        exact2 = (2 * 2.0 ** (1 - 2 * s) - 3.0 ** (1 - 2 * s) - 1.0) / (2 * s * (1 - 2 * s))
        self.assertAlmostEqual(unit_weight((2,), s, 1) / exact2, 1.0, delta=1e-6)
        print("✅ 一维近场权重与闭式一致")

    def test_scaling_law_and_symmetry(self):
        """测试伸缩律与对称性"""
        for offset in ((1, 0), (2, 3), (0, 7)):
            for h in (0.5, 1.0 / 32):
                lhs = pair_weight(offset, h, 0.3, 2)
                rhs = h ** (2 - 0.6) * pair_weight(offset, 1.0, 0.3, 2)
                self.assertAlmostEqual(lhs / rhs, 1.0, delta=1e-12)
        self.assertEqual(pair_weight((1, 2), 1.0, 0.2, 2), pair_weight((-2, 1), 1.0, 0.2, 2))
        self.assertEqual(pair_weight((3, -1), 1.0, 0.2, 2), pair_weight((-1, -3), 1.0, 0.2, 2))
        print("✅ h^{n−2s} 伸缩律与格点对称")

    def test_strong_singularity_branch(self):
        """测试 s ≥ 1/2 的递归分支"""
        w75 = pair_weight((1, 0), 1.0, 0.75, 2)
        w60 = pair_weight((1, 0), 1.0, 0.6, 2)
        self.assertTrue(np.isfinite(w75) and w75 > w60 > 0.0)
        print(f"✅ s=0.75 相邻权重有限: {w75:.4f}")

    def test_errors(self):
        """测试错误处理"""
        with self.assertRaises(ZeroOffset):
            pair_weight((0, 0), 1.0, 0.25, 2)
        with self.assertRaises(SOutOfRange):
            pair_weight((1, 0), 1.0, 1.2, 2)
        with self.assertRaises(BadRadii):
            tail(0.0, 0.25, 2)
        with self.assertRaises(BadRadii):
            build_table(Window.square(1.0, 0.25), 0.25, 0.5)
        print("✅ 零偏移、s 越界、半径错误均被拒绝")

    def test_tail(self):
        """测试解析尾部"""
        print("\n=== 测试解析尾部 ===")
        self.assertAlmostEqual(tail(1.0, 0.25, 2), 4.0 * math.pi, places=12)
        self.assertAlmostEqual(tail(2.0, 0.5, 2), math.pi, places=12)
        radial, _ = integrate.quad(lambda r: 2 * math.pi * r ** (-2.0), 2.0, np.inf)
        self.assertAlmostEqual(tail(2.0, 0.5, 2), radial, places=8)
        for s in (0.1, 0.01, 0.001):
            self.assertAlmostEqual(2 * s * tail(1.0, s, 2) / (2 * math.pi), 1.0, places=12)
        print("✅ τ(R) = ω R^{−2s}/(2s)")

    def test_build_table(self):
        """测试权重表构建"""
        print("\n=== 测试权重表 ===")
        window = Window.square(0.5, 1.0 / 32)
        table = build_table(window, 0.25, 2.0, threads=1)
        self.assertEqual(table.radius_cells, 64)
        r = np.sqrt(np.sum(table.offsets.astype(float) ** 2, axis=1))
        self.assertTrue(np.all(r <= 64.0 + 1e-9))
        self.assertEqual(table.size, int(np.sum(r > 0)))
        self.assertTrue(np.all(table.weights > 0.0))
        for offset in ((1, 0), (3, 3), (0, -40), (45, 45)):
            self.assertAlmostEqual(table.weight_of(offset), pair_weight(offset, 1.0 / 32, 0.25, 2), places=15)
        self.assertEqual(table.weight_of((50, 50)), 0.0)
        print(f"✅ R_t=2, h=1/32: {table.size} 个偏移")

        parallel = build_table(window, 0.25, 2.0, threads=4)
        self.assertTrue(np.array_equal(table.offsets, parallel.offsets))
        self.assertTrue(np.array_equal(table.weights, parallel.weights))
        print("✅ 不同线程数得到逐位相同的表")

        half_offsets, half_weights = table.half()
        self.assertEqual(2 * half_offsets.shape[0], table.size)
        self.assertTrue(np.all((half_offsets[:, 0] > 0) | ((half_offsets[:, 0] == 0) & (half_offsets[:, 1] > 0))))

    def test_weights_decrease_in_s(self):
        """测试分离大于 1 时权重随 s 递减"""
        window = Window.square(0.5, 1.0 / 32)
        low = build_table(window, 0.01, 2.0)
        high = build_table(window, 0.49, 2.0)
        far = np.sqrt(np.sum(low.offsets.astype(float) ** 2, axis=1)) * low.h > 1.0
        self.assertTrue(far.any())
        self.assertTrue(np.all(high.weights[far] < low.weights[far]))
        print(f"✅ {int(far.sum())} 个远偏移的权重随 s 严格递减")

    def test_tail_consistency(self):
        """测试截断和 + 尾部 ≈ 内半径尾部"""
        s, r, big_r, h = 0.25, 0.25, 1.0, 1.0 / 64
        table = build_table(Window.square(0.5, h), s, big_r)
        dist = np.sqrt(np.sum(table.offsets.astype(float) ** 2, axis=1)) * h
        annulus = kahan_sum(table.weights[dist > r]) / h ** 2
        approx = annulus + tail(big_r, s, 2)
        self.assertAlmostEqual(approx / tail(r, s, 2), 1.0, delta=0.02)
        print(f"✅ 截断和+尾部 / τ(r) = {approx / tail(r, s, 2):.5f}")

    def test_table_too_large(self):
        """测试偏移数上限"""
        with patch("config.Config.TABLE_OFFSET_CAP", 1000):
            with self.assertRaises(MemoryError):
                build_table(Window.square(0.5, 1.0 / 32), 0.25, 2.0)
        print("✅ 超过上限时报告 TableTooLarge")

    def test_table_cache(self):
        """测试表缓存"""
        window = Window.square(0.5, 0.125)
        with tempfile.TemporaryDirectory() as tmp:
            table = build_table(window, 0.3, 1.0)
            path = os.path.join(tmp, "table.npz")
            save_table(table, path)
            loaded = load_table(path)
            self.assertTrue(np.array_equal(loaded.weights, table.weights))
            self.assertEqual((loaded.n, loaded.h, loaded.s, loaded.rt), (2, 0.125, 0.3, 1.0))

            with patch("config.Config.CACHE_DIR", tmp):
                before = kernel.get_kernel_stats()
                first = build_table(window, 0.35, 1.0)
                second = build_table(window, 0.35, 1.0)
                after = kernel.get_kernel_stats()
            self.assertTrue(np.array_equal(first.weights, second.weights))
            self.assertEqual(after["cache_hits"] - before["cache_hits"], 1)
        print("✅ .npz 缓存读写一致")

    def test_kahan(self):
        """测试补偿求和"""
        self.assertEqual(kahan_sum([0.1] * 10), 1.0)
        acc = KahanAccumulator((2,))
        for _ in range(10):
            acc.add([0.1, 0.2])
        self.assertEqual(acc.value[0], 1.0)
        self.assertAlmostEqual(acc.value[1], 2.0, places=15)
        print("✅ Kahan 求和")


def main():
    """主函数"""
    print("核函数模块测试")
    print(f"Python版本: {sys.version}")
    suite = unittest.TestLoader().loadTestsFromTestCase(KernelTestCase)
    result = unittest.TextTestRunner(verbosity=1).run(suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(main())
