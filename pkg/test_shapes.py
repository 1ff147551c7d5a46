#!/usr/bin/env python3
# test_shapes.py
"""
形状模块测试 - 隶属关系、渐近密度、闭式局部量、栅格化与文法解析
"""

import math
import os
import sys
import tempfile
import unittest

import numpy as np

from errors import BadWindow, ShapeParseError, TailUnavailable, UnsupportedShape
from shapes import (
    Ball,
    Complement,
    Cone2D,
    CrossCone,
    CrossConePlusSquare,
    HalfPlane,
    OscillatingCone,
    RectUnion,
    Window,
    asymptotic_density,
    export_pgm,
    exact_local_quantities,
    mask_to_pgm,
    parse_shape,
    rasterize,
)


class ShapesTestCase(unittest.TestCase):
    """形状测试用例"""

    def test_rasterize_examples(self):
        """测试栅格化示例"""
        print("\n=== 测试栅格化 ===")
        window = Window.square(1.0, 0.5)
        gs = rasterize(HalfPlane((0.0, 1.0), 0.0), window)
        self.assertEqual(gs.mask.shape, (4, 4))
        self.assertTrue(gs.mask[:, :2].all())
        self.assertFalse(gs.mask[:, 2:].any())
        print("✅ 半平面: 下两行为真，上两行为假")

        gs = rasterize(Ball(10.0), window)
        self.assertEqual(int(gs.mask.sum()), 16)
        print("✅ 大球覆盖全部 16 个单元")

        gs = rasterize(CrossCone(), Window.square(1.0, 1.0))
        self.assertEqual(int(gs.mask.sum()), 2)
        self.assertTrue(gs.mask[0, 0] and gs.mask[1, 1])
        print("✅ 十字锥: 4 个单元中 2 个为真")

    def test_rasterize_monotone(self):
        """测试栅格化单调性"""
        window = Window.square(1.0, 1.0 / 16)
        small = rasterize(Ball(0.3, (0.1, 0.0)), window).mask
        big = rasterize(Ball(0.6, (0.1, 0.0)), window).mask
        self.assertTrue(np.all(small <= big))
        cone = rasterize(Cone2D(math.pi / 4), window).mask
        wide = rasterize(Cone2D(math.pi / 2), window).mask
        self.assertTrue(np.all(cone <= wide))
        print("✅ 包含关系在单元上保持")

    def test_asymptotic_density(self):
        """测试渐近密度"""
        print("\n=== 测试渐近密度 ===")
        self.assertEqual(asymptotic_density(HalfPlane()).value, 0.5)
        self.assertEqual(asymptotic_density(Ball(3.0, (1.0, 2.0))).value, 0.0)
        self.assertEqual(asymptotic_density(RectUnion((((0.0, 0.0), (1.0, 1.0)),))).value, 0.0)
        self.assertAlmostEqual(asymptotic_density(Cone2D(math.pi / 3)).value, 1.0 / 6.0, places=15)
        self.assertAlmostEqual(
            asymptotic_density(Cone2D(math.pi / 3, complement_flag=True)).value, 5.0 / 6.0, places=15)
        self.assertAlmostEqual(asymptotic_density(Complement(Cone2D(math.pi / 3))).value, 5.0 / 6.0, places=15)

        osc = asymptotic_density(OscillatingCone())
        self.assertFalse(osc.defined)
        self.assertAlmostEqual(osc.lo, 1.0 / 12.0)
        self.assertAlmostEqual(osc.hi, 11.0 / 12.0)
        with self.assertRaises(TailUnavailable):
            _ = osc.value
        print("✅ 半平面 1/2, 球 0, 锥 θ/2π, 补集 1−θ/2π, 振荡锥为区间")

    def test_cone_tail_matches_radial_quadrature(self):
        """测试锥尾部与径向求积一致"""
        from scipy import integrate
        cone = Cone2D(math.pi / 3, bisector=0.7)
        for s in (0.05, 0.2, 0.45):
            radial, _ = integrate.quad(lambda rho: 2 * s * rho ** (-1 - 2 * s), 1.0, np.inf)
            self.assertAlmostEqual(cone.tail_occupancy(1.0, s), radial / 6.0, places=8)
        shifted = Cone2D(math.pi / 2, apex=(0.3, -0.2))
        # 顶点偏离原点时尾部随 s↘0 趋于角密度
        self.assertAlmostEqual(shifted.tail_occupancy(1.0, 0.001), 0.25, places=2)
        print("✅ 锥的 a(E) 等于 θ/2π")

    def test_ball_tail_vanishes_beyond_circumradius(self):
        """测试有界集合尾部"""
        ball = Ball(0.5, (0.2, 0.0))
        self.assertEqual(ball.tail_occupancy(1.0, 0.25), 0.0)
        big = Ball(3.0)
        values = [big.tail_occupancy(1.0, s) for s in (0.2, 0.05, 0.01)]
        for s, v in zip((0.2, 0.05, 0.01), values):
            self.assertAlmostEqual(v, 1.0 - 3.0 ** (-2 * s), places=8)
        self.assertTrue(values[0] > values[1] > values[2])
        print(f"✅ Ball(3) 尾部随 s↘0 趋于 0: {values}")

    def test_oscillating_tail_matches_annulus_sum(self):
        """测试振荡锥精确尾部"""
        osc = OscillatingCone()
        occ = (osc.theta_small / (2 * math.pi), osc.theta_big / (2 * math.pi))
        for s in (0.25, 0.1, 0.05, 0.025, 0.0125):
            expected = 0.0
            for k in range(6000):
                inner, outer = 4.0 ** k, 4.0 ** (k + 1)
                expected += occ[k % 2] * (inner ** (-2 * s) - outer ** (-2 * s))
            self.assertAlmostEqual(osc.tail_occupancy(1.0, s), expected, places=9)
            self.assertGreaterEqual(osc.tail_occupancy(1.0, s), osc.asymptotic_density().lo)
            self.assertLessEqual(osc.tail_occupancy(1.0, s), osc.asymptotic_density().hi)
        print("✅ 振荡锥尾部等于逐环求和")

    def test_exact_local_quantities(self):
        """测试闭式局部量"""
        print("\n=== 测试闭式局部量 ===")
        q = exact_local_quantities(HalfPlane(), 1.0)
        self.assertAlmostEqual(q.perimeter_in_br, 2.0)
        self.assertAlmostEqual(q.measure_e_in_br, math.pi / 2)
        self.assertAlmostEqual(q.measure_complement_in_br, math.pi / 2)

        q = exact_local_quantities(CrossCone(), 1.0)
        self.assertAlmostEqual(q.perimeter_in_br, 4.0)
        self.assertAlmostEqual(q.measure_e_in_br, math.pi / 2)

        q = exact_local_quantities(Ball(0.5), 1.0)
        self.assertAlmostEqual(q.perimeter_in_br, math.pi)
        self.assertAlmostEqual(q.measure_e_in_br, math.pi / 4)

        q = exact_local_quantities(Cone2D(math.pi / 2), 1.0)
        self.assertAlmostEqual(q.measure_e_in_br, math.pi / 4)
        self.assertAlmostEqual(q.measure_complement_in_br, 3 * math.pi / 4)

        q = exact_local_quantities(CrossConePlusSquare(0.1), 1.0)
        self.assertAlmostEqual(q.measure_e_in_br - q.measure_complement_in_br, 0.02)

        lens = exact_local_quantities(Ball(0.6, (0.8, 0.0)), 1.0)
        self.assertAlmostEqual(lens.measure_e_in_br + lens.measure_complement_in_br, math.pi)
        self.assertTrue(0.0 < lens.measure_e_in_br < math.pi * 0.36)

        with self.assertRaises(UnsupportedShape):
            exact_local_quantities(OscillatingCone(), 1.0)
        with self.assertRaises(UnsupportedShape):
            exact_local_quantities(RectUnion((((0.0, 0.0), (1.0, 1.0)),)), 1.0)
        print("✅ 半平面、十字锥、球、锥、透镜的闭式量正确")

    def test_lens_against_grid(self):
        """测试透镜面积与网格测度"""
        window = Window.square(1.0, 1.0 / 128)
        spec = Ball(0.6, (0.8, 0.0))
        exact = exact_local_quantities(spec, 1.0)
        grid = rasterize(spec, window).restrict(1.0)
        self.assertAlmostEqual(grid.measure(), exact.measure_e_in_br, delta=0.01)

    def test_grid_measure_first_order(self):
        """测试网格测度一阶收敛"""
        spec = HalfPlane((0.3, 1.0), 0.1)
        exact = exact_local_quantities(spec, 0.75)
        for h in (1.0 / 16, 1.0 / 32):
            grid = rasterize(spec, Window.square(1.0, h)).restrict(0.75)
            err = abs(grid.measure() - exact.measure_e_in_br)
            self.assertLessEqual(err, 4.0 * h * exact.perimeter_in_br)
            print(f"✅ h={h:g}: 网格测度误差 {err:.3e}")

    def test_window_validation(self):
        """测试窗口校验"""
        with self.assertRaises(BadWindow):
            Window((0.0, 0.0), (1.0, 1.0), 0.3)
        with self.assertRaises(BadWindow):
            Window((0.0,), (1.0,), 1.0)
        with self.assertRaises(BadWindow):
            Window((0.0, 0.0), (1.0, 1.0), -0.5)
        window = Window.parse("-1,1,-2,2", 0.5)
        self.assertEqual(window.shape, (4, 8))
        with self.assertRaises(BadWindow):
            rasterize(HalfPlane((1.0,), 0.0), window)
        print("✅ 窗口校验正确")

    def test_one_dimensional_halfplane(self):
        """测试一维半直线"""
        window = Window((-1.0,), (1.0,), 0.25)
        gs = rasterize(HalfPlane((1.0,), 0.0), window)
        self.assertEqual(gs.mask.tolist(), [True] * 4 + [False] * 4)
        q = exact_local_quantities(HalfPlane((-1.0,), 0.5), 1.0)
        self.assertAlmostEqual(q.measure_e_in_br, 1.5)
        self.assertEqual(q.perimeter_in_br, 1.0)

    def test_parse_shape(self):
        """测试形状文法"""
        print("\n=== 测试形状文法 ===")
        hp = parse_shape("halfplane:ny=1,c=0")
        self.assertIsInstance(hp, HalfPlane)
        self.assertEqual(hp.normal, (0.0, 1.0))
        cone = parse_shape("cone:opening=1.0472")
        self.assertIsInstance(cone, Cone2D)
        self.assertAlmostEqual(cone.opening, 1.0472)
        self.assertAlmostEqual(parse_shape("cone:opening=pi/3").opening, math.pi / 3)
        self.assertIsInstance(parse_shape("crosscone"), CrossCone)
        sq = parse_shape("crosscone+sq:l=0.0625")
        self.assertEqual(sq.side, 0.0625)
        self.assertAlmostEqual(parse_shape("ball:r=0.5").radius, 0.5)
        rects = parse_shape("rects:b0=-1/-1/0/0,b1=0.5/0.5/1/1")
        self.assertEqual(len(rects.boxes), 2)
        osc = parse_shape("osccone:small=pi/6,big=11*pi/6")
        self.assertAlmostEqual(osc.theta_big, 11 * math.pi / 6)

        everything = parse_shape("~ball:r=0")
        self.assertTrue(np.all(everything.contains(np.random.default_rng(0).normal(size=(50, 2)))))
        self.assertEqual(everything.asymptotic_density().value, 1.0)

        for spec in (hp, cone, sq, rects, osc, everything):
            again = parse_shape(spec.to_grammar())
            self.assertEqual(type(again), type(spec))

        for bad in ("blob", "ball", "cone:opening=7", "halfplane:foo=1", "rects:b0=1/1/0/0", ""):
            with self.assertRaises(ShapeParseError):
                parse_shape(bad)
        print("✅ 文法解析与错误报告正确")

    def test_pgm_export(self):
        """测试 PGM 导出"""
        window = Window.square(1.0, 0.5)
        gs = rasterize(HalfPlane((0.0, 1.0), 0.0), window)
        text = mask_to_pgm(gs.mask)
        lines = text.strip().split("\n")
        self.assertEqual(lines[:3], ["P2", "4 4", "1"])
        self.assertEqual(lines[3], "0 0 0 0")
        self.assertEqual(lines[-1], "1 1 1 1")
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "mask.pgm")
            export_pgm(gs, path)
            with open(path) as fh:
                self.assertEqual(fh.read(), text)
        print("✅ PGM 从窗口顶部开始输出")


def main():
    """主函数"""
    print("形状模块测试")
    print(f"Python版本: {sys.version}")
    suite = unittest.TestLoader().loadTestsFromTestCase(ShapesTestCase)
    result = unittest.TextTestRunner(verbosity=1).run(suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(main())
