# euler_lagrange.py
"""
Euler-Lagrange 积分（分数阶平均曲率）

H_s(x₀) = P.V. ∫ (χ_E(x₀+y) − χ_{ℝⁿ∖E}(x₀+y)) |y|^{−(n+2s)} dy

极坐标网格：ρ 在 [ρ₀, R_t] 上按对数等距，角度取半步偏移的均匀网格（y 与 −y 成对出现）。
每个环先按整数累加 ±1，再乘以权重，所以对称集合得到精确的 0。
R_t 以外用解析尾部 τ(R_t)·(2·density − 1)。
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from errors import BadRadii, NotOnBoundary
from kernel import check_s, kahan_sum, tail
from shapes import ShapeSpec, surface_measure

DEFAULT_RT = 16.0


@dataclass(frozen=True)
class ELValue:
    """一个边界点上的 EL 积分"""
    point: Tuple[float, ...]
    value: float
    rho0: float
    rt: float
    error: float
    near_annulus: float
    far_tail: float
    near_error: float

    def components(self) -> dict:
        return {"near_annulus": self.near_annulus, "far_tail": self.far_tail}


def _directions(n: int, angles: int) -> Tuple[np.ndarray, float]:
    if n == 1:
        return np.array([[1.0], [-1.0]]), 1.0
    theta = (np.arange(angles) + 0.5) * (2.0 * math.pi / angles)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1), 2.0 * math.pi / angles


def _check_boundary(spec: ShapeSpec, x0: np.ndarray, radius: float) -> None:
    dirs, _ = _directions(spec.dimension, 64)
    ring = spec.contains(x0 + radius * dirs)
    if ring.all() or not ring.any():
        raise NotOnBoundary(f"x₀={tuple(x0)} 不在 ∂E 上（半径 {radius:g} 的圆上隶属关系不变）")


def _ring_sum(spec: ShapeSpec, x0: np.ndarray, s: float, rho0: float, rt: float,
              per_decade: int, angles: int) -> Tuple[float, float]:
    """返回 (环形区域积分, 最内环的带符号不平衡比例)"""
    dirs, dtheta = _directions(spec.dimension, angles)
    count = max(1, int(math.ceil(math.log10(rt / rho0) * per_decade)))
    dlog = math.log(rt / rho0) / count
    radii = rho0 * np.exp((np.arange(count) + 0.5) * dlog)

    terms = []
    innermost = 0.0
    # 分块避免一次生成过大的点集
    block = max(1, 65536 // dirs.shape[0])
    for start in range(0, count, block):
        rho = radii[start:start + block]
        pts = x0 + rho[:, np.newaxis, np.newaxis] * dirs[np.newaxis, :, :]
        member = spec.contains(pts)
        net = 2 * np.count_nonzero(member, axis=1).astype(np.int64) - member.shape[1]
        if start == 0:
            innermost = float(net[0]) / member.shape[1]
        for r, k in zip(rho, net):
            if k:
                terms.append(r ** (-2.0 * s) * dlog * dtheta * float(k))
    return kahan_sum(terms), innermost


def el_integral(spec: ShapeSpec, x0: Sequence[float], s: float, rho0: Optional[float] = None,
                rt: Optional[float] = None, radii_per_decade: Optional[int] = None,
                angles: Optional[int] = None, estimate_error: bool = True) -> ELValue:
    check_s(s, 0.5, "s ∈ (0,1/2)")
    rt = float(rt) if rt is not None else DEFAULT_RT
    rho0 = float(rho0) if rho0 is not None else 1e-4 * rt
    if not (0.0 < rho0 < rt):
        raise BadRadii(f"需要 0 < ρ₀ < R_t, 收到 ρ₀={rho0}, R_t={rt}")
    per_decade = radii_per_decade or Config.EL_RADII_PER_DECADE
    angles = angles or Config.EL_ANGLES
    if angles % 2:
        raise BadRadii(f"角度数必须为偶数（y 与 −y 成对）: {angles}")

    point = np.asarray(x0, dtype=float)
    if point.shape != (spec.dimension,):
        raise NotOnBoundary(f"x₀ 维数与形状维数 {spec.dimension} 不一致")
    _check_boundary(spec, point, rho0)

    density = spec.asymptotic_density()
    occupancy = density.value if density.defined else spec.tail_occupancy(rt, s)
    far = tail(rt, s, spec.dimension) * (2.0 * occupancy - 1.0)

    near, imbalance = _ring_sum(spec, point, s, rho0, rt, per_decade, angles)
    omega = surface_measure(spec.dimension)
    # 光滑边界上不平衡比例 ∝ ρ，B_ρ₀ 内的主值贡献约为 ω·m₀·ρ₀^{−2s}/(1−2s)
    near_error = omega * abs(imbalance) * rho0 ** (-2.0 * s) / (1.0 - 2.0 * s)
    value = near + far

    error = near_error
    if estimate_error:
        refined, _ = _ring_sum(spec, point, s, 0.5 * rho0, rt, 2 * per_decade, 2 * angles)
        error += abs(refined - near)

    if Config.DEBUG_MODE:
        print(f"[EL] x₀={tuple(point)}, s={s:g}: value={value:.6g} ± {error:.2g}")
    return ELValue(tuple(point.tolist()), value, rho0, rt, error, near, far, near_error)


def el_profile(spec: ShapeSpec, points: Sequence[Sequence[float]], s: float,
               rho0: Optional[float] = None, rt: Optional[float] = None,
               estimate_error: bool = True) -> List[ELValue]:
    """沿边界的批量计算（按点并行，结果顺序与输入一致）"""
    points = [tuple(p) for p in points]
    workers = max(1, min(Config.THREADS, len(points)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(
            lambda p: el_integral(spec, p, s, rho0, rt, estimate_error=estimate_error), points))
