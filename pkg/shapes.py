# shapes.py
"""
解析集合描述（半平面、锥、十字锥、球、矩形并、振荡锥）及其离散化

所有形状都是不可变值对象：
- contains(points) 对 ℝⁿ 中任意点给出确定的隶属关系（开集约定，边界点不属于集合）
- asymptotic_density() 给出无穷远处的角密度 a(E)，振荡锥给出区间
- exact_local_quantities(r) 给出 B_r 内的经典周长与测度（有闭式时）
"""

from __future__ import annotations

import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Sequence, Union

import numpy as np
from scipy import integrate

from config import Config
from errors import (
    BadWindow,
    ShapeParseError,
    TailUnavailable,
    UnsupportedShape,
)


TWO_PI = 2.0 * math.pi


def surface_measure(n: int) -> float:
    """ω_{n−1} = H^{n−1}(S^{n−1})：n=1 时为两个点，n=2 时为 2π"""
    if n == 1:
        return 2.0
    if n == 2:
        return TWO_PI
    raise UnsupportedShape(f"只支持 n ∈ {{1,2}}, 收到 n={n}")


class ShapeKind(Enum):
    """形状种类枚举（与命令行文法的名字一致）"""
    HALF_PLANE = "halfplane"
    CONE = "cone"
    CROSS_CONE = "crosscone"
    CROSS_CONE_SQUARE = "crosscone+sq"
    BALL = "ball"
    RECT_UNION = "rects"
    OSCILLATING_CONE = "osccone"
    COMPLEMENT = "~"


@dataclass(frozen=True)
class Density:
    """渐近角密度；lo < hi 表示极限不存在（只知道上下极限）"""
    lo: float
    hi: float

    @property
    def defined(self) -> bool:
        return self.lo == self.hi

    @property
    def value(self) -> float:
        if not self.defined:
            raise TailUnavailable(f"渐近密度不存在: [{self.lo}, {self.hi}]")
        return self.lo

    def complement(self) -> "Density":
        return Density(1.0 - self.hi, 1.0 - self.lo)


@dataclass(frozen=True)
class LocalQuantities:
    """B_r 内的经典量"""
    perimeter_in_br: float
    measure_e_in_br: float
    measure_complement_in_br: float


def _wrap_angle(theta: np.ndarray) -> np.ndarray:
    return (theta + math.pi) % TWO_PI - math.pi


def _ball_measure(n: int, r: float) -> float:
    return 2.0 * r if n == 1 else math.pi * r * r


class ShapeSpec(ABC):
    """
    解析集合的抽象基类

    子类必须实现 contains / asymptotic_density / scaled / to_grammar，
    其余量（角占有率、尾部占有率、a(E)）有基于数值积分的默认实现。
    """

    kind: ShapeKind

    @property
    @abstractmethod
    def dimension(self) -> int:
        pass

    @abstractmethod
    def contains(self, points: np.ndarray) -> np.ndarray:
        """points 形状为 (..., n)，返回同前缀形状的布尔数组"""
        pass

    @abstractmethod
    def asymptotic_density(self) -> Density:
        pass

    @abstractmethod
    def scaled(self, factor: float) -> "ShapeSpec":
        """返回伸缩后的集合 factor·E"""
        pass

    @abstractmethod
    def to_grammar(self) -> str:
        pass

    # 可选覆盖

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        raise UnsupportedShape(f"{self.kind.value} 没有闭式局部量，请使用网格估计")

    def angular_occupancy(self, rho: float) -> float:
        """半径 rho 的球面上属于 E 的比例（默认用角度采样）"""
        if self.dimension == 1:
            pts = np.array([[rho], [-rho]])
            return float(np.mean(self.contains(pts)))
        count = 4096
        theta = (np.arange(count) + 0.5) * (TWO_PI / count)
        pts = np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1)
        return float(np.mean(self.contains(pts)))

    def occupancy_breakpoints(self) -> Sequence[float]:
        """角占有率不光滑的半径（给数值积分作为分点）"""
        return ()

    def tail_occupancy(self, radius: float, s: float) -> float:
        """
        (2s/ω) R^{2s} ∫_{|y|>R} χ_E(y) |y|^{−n−2s} dy

        换元 t = (ρ/R)^{−2s} 后等于 ∫_0^1 occ(R t^{−1/(2s)}) dt。
        """
        density = self.asymptotic_density()
        if not density.defined:
            raise TailUnavailable(f"{self.kind.value} 的渐近密度不存在，且没有精确尾部公式")
        exponent = -1.0 / (2.0 * s)

        def integrand(t: float) -> float:
            if t <= 0.0:
                return density.lo
            with np.errstate(over="ignore"):
                rho = radius * t ** exponent
            if not math.isfinite(rho):
                return density.lo
            return self.angular_occupancy(rho)

        points = sorted({
            (rho / radius) ** (-2.0 * s)
            for rho in self.occupancy_breakpoints()
            if rho > radius
        })
        value, _ = integrate.quad(integrand, 0.0, 1.0, points=points or None, limit=200)
        return float(min(max(value, 0.0), 1.0))

    def complement(self) -> "ShapeSpec":
        return Complement(self)

    def __str__(self) -> str:
        return self.to_grammar()


@dataclass(frozen=True)
class HalfPlane(ShapeSpec):
    """E = {x : ν·x < c}，ν 为外法向"""
    normal: Tuple[float, ...] = (0.0, 1.0)
    offset: float = 0.0
    kind = ShapeKind.HALF_PLANE

    def __post_init__(self):
        norm = math.sqrt(sum(v * v for v in self.normal))
        if norm == 0.0 or len(self.normal) not in (1, 2):
            raise ShapeParseError(f"半平面法向量无效: {self.normal}")
        object.__setattr__(self, "normal", tuple(float(v) / norm for v in self.normal))

    @property
    def dimension(self) -> int:
        return len(self.normal)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ np.asarray(self.normal) < self.offset

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """到边界的有符号距离，集合内部为负"""
        pts = np.asarray(points, dtype=float)
        return pts @ np.asarray(self.normal) - self.offset

    def asymptotic_density(self) -> Density:
        return Density(0.5, 0.5)

    def angular_occupancy(self, rho: float) -> float:
        c = self.offset
        if self.dimension == 1:
            return 0.5 * (float(rho * self.normal[0] < c) + float(-rho * self.normal[0] < c))
        if rho <= abs(c):
            return 1.0 if c > 0 else 0.0
        return 1.0 - math.acos(c / rho) / math.pi

    def occupancy_breakpoints(self) -> Sequence[float]:
        return (abs(self.offset),) if self.offset else ()

    def tail_occupancy(self, radius: float, s: float) -> float:
        if self.offset == 0.0:
            return 0.5
        return super().tail_occupancy(radius, s)

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        c = self.offset
        total = _ball_measure(self.dimension, r)
        if self.dimension == 1:
            boundary = c * self.normal[0]
            if self.normal[0] > 0:
                inside = min(max(boundary + r, 0.0), 2.0 * r)
            else:
                inside = min(max(r - boundary, 0.0), 2.0 * r)
            perimeter = 1.0 if abs(c) < r else 0.0
            return LocalQuantities(perimeter, inside, total - inside)
        if c >= r:
            return LocalQuantities(0.0, total, 0.0)
        if c <= -r:
            return LocalQuantities(0.0, 0.0, total)
        half_chord = math.sqrt(r * r - c * c)
        cap = r * r * math.acos(c / r) - c * half_chord
        return LocalQuantities(2.0 * half_chord, total - cap, cap)

    def scaled(self, factor: float) -> "HalfPlane":
        return HalfPlane(self.normal, self.offset * factor)

    def to_grammar(self) -> str:
        if self.dimension == 1:
            return f"halfplane:nx={self.normal[0]:g},c={self.offset:g},dim=1"
        return f"halfplane:nx={self.normal[0]:g},ny={self.normal[1]:g},c={self.offset:g}"


@dataclass(frozen=True)
class Cone2D(ShapeSpec):
    """以 apex 为顶点、bisector 为角平分线、张角 opening 的平面锥"""
    opening: float = math.pi / 2
    bisector: float = 0.0
    apex: Tuple[float, float] = (0.0, 0.0)
    complement_flag: bool = False
    kind = ShapeKind.CONE

    def __post_init__(self):
        if not (0.0 < self.opening < TWO_PI):
            raise ShapeParseError(f"锥张角必须在 (0,2π) 内: {self.opening}")

    @property
    def dimension(self) -> int:
        return 2

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        angle = np.arctan2(pts[..., 1] - self.apex[1], pts[..., 0] - self.apex[0])
        inside = np.abs(_wrap_angle(angle - self.bisector)) < 0.5 * self.opening
        return ~inside if self.complement_flag else inside

    def asymptotic_density(self) -> Density:
        d = self.opening / TWO_PI
        d = 1.0 - d if self.complement_flag else d
        return Density(d, d)

    def _apex_at_origin(self) -> bool:
        return self.apex[0] == 0.0 and self.apex[1] == 0.0

    def angular_occupancy(self, rho: float) -> float:
        if self._apex_at_origin():
            return self.asymptotic_density().value
        return super().angular_occupancy(rho)

    def occupancy_breakpoints(self) -> Sequence[float]:
        return (math.hypot(*self.apex),) if not self._apex_at_origin() else ()

    def tail_occupancy(self, radius: float, s: float) -> float:
        if self._apex_at_origin():
            return self.asymptotic_density().value
        return super().tail_occupancy(radius, s)

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        if not self._apex_at_origin():
            raise UnsupportedShape("顶点不在原点的锥没有闭式局部量")
        sector = 0.5 * self.opening * r * r
        total = math.pi * r * r
        inside = total - sector if self.complement_flag else sector
        return LocalQuantities(2.0 * r, inside, total - inside)

    def scaled(self, factor: float) -> "Cone2D":
        return Cone2D(self.opening, self.bisector,
                      (self.apex[0] * factor, self.apex[1] * factor), self.complement_flag)

    def to_grammar(self) -> str:
        text = f"cone:opening={self.opening:.12g},bisector={self.bisector:.12g}"
        if not self._apex_at_origin():
            text += f",ax={self.apex[0]:g},ay={self.apex[1]:g}"
        if self.complement_flag:
            text += ",complement=1"
        return text


@dataclass(frozen=True)
class CrossCone(ShapeSpec):
    """𝒦 = {xy > 0}"""
    kind = ShapeKind.CROSS_CONE

    @property
    def dimension(self) -> int:
        return 2

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts[..., 0] * pts[..., 1] > 0.0

    def asymptotic_density(self) -> Density:
        return Density(0.5, 0.5)

    def angular_occupancy(self, rho: float) -> float:
        return 0.5

    def tail_occupancy(self, radius: float, s: float) -> float:
        return 0.5

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        half = 0.5 * math.pi * r * r
        return LocalQuantities(4.0 * r, half, half)

    def scaled(self, factor: float) -> "CrossCone":
        return self

    def to_grammar(self) -> str:
        return "crosscone"


@dataclass(frozen=True)
class CrossConePlusSquare(ShapeSpec):
    """𝒦′ = 𝒦 ∪ [0,ℓ]×[−ℓ,0]（白色第四象限里贴着原点的小方块）"""
    side: float = 0.0625
    kind = ShapeKind.CROSS_CONE_SQUARE

    def __post_init__(self):
        if self.side <= 0.0:
            raise ShapeParseError(f"方块边长必须为正: {self.side}")

    @property
    def dimension(self) -> int:
        return 2

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        square = (x > 0.0) & (x < self.side) & (y < 0.0) & (y > -self.side)
        return (x * y > 0.0) | square

    def asymptotic_density(self) -> Density:
        return Density(0.5, 0.5)

    def angular_occupancy(self, rho: float) -> float:
        ell = self.side
        if rho <= ell:
            return 0.75
        if rho >= ell * math.sqrt(2.0):
            return 0.5
        arc = math.asin(ell / rho) - math.acos(ell / rho)
        return 0.5 + max(arc, 0.0) / TWO_PI

    def occupancy_breakpoints(self) -> Sequence[float]:
        return (self.side, self.side * math.sqrt(2.0))

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        if r < self.side * math.sqrt(2.0):
            raise UnsupportedShape("B_r 必须包含整个小方块")
        half = 0.5 * math.pi * r * r
        area = self.side * self.side
        return LocalQuantities(4.0 * r, half + area, half - area)

    def scaled(self, factor: float) -> "CrossConePlusSquare":
        return CrossConePlusSquare(self.side * factor)

    def to_grammar(self) -> str:
        return f"crosscone+sq:l={self.side:.12g}"


@dataclass(frozen=True)
class Ball(ShapeSpec):
    """开球 B_radius(center)"""
    radius: float = 0.5
    center: Tuple[float, ...] = (0.0, 0.0)
    kind = ShapeKind.BALL

    def __post_init__(self):
        if self.radius < 0.0 or len(self.center) not in (1, 2):
            raise ShapeParseError(f"球参数无效: r={self.radius}, center={self.center}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def dimension(self) -> int:
        return len(self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        diff = pts - np.asarray(self.center)
        return np.sum(diff * diff, axis=-1) < self.radius * self.radius

    def asymptotic_density(self) -> Density:
        return Density(0.0, 0.0)

    @property
    def circumradius(self) -> float:
        return math.sqrt(sum(v * v for v in self.center)) + self.radius

    def angular_occupancy(self, rho: float) -> float:
        d = math.sqrt(sum(v * v for v in self.center))
        r = self.radius
        if self.dimension == 1:
            return super().angular_occupancy(rho)
        if rho <= r - d:
            return 1.0
        if rho >= r + d or rho <= d - r:
            return 0.0
        cos_alpha = (rho * rho + d * d - r * r) / (2.0 * rho * d)
        return math.acos(min(max(cos_alpha, -1.0), 1.0)) / math.pi

    def occupancy_breakpoints(self) -> Sequence[float]:
        d = math.sqrt(sum(v * v for v in self.center))
        return tuple(v for v in (abs(self.radius - d), self.radius + d) if v > 0.0)

    def tail_occupancy(self, radius: float, s: float) -> float:
        if radius >= self.circumradius:
            return 0.0
        return super().tail_occupancy(radius, s)

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        n = self.dimension
        total = _ball_measure(n, r)
        d = math.sqrt(sum(v * v for v in self.center))
        rho = self.radius
        if n == 1:
            lo, hi = self.center[0] - rho, self.center[0] + rho
            inside = max(0.0, min(hi, r) - max(lo, -r))
            perimeter = float(-r < lo < r) + float(-r < hi < r)
            return LocalQuantities(perimeter, inside, total - inside)
        if d + rho <= r:
            inside = math.pi * rho * rho
            return LocalQuantities(TWO_PI * rho, inside, total - inside)
        if d >= r + rho:
            return LocalQuantities(0.0, 0.0, total)
        if d + r <= rho:
            return LocalQuantities(0.0, total, 0.0)
        # 两圆相交：弧长与透镜面积
        kappa = (r * r - d * d - rho * rho) / (2.0 * d * rho)
        arc = 2.0 * rho * (math.pi - math.acos(min(max(kappa, -1.0), 1.0)))
        a1 = rho * rho * math.acos(min(max((d * d + rho * rho - r * r) / (2 * d * rho), -1.0), 1.0))
        a2 = r * r * math.acos(min(max((d * d + r * r - rho * rho) / (2 * d * r), -1.0), 1.0))
        a3 = 0.5 * math.sqrt(max((-d + rho + r) * (d + rho - r) * (d - rho + r) * (d + rho + r), 0.0))
        inside = a1 + a2 - a3
        return LocalQuantities(arc, inside, total - inside)

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.radius * factor, tuple(v * factor for v in self.center))

    def to_grammar(self) -> str:
        if self.dimension == 1:
            return f"ball:r={self.radius:.12g},cx={self.center[0]:g},dim=1"
        return f"ball:r={self.radius:.12g},cx={self.center[0]:g},cy={self.center[1]:g}"


@dataclass(frozen=True)
class RectUnion(ShapeSpec):
    """轴对齐开盒子的并"""
    boxes: Tuple[Tuple[Tuple[float, ...], Tuple[float, ...]], ...] = ()
    kind = ShapeKind.RECT_UNION

    def __post_init__(self):
        if not self.boxes:
            raise ShapeParseError("矩形并至少需要一个盒子")
        dims = {len(lo) for lo, _ in self.boxes} | {len(hi) for _, hi in self.boxes}
        if len(dims) != 1 or dims.pop() not in (1, 2):
            raise ShapeParseError(f"盒子维数不一致: {self.boxes}")

    @property
    def dimension(self) -> int:
        return len(self.boxes[0][0])

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        result = np.zeros(pts.shape[:-1], dtype=bool)
        for lo, hi in self.boxes:
            result |= np.all((pts > np.asarray(lo)) & (pts < np.asarray(hi)), axis=-1)
        return result

    def asymptotic_density(self) -> Density:
        return Density(0.0, 0.0)

    @property
    def circumradius(self) -> float:
        corners = []
        for lo, hi in self.boxes:
            corners.append(math.sqrt(sum(max(abs(a), abs(b)) ** 2 for a, b in zip(lo, hi))))
        return max(corners)

    def tail_occupancy(self, radius: float, s: float) -> float:
        if radius >= self.circumradius:
            return 0.0
        return super().tail_occupancy(radius, s)

    def scaled(self, factor: float) -> "RectUnion":
        return RectUnion(tuple(
            (tuple(v * factor for v in lo), tuple(v * factor for v in hi)) for lo, hi in self.boxes
        ))

    def to_grammar(self) -> str:
        parts = []
        for i, (lo, hi) in enumerate(self.boxes):
            parts.append(f"b{i}=" + "/".join(f"{v:g}" for v in (*lo, *hi)))
        return "rects:" + ",".join(parts)


@dataclass(frozen=True)
class OscillatingCone(ShapeSpec):
    """
    振荡锥：环 [r0·q^k, r0·q^{k+1}) 上张角在 θ_small（k 偶）与 θ_big（k 奇）之间交替，
    r < r0 处取 θ_small。渐近密度不存在。
    """
    theta_small: float = math.pi / 6
    theta_big: float = 11 * math.pi / 6
    r0: float = 1.0
    ratio: float = 4.0
    bisector: float = 0.0
    kind = ShapeKind.OSCILLATING_CONE

    def __post_init__(self):
        if not (0.0 < self.theta_small < TWO_PI and 0.0 < self.theta_big < TWO_PI):
            raise ShapeParseError("振荡锥张角必须在 (0,2π) 内")
        if self.r0 <= 0.0 or self.ratio <= 1.0:
            raise ShapeParseError("振荡锥半径参数无效")

    @property
    def dimension(self) -> int:
        return 2

    def _annulus_index(self, rho: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            k = np.floor(np.log(np.maximum(rho, 1e-300) / self.r0) / math.log(self.ratio))
        return np.where(rho < self.r0, -2, k).astype(np.int64)

    def opening_at(self, rho: np.ndarray) -> np.ndarray:
        k = self._annulus_index(np.asarray(rho, dtype=float))
        return np.where(k % 2 == 0, self.theta_small, self.theta_big)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        rho = np.hypot(pts[..., 0], pts[..., 1])
        angle = _wrap_angle(np.arctan2(pts[..., 1], pts[..., 0]) - self.bisector)
        return np.abs(angle) < 0.5 * self.opening_at(rho)

    def asymptotic_density(self) -> Density:
        a, b = sorted((self.theta_small / TWO_PI, self.theta_big / TWO_PI))
        return Density(a, b)

    def angular_occupancy(self, rho: float) -> float:
        return float(self.opening_at(np.asarray(rho))) / TWO_PI

    def tail_occupancy(self, radius: float, s: float) -> float:
        """分段锥的精确尾部：环上的 ρ^{−2s} 增量按奇偶分组求几何级数"""
        two_s = 2.0 * s
        q = self.ratio ** (-two_s)
        occ = (self.theta_small / TWO_PI, self.theta_big / TWO_PI)
        total = 0.0
        if radius < self.r0:
            total += occ[0] * (radius ** (-two_s) - self.r0 ** (-two_s))
            k1 = 0
        else:
            k0 = int(self._annulus_index(np.asarray(radius)))
            outer = self.r0 * self.ratio ** (k0 + 1)
            total += occ[k0 % 2] * (radius ** (-two_s) - outer ** (-two_s))
            k1 = k0 + 1
        # Σ_{k≥k1} occ_k · r0^{−2s} q^k (1−q)
        base = self.r0 ** (-two_s) * (1.0 - q) / (1.0 - q * q)
        first_even = k1 if k1 % 2 == 0 else k1 + 1
        first_odd = k1 if k1 % 2 == 1 else k1 + 1
        total += base * (occ[0] * q ** first_even + occ[1] * q ** first_odd)
        return float(min(max(total / radius ** (-two_s), 0.0), 1.0))

    def scaled(self, factor: float) -> "OscillatingCone":
        return OscillatingCone(self.theta_small, self.theta_big, self.r0 * factor,
                               self.ratio, self.bisector)

    def to_grammar(self) -> str:
        return (f"osccone:small={self.theta_small:.12g},big={self.theta_big:.12g},"
                f"r0={self.r0:g},ratio={self.ratio:g}")


@dataclass(frozen=True)
class Complement(ShapeSpec):
    """ℝⁿ∖E"""
    inner: ShapeSpec = field(default_factory=CrossCone)
    kind = ShapeKind.COMPLEMENT

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    def contains(self, points: np.ndarray) -> np.ndarray:
        return ~self.inner.contains(points)

    def asymptotic_density(self) -> Density:
        return self.inner.asymptotic_density().complement()

    def angular_occupancy(self, rho: float) -> float:
        return 1.0 - self.inner.angular_occupancy(rho)

    def occupancy_breakpoints(self) -> Sequence[float]:
        return self.inner.occupancy_breakpoints()

    def tail_occupancy(self, radius: float, s: float) -> float:
        return 1.0 - self.inner.tail_occupancy(radius, s)

    def exact_local_quantities(self, r: float) -> LocalQuantities:
        q = self.inner.exact_local_quantities(r)
        return LocalQuantities(q.perimeter_in_br, q.measure_complement_in_br, q.measure_e_in_br)

    def scaled(self, factor: float) -> "Complement":
        return Complement(self.inner.scaled(factor))

    def complement(self) -> ShapeSpec:
        return self.inner

    def to_grammar(self) -> str:
        return "~" + self.inner.to_grammar()


def asymptotic_density(spec: ShapeSpec) -> Density:
    """a(E)：锥/半平面给精确角比例，有界集合为 0，振荡锥给区间"""
    return spec.asymptotic_density()


def exact_local_quantities(spec: ShapeSpec, r: float) -> LocalQuantities:
    if r <= 0.0:
        raise BadWindow(f"半径必须为正: {r}")
    return spec.exact_local_quantities(r)


# 窗口与网格集合

@dataclass(frozen=True)
class Window:
    """均匀格点窗口 [lower, upper]，单元边长 h"""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    h: float

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or len(self.lower) not in (1, 2):
            raise BadWindow(f"窗口维数无效: {self.lower}, {self.upper}")
        if not self.h > 0.0:
            raise BadWindow(f"分辨率必须为正: h={self.h}")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        for lo, hi in zip(self.lower, self.upper):
            cells = (hi - lo) / self.h
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise BadWindow(f"边长 {hi - lo} 不是 h={self.h} 的整数倍")
            if round(cells) < 2:
                raise BadWindow("每个方向至少需要 2 个单元")

    @classmethod
    def square(cls, half_width: float, h: float, n: int = 2) -> "Window":
        return cls(tuple([-half_width] * n), tuple([half_width] * n), h)

    @classmethod
    def parse(cls, text: str, h: float) -> "Window":
        """'-1,1,-1,1' 或 '-1,1'（一维）"""
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as e:
            raise BadWindow(f"窗口格式无效: {text!r} ({e})")
        if len(values) not in (2, 4):
            raise BadWindow(f"窗口需要 2 或 4 个数: {text!r}")
        return cls(tuple(values[0::2]), tuple(values[1::2]), h)

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(round((hi - lo) / self.h)) for lo, hi in zip(self.lower, self.upper))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def half_width(self) -> float:
        return 0.5 * min(hi - lo for lo, hi in zip(self.lower, self.upper))

    def axis_centers(self, pad: int = 0):
        return [lo + (np.arange(-pad, m + pad) + 0.5) * self.h
                for lo, m in zip(self.lower, self.shape)]

    def centers(self, pad: int = 0) -> np.ndarray:
        """单元中心，形状 (*shape, n)，ij 索引（第 0 轴为 x）"""
        grids = np.meshgrid(*self.axis_centers(pad), indexing="ij")
        return np.stack(grids, axis=-1)

    def nearest_index(self, points: np.ndarray):
        """最近单元的整数索引以及是否落在窗口内"""
        pts = np.asarray(points, dtype=float)
        idx = [np.floor((pts[..., k] - self.lower[k]) / self.h).astype(np.int64)
               for k in range(self.n)]
        inside = np.ones(pts.shape[:-1], dtype=bool)
        for k, m in enumerate(self.shape):
            inside &= (idx[k] >= 0) & (idx[k] < m)
        return idx, inside

    def to_text(self) -> str:
        return ",".join(f"{lo:g},{hi:g}" for lo, hi in zip(self.lower, self.upper))


@dataclass(frozen=True, eq=False)
class GridSet:
    """
    窗口上的二值占有掩码 + 决定窗口外部的解析形状

    domain 为 U 中的单元（默认整个窗口）；窗口内 U 以外的单元也视为外部数据，
    其隶属关系由 exterior 决定。
    """
    window: Window
    mask: np.ndarray
    exterior: ShapeSpec
    domain: Optional[np.ndarray] = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.window.shape:
            raise BadWindow(f"掩码形状 {mask.shape} 与窗口 {self.window.shape} 不一致")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if self.domain is not None:
            dom = np.asarray(self.domain, dtype=bool)
            if dom.shape != mask.shape:
                raise BadWindow("domain 形状与掩码不一致")
            dom.setflags(write=False)
            object.__setattr__(self, "domain", dom)

    @property
    def domain_mask(self) -> np.ndarray:
        if self.domain is None:
            return np.ones(self.window.shape, dtype=bool)
        return self.domain

    def restrict(self, radius: float, center: Sequence[float] = None) -> "GridSet":
        """U = 中心落在 B_radius(center) 内的单元"""
        c = np.zeros(self.window.n) if center is None else np.asarray(center, dtype=float)
        pts = self.window.centers() - c
        inside = np.sum(pts * pts, axis=-1) < radius * radius
        if radius > self.window.half_width:
            raise BadWindow(f"B_{radius} 超出窗口（半宽 {self.window.half_width}）")
        return GridSet(self.window, self.mask, self.exterior, inside)

    def with_mask(self, mask: np.ndarray) -> "GridSet":
        return GridSet(self.window, mask, self.exterior, self.domain)

    def effective_mask(self) -> np.ndarray:
        """U 内用掩码，U 外用外部形状"""
        if self.domain is None:
            return self.mask
        outside = self.exterior.contains(self.window.centers())
        return np.where(self.domain, self.mask, outside)

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.mask & self.domain_mask))

    def measure(self) -> float:
        """E∩U 的网格测度 hⁿ × popcount"""
        return self.popcount * self.window.cell_volume

    def complement_measure(self) -> float:
        return int(np.count_nonzero(~self.mask & self.domain_mask)) * self.window.cell_volume


def rasterize(spec: ShapeSpec, window: Window) -> GridSet:
    """每个单元的比特 = 单元中心的隶属关系"""
    if spec.dimension != window.n:
        raise BadWindow(f"形状维数 {spec.dimension} 与窗口维数 {window.n} 不一致")
    mask = spec.contains(window.centers())
    if Config.DEBUG_MODE:
        print(f"[Shapes] 栅格化 {spec.to_grammar()}: {int(mask.sum())}/{mask.size} 单元")
    return GridSet(window, mask, spec)


# 导出

def mask_to_pgm(mask: np.ndarray) -> str:
    """P2 纯文本，maxval 1，从窗口顶部开始按行输出"""
    arr = np.asarray(mask, dtype=np.uint8)
    if arr.ndim == 1:
        rows = arr[np.newaxis, :]
    else:
        rows = arr.T[::-1]
    lines = ["P2", f"{rows.shape[1]} {rows.shape[0]}", "1"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def export_pgm(gridset: GridSet, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(mask_to_pgm(gridset.mask))
    if Config.DEBUG_MODE:
        print(f"[Shapes] ✅ PGM 已写入: {path}")


# 命令行文法

_PI_PATTERN = re.compile(r"^(-?[0-9.]*)\*?pi(?:/([0-9.]+))?$")


def _number(text: str) -> float:
    text = text.strip().lower()
    try:
        return float(text)
    except ValueError:
        pass
    match = _PI_PATTERN.match(text)
    if not match:
        raise ShapeParseError(f"无法解析数值: {text!r}")
    factor = match.group(1)
    value = math.pi * (float(factor) if factor not in ("", "-") else (-1.0 if factor == "-" else 1.0))
    if match.group(2):
        value /= float(match.group(2))
    return value


def _params(body: str) -> dict:
    params = {}
    if not body:
        return params
    for item in body.split(","):
        if "=" not in item:
            raise ShapeParseError(f"参数需要 key=value 形式: {item!r}")
        key, value = item.split("=", 1)
        params[key.strip().lower()] = value.strip()
    return params


def _take(params: dict, allowed: set, name: str) -> None:
    unknown = set(params) - allowed
    if unknown:
        raise ShapeParseError(f"{name} 不支持参数: {', '.join(sorted(unknown))}")


def parse_shape(text: str) -> ShapeSpec:
    """
    解析形状文法，例如:
      halfplane:ny=1,c=0   cone:opening=1.0472   crosscone   crosscone+sq:l=0.0625
      ball:r=0.5   rects:b0=-1/-1/0/0   osccone:small=pi/6,big=11*pi/6   ~ball:r=0
    """
    if not text or not text.strip():
        raise ShapeParseError("形状字符串为空")
    text = text.strip()
    if text.startswith("~"):
        return Complement(parse_shape(text[1:]))
    name, _, body = text.partition(":")
    name = name.strip().lower()
    params = _params(body)
    try:
        if name == "halfplane":
            _take(params, {"nx", "ny", "c", "dim"}, name)
            dim = int(params.get("dim", "2"))
            if dim == 1:
                return HalfPlane((_number(params.get("nx", "1")),), _number(params.get("c", "0")))
            return HalfPlane((_number(params.get("nx", "0")), _number(params.get("ny", "1"))),
                             _number(params.get("c", "0")))
        if name == "cone":
            _take(params, {"opening", "bisector", "ax", "ay", "complement"}, name)
            if "opening" not in params:
                raise ShapeParseError("cone 需要 opening 参数")
            return Cone2D(_number(params["opening"]), _number(params.get("bisector", "0")),
                          (_number(params.get("ax", "0")), _number(params.get("ay", "0"))),
                          params.get("complement", "0") not in ("0", "false", "no"))
        if name == "crosscone":
            _take(params, set(), name)
            return CrossCone()
        if name == "crosscone+sq":
            _take(params, {"l"}, name)
            return CrossConePlusSquare(_number(params.get("l", "0.0625")))
        if name == "ball":
            _take(params, {"r", "cx", "cy", "dim"}, name)
            if "r" not in params:
                raise ShapeParseError("ball 需要 r 参数")
            dim = int(params.get("dim", "2"))
            center = (_number(params.get("cx", "0")),) if dim == 1 else (
                _number(params.get("cx", "0")), _number(params.get("cy", "0")))
            return Ball(_number(params["r"]), center)
        if name == "rects":
            boxes = []
            for key in sorted(params, key=lambda k: int(k[1:]) if k[1:].isdigit() else -1):
                if not re.fullmatch(r"b\d+", key):
                    raise ShapeParseError(f"rects 参数必须是 b<i>: {key}")
                values = [_number(v) for v in params[key].split("/")]
                if len(values) not in (2, 4):
                    raise ShapeParseError(f"盒子需要 2 或 4 个坐标: {params[key]}")
                half = len(values) // 2
                lo, hi = tuple(values[:half]), tuple(values[half:])
                if any(a >= b for a, b in zip(lo, hi)):
                    raise ShapeParseError(f"盒子下角必须小于上角: {params[key]}")
                boxes.append((lo, hi))
            return RectUnion(tuple(boxes))
        if name == "osccone":
            _take(params, {"small", "big", "r0", "ratio", "bisector"}, name)
            return OscillatingCone(_number(params.get("small", "pi/6")),
                                   _number(params.get("big", "11*pi/6")),
                                   _number(params.get("r0", "1")),
                                   _number(params.get("ratio", "4")),
                                   _number(params.get("bisector", "0")))
    except (TypeError, ValueError) as e:
        if isinstance(e, ShapeParseError):
            raise
        raise ShapeParseError(f"形状参数无效: {text!r} ({e})")
    raise ShapeParseError(f"未知形状: {name!r}")
