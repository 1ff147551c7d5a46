# extension.py
"""
上半空间延拓

𝒫(x, t) = c_{n,s} · t^{2s} / (|x|² + t²)^{(n+2s)/2}，∫𝒫(x,t)dx = 1（对每个高度 t）
ũ(x, t) = ∫ 𝒫(x−y, t) u(y) dy，u = χ_E − χ_{Eᶜ}
ℰ(v) = ∫ t^{1−2s} |∇v|² dX
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, signal, special

from allen_cahn import EnergyModel, PhaseField
from config import Config
from errors import BadRadii, BadWindow, UnsupportedShape
from kernel import check_s, kahan_sum
from reporting import SweepReport
from shapes import HalfPlane, ShapeSpec, Window, surface_measure


@dataclass(frozen=True)
class ExtensionKernel:
    n: int
    s: float
    c: float              # 求积得到的归一化常数
    beta_constant: float  # 闭式 2Γ(n/2+s) / (ω Γ(n/2) Γ(s))

    @property
    def exponent(self) -> float:
        return 0.5 * (self.n + 2.0 * self.s)

    def value(self, radius, t):
        """𝒫 在 |x| = radius、高度 t 处的值"""
        r = np.asarray(radius, dtype=float)
        return self.c * t ** (2.0 * self.s) * (r * r + t * t) ** (-self.exponent)

    def mass_within(self, radius: float, t: float) -> float:
        """∫_{|x|<radius} 𝒫(x,t) dx，用正则化不完全 Beta 函数"""
        rho = radius / t
        z = rho * rho / (1.0 + rho * rho)
        return (self.c / self.beta_constant) * float(special.betainc(0.5 * self.n, self.s, z))

    def mass_outside(self, radius: float, t: float) -> float:
        rho = radius / t
        z = rho * rho / (1.0 + rho * rho)
        # 1 − I_z(a,b) = I_{1−z}(b,a)，远场时避免相消
        return (self.c / self.beta_constant) * float(special.betainc(self.s, 0.5 * self.n, 1.0 - z))


def _radial_tail(n: int, s: float, radius: float) -> float:
    """∫_R^∞ ω r^{n−1} (1+r²)^{−p} dr 的渐近展开（取到 r^{−4} 修正）"""
    p = 0.5 * (n + 2.0 * s)
    omega = surface_measure(n)
    lead = radius ** (-2.0 * s) / (2.0 * s)
    second = p * radius ** (-2.0 * s - 2.0) / (2.0 * s + 2.0)
    third = 0.5 * p * (p + 1.0) * radius ** (-2.0 * s - 4.0) / (2.0 * s + 4.0)
    return omega * (lead - second + third)


@lru_cache(maxsize=64)
def normalize_kernel(n: int, s: float) -> ExtensionKernel:
    check_s(s, 1.0)
    if n not in (1, 2):
        raise BadWindow(f"只支持 n ∈ {{1,2}}: {n}")
    p = 0.5 * (n + 2.0 * s)
    omega = surface_measure(n)
    cutoff = Config.EXTENSION_QUAD_RADIUS
    near, _ = integrate.quad(lambda r: omega * r ** (n - 1) * (1.0 + r * r) ** (-p), 0.0, cutoff,
                             points=[1.0, 8.0], limit=400, epsabs=1e-14, epsrel=1e-13)
    c = 1.0 / (near + _radial_tail(n, s, cutoff))
    beta = 2.0 * math.exp(special.gammaln(0.5 * n + s) - special.gammaln(0.5 * n) - special.gammaln(s)) / omega
    if abs(c / beta - 1.0) > 1e-6:
        print(f"[Extension] ⚠️ 求积常数 {c:.10g} 与闭式 {beta:.10g} 相差 {abs(c / beta - 1.0):.2e}")
    if Config.DEBUG_MODE:
        print(f"[Extension] c_{{{n},{s:g}}} = {c:.12g}（闭式 {beta:.12g}）")
    return ExtensionKernel(n, s, c, beta)


def vertical_levels(h: float, height: float, ratio: Optional[float] = None) -> np.ndarray:
    """从 h/2 开始按比例几何增长，最后一层恰为 height"""
    ratio = ratio or Config.EXTENSION_LEVEL_RATIO
    if not height > 0.5 * h:
        raise BadRadii(f"高度 {height} 必须大于 h/2={0.5 * h}")
    if not ratio > 1.0:
        raise BadRadii(f"层间比例必须大于 1: {ratio}")
    levels = [0.5 * h]
    while levels[-1] * ratio < height:
        levels.append(levels[-1] * ratio)
    if height - levels[-1] < 0.25 * (levels[-1] - (levels[-2] if len(levels) > 1 else 0.0)):
        levels[-1] = height
    else:
        levels.append(height)
    return np.asarray(levels, dtype=float)


@dataclass(frozen=True, eq=False)
class HalfSpaceField:
    """Ω = window × (0, H]，values 形状 (层数, *window.shape)"""
    window: Window
    levels: np.ndarray
    values: np.ndarray
    s: float
    trace: Optional[ShapeSpec] = None

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size < 2 or np.any(np.diff(levels) <= 0.0):
            raise BadRadii("高度层必须严格递增且至少两层")
        if levels[0] < 0.5 * self.window.h * (1.0 - 1e-12):
            raise BadRadii(f"最低层 {levels[0]} 小于 h/2")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (levels.size,) + self.window.shape:
            raise BadWindow(f"场的形状 {values.shape} 与网格不一致")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "HalfSpaceField":
        return HalfSpaceField(self.window, self.levels, values, self.s, self.trace)

    def node_radius(self, center: Optional[Sequence[float]] = None) -> np.ndarray:
        """每个节点 (x, t) 到 (center, 0) 的距离，形状同 values"""
        pts = self.window.centers()
        if center is not None:
            pts = pts - np.asarray(center, dtype=float)
        r2 = np.sum(pts * pts, axis=-1)
        t = self.levels.reshape((-1,) + (1,) * self.window.n)
        return np.sqrt(r2[np.newaxis] + t * t)


@dataclass(frozen=True, eq=False)
class _LevelStencil:
    q: int
    delta: float
    half: int
    radius: float
    weights: np.ndarray


def _level_stencil(kernel: ExtensionKernel, h: float, t: float) -> _LevelStencil:
    """
    细网格步长 δ = h/q ≤ t/2，q 取偶数；节点相对目标点的位移为 (e+½)δ，
    所以细网格节点永远不落在单元中心所在的格线上
    """
    q = 2 * max(1, int(math.ceil(h / t - 1e-12)))
    delta = h / q
    half = min(int(math.ceil(Config.EXTENSION_CUTOFF_FACTOR * t / delta)), Config.EXTENSION_STENCIL_CAP)
    radius = half * delta
    disp = (np.arange(-half, half) + 0.5) * delta
    grids = np.meshgrid(*([disp] * kernel.n), indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    weights = np.where(r <= radius, kernel.value(r, t), 0.0) * delta ** kernel.n
    return _LevelStencil(q, delta, half, radius, weights)


def _combine(near_sum: np.ndarray, stencil: _LevelStencil, kernel: ExtensionKernel, t: float,
             occupancy: float) -> np.ndarray:
    """近场按离散质量归一，截断半径外用解析质量 × (2·占有率 − 1)"""
    tail = kernel.mass_outside(stencil.radius, t)
    inside = kernel.mass_within(stencil.radius, t)
    mass = kahan_sum(np.sort(stencil.weights.ravel()))
    return near_sum * (inside / mass) + tail * (2.0 * occupancy - 1.0)


def _trace_values(trace: ShapeSpec, points: np.ndarray) -> np.ndarray:
    return np.where(trace.contains(points), 1.0, -1.0)


def extend(trace: ShapeSpec, kernel: ExtensionKernel, window: Window,
           levels: np.ndarray) -> HalfSpaceField:
    """每层一次 FFT 相关：细网格上的 ±1 迹与截断核，再按 q 抽样回窗口单元"""
    if trace.dimension != window.n or kernel.n != window.n:
        raise BadWindow(f"迹、核与窗口的维数不一致: {trace.dimension}, {kernel.n}, {window.n}")
    levels = np.asarray(levels, dtype=float)
    slabs = []
    axes = window.axis_centers()
    for t in levels:
        st = _level_stencil(kernel, window.h, float(t))
        fine_axes = [a[0] + (np.arange((m - 1) * st.q + 2 * st.half) - st.half + 0.5) * st.delta
                     for a, m in zip(axes, window.shape)]
        nodes = np.stack(np.meshgrid(*fine_axes, indexing="ij"), axis=-1)
        fine = _trace_values(trace, nodes)
        near = signal.correlate(fine, st.weights, mode="valid", method="fft")
        near = near[tuple(slice(None, None, st.q) for _ in range(window.n))]
        occ = trace.tail_occupancy(st.radius, kernel.s)
        slabs.append(np.clip(_combine(near, st, kernel, float(t), occ), -1.0, 1.0))
    if Config.DEBUG_MODE:
        print(f"[Extension] {len(levels)} 层, 窗口 {window.shape}")
    return HalfSpaceField(window, levels, np.stack(slabs), kernel.s, trace)


def extend_at(trace: ShapeSpec, kernel: ExtensionKernel, points: np.ndarray, t: float,
              h: float) -> np.ndarray:
    """任意点处的 ũ(x, t)，细网格以每个点为中心"""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    st = _level_stencil(kernel, h, t)
    disp = (np.arange(-st.half, st.half) + 0.5) * st.delta
    offsets = np.stack(np.meshgrid(*([disp] * kernel.n), indexing="ij"), axis=-1)
    occ = trace.tail_occupancy(st.radius, kernel.s)
    out = np.empty(pts.shape[0])
    for k, x in enumerate(pts):
        fine = _trace_values(trace, x + offsets)
        near = kahan_sum(np.sort((st.weights * fine).ravel()))
        out[k] = _combine(np.asarray(near), st, kernel, t, occ)
    return np.clip(out, -1.0, 1.0)


# 加权能量

def cell_energies(v: HalfSpaceField, s: Optional[float] = None) -> np.ndarray:
    """
    每个单元 [t_k, t_{k+1}] × [x_i, x_i + h]ⁿ 的能量：
    中高度权重 × (竖直差分² + 上下两层水平前向差分²的平均) × hⁿ·Δt
    """
    s = v.s if s is None else s
    h = v.window.h
    n = v.window.n
    vals = v.values
    t = v.levels
    dt = np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    shape_b = (-1,) + (1,) * n

    core = (slice(None),) + (slice(0, -1),) * n
    vertical = ((vals[1:] - vals[:-1])[core] / dt.reshape(shape_b)) ** 2

    horizontal = np.zeros_like(vertical)
    for axis in range(n):
        diff = np.diff(vals, axis=axis + 1) / h
        keep = (slice(None),) + tuple(slice(None) if k == axis else slice(0, -1) for k in range(n))
        g2 = diff[keep] ** 2
        horizontal += 0.5 * (g2[:-1] + g2[1:])

    weight = (mid ** (1.0 - 2.0 * s)).reshape(shape_b)
    return weight * (vertical + horizontal) * (h ** n) * dt.reshape(shape_b)


def cell_base_radius(v: HalfSpaceField, center: Optional[Sequence[float]] = None) -> np.ndarray:
    core = (slice(0, -1),) + (slice(0, -1),) * v.window.n
    return v.node_radius(center)[core]


def box_region(v: HalfSpaceField, lower: Sequence[float], upper: Sequence[float],
               t_max: Optional[float] = None) -> np.ndarray:
    """单元基点 x ∈ [lower, upper)、t < t_max 的单元"""
    centers = v.window.centers()[(slice(0, -1),) * v.window.n]
    inside = np.ones(centers.shape[:-1], dtype=bool)
    for k in range(v.window.n):
        inside &= (centers[..., k] >= lower[k]) & (centers[..., k] < upper[k])
    t_max = math.inf if t_max is None else t_max
    low = v.levels[:-1] < t_max
    return low.reshape((-1,) + (1,) * v.window.n) & inside[np.newaxis]


def weighted_energy(v: HalfSpaceField, s: Optional[float] = None,
                    region: Optional[np.ndarray] = None) -> float:
    energies = cell_energies(v, s)
    if region is not None:
        energies = energies[np.asarray(region, dtype=bool)]
    return kahan_sum(np.sort(energies.ravel()))


# min / max 恒等式

@dataclass(frozen=True)
class MinMaxCheck:
    energy_min_max: float   # E(min) + E(max)
    energy_u_v: float       # E(u) + E(v)
    slack: float


def minmax_identity_check(u: np.ndarray, v: np.ndarray,
                          energy: Callable[[np.ndarray], float]) -> MinMaxCheck:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise BadWindow(f"两个场的形状不一致: {u.shape} vs {v.shape}")
    lhs = energy(np.minimum(u, v)) + energy(np.maximum(u, v))
    rhs = energy(u) + energy(v)
    return MinMaxCheck(lhs, rhs, rhs - lhs)


def gagliardo_energy(window: Window, exterior: ShapeSpec, s: float,
                     rt: Optional[float] = None) -> Callable[[np.ndarray], float]:
    """窗口场的 Gagliardo 型能量（含外部迹 ±1）"""
    model = EnergyModel(PhaseField.constant(window, 0.0, exterior), s, rt)
    return model.kinetic


def weighted_energy_functional(template: HalfSpaceField, s: Optional[float] = None,
                               region: Optional[np.ndarray] = None) -> Callable[[np.ndarray], float]:
    return lambda values: weighted_energy(template.with_values(values), s, region)


# 半平面闭式解

def halfplane_extension(points: np.ndarray, t, s: float,
                        trace: Optional[HalfPlane] = None) -> np.ndarray:
    """
    半平面迹的精确延拓：ũ(x, t) = 2·F_ν(−d(x)·√ν / t) − 1，ν = 2s
    F_ν 为 Student-t 分布函数，d 为到边界的有符号距离（集合内部为负）
    """
    check_s(s)
    trace = HalfPlane() if trace is None else trace
    nu = 2.0 * s
    d = trace.signed_distance(np.asarray(points, dtype=float))
    return 2.0 * special.stdtr(nu, -d * math.sqrt(nu) / np.asarray(t, dtype=float)) - 1.0


def halfplane_field(trace: HalfPlane, s: float, window: Window, levels: np.ndarray,
                    displacement: Optional[np.ndarray] = None) -> HalfSpaceField:
    """在全部节点上取闭式解；displacement 形状 (层数, *window.shape, n)，取值点为 X − displacement"""
    if trace.dimension != window.n:
        raise BadWindow(f"迹与窗口的维数不一致: {trace.dimension}, {window.n}")
    levels = np.asarray(levels, dtype=float)
    pts = np.broadcast_to(window.centers(), (levels.size,) + window.shape + (window.n,))
    if displacement is not None:
        pts = pts - displacement
    t = levels.reshape((-1,) + (1,) * window.n)
    return HalfSpaceField(window, levels, halfplane_extension(pts, t, s, trace), s, trace)


# 平移竞争者

GAP_COLUMNS = ("R", "energy_u", "energy_plus", "energy_minus", "gap",
               "second_difference", "scaled_second_difference")


def cutoff_profile(r: np.ndarray, radius: float) -> np.ndarray:
    """φ：[0, R/2] 上为 1，[R/2, R] 上线性降到 0"""
    return np.clip((radius - np.asarray(r, dtype=float)) / (0.5 * radius), 0.0, 1.0)


def translate_competitor(u: HalfSpaceField, radius: float, shift: float,
                         direction: Optional[Sequence[float]] = None) -> HalfSpaceField:
    """
    u^±(Y) = ũ(Y ∓ δ·φ(|Y|/R)·e)：B_{R/2} 内为平移 δe 后的半平面延拓，B_R 外与 u 相同
    迹仍取 ±1，界面只在 B_R 内移动
    """
    if not isinstance(u.trace, HalfPlane):
        raise UnsupportedShape("平移竞争者只对半平面迹有闭式解")
    e = np.asarray(u.trace.normal if direction is None else direction, dtype=float)
    e = e / np.linalg.norm(e)
    phi = cutoff_profile(u.node_radius(), radius)
    displacement = (shift * phi)[..., np.newaxis] * e
    return halfplane_field(u.trace, u.s, u.window, u.levels, displacement)


def translate_competitor_gap(s: float, radii: Sequence[float] = (8.0, 16.0, 32.0), h: float = 1.0,
                             n: int = 2, shift: Optional[float] = None) -> SweepReport:
    """
    半平面延拓 u 与竞争者 u^± 在 B_R 上的能量：
    gap = ℰ(u⁺) − ℰ(u)，second_difference = ℰ(u⁺) + ℰ(u⁻) − 2ℰ(u)，
    并拟合 second_difference ≈ C·R^{−2s}
    """
    check_s(s)
    shift = h if shift is None else shift
    normal = (1.0,) if n == 1 else (0.0, 1.0)
    trace = HalfPlane(normal, 0.0)
    report = SweepReport(GAP_COLUMNS)
    for radius in radii:
        window = Window.square(radius + 2.0 * h, h, n)
        levels = vertical_levels(h, radius)
        u = halfplane_field(trace, s, window, levels)
        region = cell_base_radius(u) < radius
        e_u = weighted_energy(u, s, region)
        e_plus = weighted_energy(translate_competitor(u, radius, shift), s, region)
        e_minus = weighted_energy(translate_competitor(u, radius, -shift), s, region)
        second = e_plus + e_minus - 2.0 * e_u
        report.add_row(radius, e_u, e_plus, e_minus, e_plus - e_u, second,
                       second * radius ** (2.0 * s))
        if Config.DEBUG_MODE:
            print(f"[Extension] ✅ R={radius:g}: ℰ(u)={e_u:.6g}, 二阶差分={second:.4g}")

    scaled = np.abs(report.column("scaled_second_difference"))
    second = np.abs(report.column("second_difference"))
    exponent = math.nan
    if len(report) >= 2 and np.all(second > 0.0):
        exponent = float(np.polyfit(np.log(report.column("R")), np.log(second), 1)[0])
    report.metadata.update({
        "s": s, "n": n, "h": h, "shift": shift,
        "fitted_C": float(np.median(scaled)),
        "C_spread": float(scaled.max() / scaled.min()) if scaled.min() > 0.0 else math.inf,
        "fitted_exponent": exponent,
        "expected_exponent": -2.0 * s,
    })
    return report
