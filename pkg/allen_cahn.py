# allen_cahn.py
"""
分数阶 Allen-Cahn 能量 𝒢 / 𝒢_ε 及其极小化

离散形式（单元常值场 u，外部迹 ±1）：
  kinetic   = ½ Σ_{窗口无序对} w(a,b)(u(a)−u(b))²
            + ½ Σ_a [F_in(a)(u(a)−t_in)² + F_out(a)(u(a)−t_out)²]
  potential = hⁿ Σ_a W(u(a))，W(t) = (1−t²)²/4
F_in / F_out 为与外部 E″ / O″ 的相互作用（含解析尾部）。
二值场 u = χ_E − χ_{Eᶜ} 的 kinetic 等于 2·Per_s(E,U)。
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal
from skimage import measure

from config import Config
from errors import BadRadii, BadWindow, CenterBelowTheta, EpsOutOfRange, NoProgress
from kernel import InteractionTable, build_table, check_s, kahan_sum
from perimeter import default_rt, exterior_fields
from reporting import SweepReport
from shapes import GridSet, HalfPlane, ShapeSpec, Window, rasterize, surface_measure

BRANCH_PLAIN = "plain"
BRANCH_SUB = "s<1/2"
BRANCH_CRITICAL = "s=1/2"
BRANCH_SUPER = "s>1/2"


def double_well(t):
    t = np.asarray(t, dtype=float)
    return 0.25 * (1.0 - t * t) ** 2


def double_well_prime(t):
    """W′(t) = −t(1−t²)"""
    t = np.asarray(t, dtype=float)
    return -t * (1.0 - t * t)


@dataclass(frozen=True, eq=False)
class PhaseField:
    """窗口内的 u ∈ [−1,1]；窗口外取 trace[0]（在 E 内）或 trace[1]（在 E 外）"""
    window: Window
    values: np.ndarray
    exterior: ShapeSpec
    trace: Tuple[float, float] = (1.0, -1.0)
    domain: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.clip(np.asarray(self.values, dtype=float), -1.0, 1.0)
        if values.shape != self.window.shape:
            raise BadWindow(f"场的形状 {values.shape} 与窗口 {self.window.shape} 不一致")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_shape(cls, spec: ShapeSpec, window: Window) -> "PhaseField":
        """u = χ_E − χ_{Eᶜ}"""
        mask = rasterize(spec, window).mask
        return cls(window, np.where(mask, 1.0, -1.0), spec)

    @classmethod
    def constant(cls, window: Window, value: float, exterior: ShapeSpec,
                 trace: Tuple[float, float] = (1.0, -1.0)) -> "PhaseField":
        return cls(window, np.full(window.shape, float(value)), exterior, trace)

    def with_values(self, values: np.ndarray) -> "PhaseField":
        return PhaseField(self.window, values, self.exterior, self.trace)

    def exterior_value(self, points: np.ndarray) -> np.ndarray:
        inside = self.exterior.contains(points)
        return np.where(inside, self.trace[0], self.trace[1])

    def sample(self, points: np.ndarray) -> np.ndarray:
        """窗口内取最近单元的值，窗口外取外部迹"""
        idx, inside = self.window.nearest_index(points)
        result = self.exterior_value(points).astype(float)
        if inside.any():
            result[inside] = self.values[tuple(i[inside] for i in idx)]
        return result


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    total: float
    branch: str
    eps: Optional[float]
    kinetic_scale: float = 1.0
    potential_scale: float = 1.0


def branch_scales(s: float, eps: Optional[float]) -> Tuple[float, float, str]:
    """(kinetic 系数, potential 系数, 分支)"""
    if eps is None:
        return 1.0, 1.0, BRANCH_PLAIN
    if not (0.0 < eps < 1.0):
        raise EpsOutOfRange(f"ε 必须在 (0,1) 内: {eps}")
    if abs(s - 0.5) <= 1e-12:
        log_inv = math.log(1.0 / eps)
        return log_inv, log_inv / eps, BRANCH_CRITICAL
    if s < 0.5:
        return 1.0, eps ** (-2.0 * s), BRANCH_SUB
    return eps ** (2.0 * s - 1.0), 1.0 / eps, BRANCH_SUPER


class EnergyModel:
    """
    固定 (window, exterior, trace, s, R_t) 时的能量与梯度

    L(u)(a) = Σ_b w(a,b)(u(a)−u(b)) 用 FFT 卷积计算，kinetic 的成对部分为 ½⟨u, L(u)⟩。
    """

    def __init__(self, template: PhaseField, s: float, rt: Optional[float] = None,
                 table: Optional[InteractionTable] = None):
        check_s(s, 1.0)
        self.window = template.window
        self.exterior = template.exterior
        self.trace = tuple(float(t) for t in template.trace)
        self.s = s
        if table is None:
            table = build_table(self.window, s, rt if rt is not None else default_rt(self.window))
        self.table = table
        grid = GridSet(self.window, np.zeros(self.window.shape, dtype=bool), self.exterior)
        fields = exterior_fields(grid, table)
        self.field_in = fields.field_in
        self.field_out = fields.field_out
        self._stencil = table.stencil()
        self._row_sums = self._correlate(np.ones(self.window.shape))

    def _correlate(self, values: np.ndarray) -> np.ndarray:
        # 模板关于原点对称，卷积与相关相同
        return signal.fftconvolve(values, self._stencil, mode="same")

    def pair_operator(self, values: np.ndarray) -> np.ndarray:
        return values * self._row_sums - self._correlate(values)

    def kinetic(self, values: np.ndarray) -> float:
        t_in, t_out = self.trace
        pairs = 0.5 * values * self.pair_operator(values)
        ext = 0.5 * (self.field_in * (values - t_in) ** 2 + self.field_out * (values - t_out) ** 2)
        return kahan_sum(np.sort((pairs + ext).ravel()))

    def kinetic_gradient(self, values: np.ndarray) -> np.ndarray:
        t_in, t_out = self.trace
        return (self.pair_operator(values) + self.field_in * (values - t_in)
                + self.field_out * (values - t_out))

    def potential(self, values: np.ndarray) -> float:
        return self.window.cell_volume * kahan_sum(np.sort(double_well(values).ravel()))

    def breakdown(self, values: np.ndarray, eps: Optional[float] = None) -> EnergyBreakdown:
        k_scale, p_scale, branch = branch_scales(self.s, eps)
        kinetic = self.kinetic(values)
        potential = self.potential(values)
        total = k_scale * kinetic + p_scale * potential
        return EnergyBreakdown(kinetic, potential, total, branch, eps, k_scale, p_scale)

    def gradient(self, values: np.ndarray, eps: Optional[float] = None) -> np.ndarray:
        """∂𝒢_ε/∂u(a)"""
        k_scale, p_scale, _ = branch_scales(self.s, eps)
        return (k_scale * self.kinetic_gradient(values)
                + p_scale * self.window.cell_volume * double_well_prime(values))


def energy_G(u: PhaseField, s: float, rt: Optional[float] = None,
             table: Optional[InteractionTable] = None) -> EnergyBreakdown:
    return EnergyModel(u, s, rt, table).breakdown(u.values)


def energy_G_eps(u: PhaseField, s: float, eps: float, rt: Optional[float] = None,
                 table: Optional[InteractionTable] = None) -> EnergyBreakdown:
    branch_scales(s, eps)
    return EnergyModel(u, s, rt, table).breakdown(u.values, eps)


def energy_gradient(u: PhaseField, s: float, eps: Optional[float] = None,
                    rt: Optional[float] = None, table: Optional[InteractionTable] = None) -> np.ndarray:
    return EnergyModel(u, s, rt, table).gradient(u.values, eps)


def rescale(u: PhaseField, eps: float) -> PhaseField:
    """u_ε(x) = u(x/ε)，外部形状随之缩放为 εE"""
    if not eps > 0.0:
        raise EpsOutOfRange(f"ε 必须为正: {eps}")
    points = u.window.centers() / eps
    values = u.sample(points)
    return PhaseField(u.window, values, u.exterior.scaled(eps), u.trace)


def frac_laplacian_residual(u: PhaseField, s: float, rt: Optional[float] = None,
                            table: Optional[InteractionTable] = None) -> np.ndarray:
    """
    每个单元：L(u) + 外部项，按 hⁿ 归一后减去 (u − u³)
    即 𝒢 的梯度除以 hⁿ，不带傅里叶归一化常数
    """
    model = EnergyModel(u, s, rt, table)
    values = u.values
    return model.kinetic_gradient(values) / u.window.cell_volume - (values - values ** 3)


@dataclass
class DescentResult:
    field: PhaseField
    energy: EnergyBreakdown
    history: List[float]
    iterations: int
    converged: bool
    eta: float
    critical_point: bool = True

    def to_record(self) -> dict:
        return {
            "total": self.energy.total,
            "kinetic": self.energy.kinetic,
            "potential": self.energy.potential,
            "branch": self.energy.branch,
            "eps": self.energy.eps,
            "iterations": self.iterations,
            "converged": self.converged,
            "critical_point": self.critical_point,
        }


def projected_gradient_norm(values: np.ndarray, direction: np.ndarray) -> float:
    """max |clamp(u − ∇) − u|：在 [−1,1] 约束下的驻点度量"""
    return float(np.max(np.abs(np.clip(values - direction, -1.0, 1.0) - values)))


def minimize_G(u0: PhaseField, s: float, eps: Optional[float] = None, rt: Optional[float] = None,
               max_iters: Optional[int] = None, tol: Optional[float] = None,
               eta0: Optional[float] = None, table: Optional[InteractionTable] = None,
               model: Optional[EnergyModel] = None, pg_tol: Optional[float] = None) -> DescentResult:
    """
    投影梯度下降：u ← clamp(u − η·∇𝒢_ε / hⁿ)
    能量上升时 η 减半（最多 DESCENT_BACKTRACKS 次），接受后 η 加倍但不超过初始步长 h^{2s}；
    单步下降量低于 tol·max(1,|𝒢|) 时停止。
    回溯用尽时，投影梯度小于 pg_tol 视为收敛，否则抛出 NoProgress。结果只是临界点。
    """
    model = model or EnergyModel(u0, s, rt, table)
    max_iters = max_iters or Config.DESCENT_MAX_ITERS
    tol = Config.DESCENT_TOL if tol is None else tol
    pg_tol = Config.DESCENT_PG_TOL if pg_tol is None else pg_tol
    h_n = u0.window.cell_volume
    eta_max = eta0 if eta0 is not None else u0.window.h ** (2.0 * s)
    eta = eta_max

    values = np.array(u0.values, dtype=float)
    energy = model.breakdown(values, eps).total
    history = [energy]
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        direction = model.gradient(values, eps) / h_n
        accepted = False
        for _ in range(Config.DESCENT_BACKTRACKS):
            trial = np.clip(values - eta * direction, -1.0, 1.0)
            trial_energy = model.breakdown(trial, eps).total
            if trial_energy <= energy + 1e-14 * max(1.0, abs(energy)):
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            stationarity = projected_gradient_norm(values, direction)
            if stationarity < pg_tol:
                converged = True
                break
            raise NoProgress(f"第 {iterations} 步回溯 {Config.DESCENT_BACKTRACKS} 次仍未下降 "
                             f"(η={eta:.3g}, 投影梯度={stationarity:.3g})")

        decrease = energy - trial_energy
        values, energy = trial, min(energy, trial_energy)
        history.append(energy)
        eta = min(2.0 * eta, eta_max)
        if decrease < tol * max(1.0, abs(energy)):
            converged = True
            break

    result_field = u0.with_values(values)
    if Config.DEBUG_MODE:
        print(f"[AllenCahn] s={s:g}, ε={eps}: {iterations} 步, 𝒢={energy:.8g}, converged={converged}")
    return DescentResult(result_field, model.breakdown(values, eps), history, iterations, converged, eta)


# 界面与密度估计

@dataclass
class DensityReport:
    center: Tuple[float, ...]
    thetas: Tuple[float, float]
    radii: List[float]
    measures: List[float]
    ratios: List[float]
    interface: List[np.ndarray] = field(default_factory=list)

    @property
    def min_ratio(self) -> float:
        return min(self.ratios) if self.ratios else math.nan

    def to_report(self) -> SweepReport:
        report = SweepReport(("R", "measure", "ratio"))
        for row in zip(self.radii, self.measures, self.ratios):
            report.add_row(*row)
        report.metadata.update({"center": list(self.center), "theta1": self.thetas[0],
                                "theta2": self.thetas[1], "density_floor": Config.DENSITY_FLOOR,
                                "min_ratio": self.min_ratio})
        return report


def zero_level_interface(u: PhaseField) -> List[np.ndarray]:
    """{u = 0} 的折线（物理坐标）；一维时为零点列表"""
    window = u.window
    values = u.values
    if window.n == 1:
        x = window.axis_centers()[0]
        points = []
        for k in range(values.size - 1):
            a, b = values[k], values[k + 1]
            if a == 0.0:
                points.append(x[k])
            elif a * b < 0.0:
                points.append(x[k] + (x[k + 1] - x[k]) * a / (a - b))
        if values[-1] == 0.0:
            points.append(x[-1])
        return [np.asarray(points, dtype=float).reshape(-1, 1)]
    lines = []
    for contour in measure.find_contours(values, 0.0):
        coords = np.empty_like(contour)
        for k in range(2):
            coords[:, k] = window.lower[k] + (contour[:, k] + 0.5) * window.h
        lines.append(coords)
    return lines


def interface_and_density(u: PhaseField, thetas: Tuple[float, float], radii: Sequence[float],
                          center: Optional[Sequence[float]] = None) -> DensityReport:
    theta1, theta2 = float(thetas[0]), float(thetas[1])
    for t in (theta1, theta2):
        if not -1.0 < t < 1.0:
            raise BadRadii(f"θ 必须在 (−1,1) 内: {t}")
    window = u.window
    c = np.zeros(window.n) if center is None else np.asarray(center, dtype=float)
    idx, inside = window.nearest_index(c)
    if not inside:
        raise BadRadii(f"中心 {tuple(c)} 不在窗口内")
    u_center = float(u.values[tuple(int(i) for i in idx)])
    if not u_center > theta1:
        raise CenterBelowTheta(f"u(中心)={u_center:.4g} 不大于 θ₁={theta1:g}")

    pts = window.centers() - c
    dist = np.sqrt(np.sum(pts * pts, axis=-1))
    above = u.values > theta2
    measures, ratios = [], []
    for radius in radii:
        if not 0.0 < radius <= window.half_width:
            raise BadRadii(f"R={radius} 必须在 (0, 窗口半宽 {window.half_width}] 内")
        count = int(np.count_nonzero(above & (dist < radius)))
        m = count * window.cell_volume
        measures.append(m)
        ratios.append(m / radius ** window.n)
    return DensityReport(tuple(c.tolist()), (theta1, theta2), list(map(float, radii)),
                         measures, ratios, zero_level_interface(u))


def interface_deviation(u: PhaseField, spec: ShapeSpec, margin: float = 0.0) -> float:
    """零水平集到半平面边界的最大距离，只统计离窗口边缘超过 margin 的点"""
    if not isinstance(spec, HalfPlane):
        return math.nan
    worst = 0.0
    for line in zero_level_interface(u):
        if line.size == 0:
            continue
        keep = np.ones(line.shape[0], dtype=bool)
        for k in range(u.window.n):
            keep &= (line[:, k] >= u.window.lower[k] + margin) & (line[:, k] <= u.window.upper[k] - margin)
        if keep.any():
            worst = max(worst, float(np.max(np.abs(spec.signed_distance(line[keep])))))
    return worst


GAMMA_COLUMNS = ("eps", "total", "kinetic", "potential", "deviation", "min_ratio", "iterations")


def gamma_sweep(exterior: ShapeSpec, window: Window, s: float, eps_list: Sequence[float],
                rt: Optional[float] = None, radii: Optional[Sequence[float]] = None,
                thetas: Tuple[float, float] = (-0.5, 0.5), max_iters: Optional[int] = None) -> SweepReport:
    """对每个 ε 从二值初值下降，记录界面偏差与密度比"""
    u0 = PhaseField.from_shape(exterior, window)
    model = EnergyModel(u0, s, rt)
    radii = list(radii) if radii is not None else [window.half_width * f for f in (0.25, 0.5, 1.0)]
    report = SweepReport(GAMMA_COLUMNS)
    converged_all = True
    for eps in eps_list:
        result = minimize_G(u0, s, eps, max_iters=max_iters, model=model)
        converged_all &= result.converged
        try:
            density = interface_and_density(result.field, thetas, radii)
            min_ratio = density.min_ratio
        except CenterBelowTheta:
            min_ratio = math.nan
        report.add_row(eps, result.energy.total, result.energy.kinetic, result.energy.potential,
                       interface_deviation(result.field, exterior, 2.0 * window.h), min_ratio,
                       result.iterations)
        if Config.DEBUG_MODE:
            print(f"[AllenCahn] ✅ ε={eps:g}: 𝒢_ε={result.energy.total:.6g}, 迭代 {result.iterations}")
    report.metadata.update({
        "s": s, "rt": model.table.rt, "h": window.h, "exterior": exterior.to_grammar(),
        "density_floor": Config.DENSITY_FLOOR, "converged": converged_all,
        "critical_points_only": True, "ball_measure_factor": surface_measure(window.n) / window.n,
    })
    return report
