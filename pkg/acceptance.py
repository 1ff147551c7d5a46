# acceptance.py
"""
验收准则 A1–A16
每条准则是一个返回 (passed, value, threshold, detail) 的函数；repro_all 依次运行并汇总
非阻塞的软指标只报告，不影响 PASS/FAIL
"""

import dataclasses
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from config import Config

SUMMARY_SCHEMA_VERSION = 1


@dataclass
class Outcome:
    passed: bool
    value: float
    threshold: float
    detail: Dict[str, Any] = dataclasses.field(default_factory=dict)


@dataclass(frozen=True)
class Criterion:
    id: str
    title: str
    check: Callable[[], Outcome]


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b))


# A1–A4：锥与半平面

def check_cone_flip() -> Outcome:
    from kernel import build_table
    from perimeter import frac_perimeter
    from shapes import CrossCone, CrossConePlusSquare, Window, rasterize

    h = 1.0 / 16
    window = Window.square(1.0, h)
    diffs = {}
    for s in (0.1, 0.25, 0.4):
        table = build_table(window, s, 1.0)
        k = frac_perimeter(rasterize(CrossCone(), window), s, table=table).total
        kp = frac_perimeter(rasterize(CrossConePlusSquare(h), window), s, table=table).total
        diffs[s] = _rel(k, kp)
    worst = max(diffs.values())
    return Outcome(worst <= 1e-10, worst, 1e-10, {"rel_diff": diffs})


def check_el_dichotomy() -> Outcome:
    from euler_lagrange import el_integral
    from shapes import CrossCone, CrossConePlusSquare

    k = el_integral(CrossCone(), (0.0, 0.0), 0.25)
    coarse = el_integral(CrossConePlusSquare(0.1), (0.0, 0.0), 0.25, estimate_error=False)
    fine = el_integral(CrossConePlusSquare(0.1), (0.0, 0.0), 0.25, rho0=0.5 * coarse.rho0,
                       radii_per_decade=2 * Config.EL_RADII_PER_DECADE, angles=2 * Config.EL_ANGLES,
                       estimate_error=False)
    passed = abs(k.value) <= 1e-10 and coarse.value > 0.0 and fine.value > 0.0
    return Outcome(passed, abs(k.value), 1e-10,
                   {"el_K": k.value, "el_K_prime_coarse": coarse.value, "el_K_prime_fine": fine.value})


def check_halfplane_minimal() -> Outcome:
    from mincut import build_problem, minimize_exact
    from shapes import HalfPlane, Window, rasterize

    window = Window.square(1.0, 1.0 / 16)
    expected = rasterize(HalfPlane(), window).mask
    worst, exact = 0.0, True
    for s in (0.1, 0.25, 0.4):
        result = minimize_exact(build_problem(HalfPlane(), window, s))
        exact &= bool(np.array_equal(result.mask, expected))
        worst = max(worst, abs(result.objective - result.certificate) / max(1.0, abs(result.certificate)))
    return Outcome(exact and worst <= 1e-9, worst, 1e-9,
                   {"argmin_is_halfplane": exact, "window": [list(window.lower), list(window.upper)]})


def check_cone_not_minimal() -> Outcome:
    from mincut import build_problem, minimize_exact
    from shapes import CrossCone, Window, rasterize

    window = Window.square(1.0, 1.0 / 16)
    problem = build_problem(CrossCone(), window, 0.25)
    cone = rasterize(CrossCone(), window).mask
    result = minimize_exact(problem)
    margin = problem.objective(cone) - result.objective
    bound = problem.truncation_bound(cone, result.mask)
    differs = not np.array_equal(result.mask, cone)
    return Outcome(differs and margin > bound, margin, bound,
                   {"changed_cells": int(np.count_nonzero(result.mask != cone))})


# A5–A8：s 极限

def check_s_to_zero_ball() -> Outcome:
    from perimeter import scaled_limits
    from shapes import Ball, Window

    report = scaled_limits(Ball(0.5), Window.square(1.0, 1.0 / 16), (0.05, 0.02, 0.01), "to_zero", r=1.0)
    target = math.pi ** 2 / 2.0
    limit = report.metadata["extrapolated_limit"]
    rel = abs(limit - target) / target
    return Outcome(rel <= 0.05, rel, 0.05, {"limit": limit, "target": target})


def check_s_to_zero_quadrant() -> Outcome:
    from perimeter import scaled_limits
    from shapes import Cone2D, Window

    report = scaled_limits(Cone2D(math.pi / 2, math.pi / 4), Window.square(1.0, 1.0 / 16),
                           (0.05, 0.02, 0.01), "to_zero", r=1.0)
    rel = report.metadata["extrapolated_rel_err"]
    return Outcome(rel <= 0.10, rel, 0.10, {"limit": report.metadata["extrapolated_limit"],
                                           "target": report.metadata["target"]})


def check_s_to_half() -> Outcome:
    from perimeter import scaled_limits
    from shapes import CrossCone, HalfPlane, Window, surface_measure

    window = Window.square(1.0, 1.0 / 32)
    s_list = (0.40, 0.44, 0.47, 0.49)
    hp = scaled_limits(HalfPlane(), window, s_list, "to_half", r=1.0).metadata["extrapolated_limit"]
    cone = scaled_limits(CrossCone(), window, s_list, "to_half", r=1.0).metadata["extrapolated_limit"]
    ratio = cone / hp
    rel = abs(ratio - 2.0) / 2.0
    soft_target = surface_measure(2) * 2.0
    return Outcome(rel <= 0.05, rel, 0.05, {
        "ratio": ratio, "halfplane_limit": hp, "cone_limit": cone,
        "soft_absolute_rel_err": abs(hp - soft_target) / soft_target, "soft_threshold": 0.10,
    })


def check_oscillation() -> Outcome:
    from perimeter import scaled_limits
    from shapes import OscillatingCone, Window

    report = scaled_limits(OscillatingCone(), Window.square(1.0, 1.0 / 16),
                           (0.2, 0.1, 0.05, 0.025, 0.0125), "to_zero", r=1.0)
    scaled = report.column("scaled")
    ratio = float(scaled.max() / scaled.min())
    return Outcome(ratio >= 1.2, ratio, 1.2, {"scaled": scaled.tolist()})


# A9：穷举比对

def check_brute_oracle() -> Outcome:
    from mincut import build_problem, flip_descent, minimize_brute, minimize_exact
    from shapes import HalfPlane, Window

    window = Window.square(0.5, 0.25)
    base = build_problem(HalfPlane(), window, 0.25, rt=1.0)
    scale = float(np.mean(base.cost_in + base.cost_out))
    worst, beaten = 0.0, 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        problem = dataclasses.replace(base, cost_in=scale * rng.random(window.shape),
                                      cost_out=scale * rng.random(window.shape))
        exact = minimize_exact(problem)
        brute = minimize_brute(problem)
        flip = flip_descent(problem, seed=seed)
        worst = max(worst, abs(exact.objective - brute.objective) / max(1.0, abs(brute.objective)))
        beaten += flip.objective < exact.objective - 1e-12 * max(1.0, abs(exact.objective))
    return Outcome(worst <= 1e-12 and beaten == 0, worst, 1e-12, {"flip_beats_exact": beaten})


# A10–A13：Allen–Cahn

def check_branches() -> Outcome:
    from allen_cahn import branch_scales

    cases = (((0.25, 0.1), (1.0, 10 ** 0.5)),
             ((0.5, math.exp(-1.0)), (1.0, math.e)),
             ((0.75, 0.1), (10 ** -0.5, 10.0)))
    worst = 0.0
    for (s, eps), expected in cases:
        k, p, _ = branch_scales(s, eps)
        worst = max(worst, _rel(k, expected[0]), _rel(p, expected[1]))
    return Outcome(worst <= 1e-12, worst, 1e-12)


def check_gradient() -> Outcome:
    from allen_cahn import EnergyModel, PhaseField
    from shapes import HalfPlane, Window

    window = Window.square(0.5, 1.0 / 16)
    rng = np.random.default_rng(3)
    u = PhaseField(window, rng.uniform(-0.9, 0.9, window.shape), HalfPlane((0.3, 1.0), 0.1))
    worst = 0.0
    for s, eps in ((0.3, 0.1), (0.75, 0.1)):
        model = EnergyModel(u, s, rt=1.0)
        grad = model.gradient(u.values, eps)
        delta = 1e-5
        for k in rng.choice(window.cell_count, size=100, replace=False):
            cell = np.unravel_index(k, window.shape)
            plus = np.array(u.values)
            minus = np.array(u.values)
            plus[cell] += delta
            minus[cell] -= delta
            fd = (model.breakdown(plus, eps).total - model.breakdown(minus, eps).total) / (2 * delta)
            worst = max(worst, abs(fd - grad[cell]) / max(abs(grad[cell]), 1e-7))
    return Outcome(worst <= 1e-5, worst, 1e-5)


GAMMA_EPS = (0.2, 0.1, 0.05)
GAMMA_H = 1.0 / 32
# E = {y > −1/4}：原点在 E 内 8h 处，半径 1/2 的球恰好内切于窗口
GAMMA_OFFSET = 0.25
DENSITY_THETAS = (0.1, 0.0)
DENSITY_RADII = (0.25, 0.5)


@lru_cache(maxsize=1)
def _gamma_runs() -> Tuple[Dict[str, Any], ...]:
    """A12 与 A13 共用的下降结果；密度取 {u>0}，中心为原点且要求 u(0) > 0.1"""
    from allen_cahn import EnergyModel, PhaseField, interface_and_density, interface_deviation, minimize_G
    from errors import CenterBelowTheta
    from shapes import HalfPlane, Window

    window = Window.square(0.5, GAMMA_H)
    spec = HalfPlane((0.0, -1.0), GAMMA_OFFSET)
    u0 = PhaseField.from_shape(spec, window)
    runs = []
    for s in (0.3, 0.75):
        model = EnergyModel(u0, s)
        for eps in GAMMA_EPS:
            result = minimize_G(u0, s, eps, model=model)
            history = np.asarray(result.history)
            monotone = bool(np.all(np.diff(history) <= 1e-14 * np.maximum(1.0, np.abs(history[:-1]))))
            try:
                min_ratio = interface_and_density(result.field, DENSITY_THETAS, DENSITY_RADII).min_ratio
            except CenterBelowTheta:
                min_ratio = 0.0
            runs.append({
                "s": s, "eps": eps, "monotone": monotone,
                "deviation": interface_deviation(result.field, spec, 2.0 * window.h),
                "min_ratio": min_ratio, "converged": result.converged,
            })
    return tuple(runs)


def check_gamma_interface() -> Outcome:
    runs = _gamma_runs()
    final = [r for r in runs if r["eps"] == GAMMA_EPS[-1]]
    worst = max(r["deviation"] for r in final)
    monotone = all(r["monotone"] for r in runs)
    return Outcome(monotone and worst <= 2.0 * GAMMA_H, worst, 2.0 * GAMMA_H,
                   {"runs": list(runs), "monotone": monotone})


def check_density_floor() -> Outcome:
    worst = min(r["min_ratio"] for r in _gamma_runs())
    return Outcome(worst >= Config.DENSITY_FLOOR, worst, Config.DENSITY_FLOOR, {
        "center": [0.0, 0.0], "level": DENSITY_THETAS[1], "center_floor": DENSITY_THETAS[0],
        "radii": list(DENSITY_RADII), "exterior_offset": GAMMA_OFFSET,
    })


# A14–A16：延拓

def check_extension_kernel() -> Outcome:
    from extension import normalize_kernel
    from shapes import surface_measure

    worst = 0.0
    for n, s in ((2, 0.25), (2, 0.75), (1, 0.5)):
        kernel = normalize_kernel(n, s)
        omega = surface_measure(n)
        for t in (0.5, 1.0, 2.0):
            def radial(r, t=t):
                return omega * r ** (n - 1) * float(kernel.value(r, t))
            near, _ = integrate.quad(radial, 0.0, 100.0, points=[t, 10.0 * t], limit=400,
                                     epsabs=1e-14, epsrel=1e-12)
            worst = max(worst, abs(near + kernel.mass_outside(100.0, t) - 1.0))

    kernel = normalize_kernel(1, 0.5)
    pointwise = 0.0
    for x, t in zip(np.linspace(-3.0, 3.0, 10), np.linspace(0.2, 2.0, 10)):
        classical = t / (math.pi * (x * x + t * t))
        pointwise = max(pointwise, abs(float(kernel.value(abs(x), t)) - classical))
    return Outcome(worst <= 1e-6 and pointwise <= 1e-4, worst, 1e-6, {"poisson_pointwise": pointwise})


def check_submodularity() -> Outcome:
    from extension import (HalfSpaceField, gagliardo_energy, minmax_identity_check,
                           vertical_levels, weighted_energy_functional)
    from shapes import HalfPlane, Window

    rng = np.random.default_rng(2)
    window = Window.square(0.5, 1.0 / 8)
    levels = vertical_levels(window.h, 0.5)
    template = HalfSpaceField(window, levels, np.zeros((levels.size,) + window.shape), 0.3)
    worst, ordered = 0.0, 0.0
    for energy, shape in ((gagliardo_energy(window, HalfPlane(), 0.3), window.shape),
                          (weighted_energy_functional(template), template.values.shape)):
        for _ in range(1000):
            check = minmax_identity_check(rng.uniform(-1, 1, shape), rng.uniform(-1, 1, shape), energy)
            worst = min(worst, check.slack / max(1.0, check.energy_u_v))
        u = rng.uniform(-1.0, 1.0, shape)
        ordered = max(ordered, abs(minmax_identity_check(u, u, energy).slack),
                      abs(minmax_identity_check(u, np.minimum(u + 0.3, 1.0), energy).slack))
    return Outcome(worst >= -1e-12 and ordered == 0.0, worst, -1e-12, {"ordered_slack": ordered})


def check_competitor_decay() -> Outcome:
    from extension import translate_competitor_gap

    worst, fits = 0.0, {}
    for s in (0.25, 0.4):
        report = translate_competitor_gap(s, radii=(8.0, 16.0, 32.0))
        exponent = report.metadata["fitted_exponent"]
        fits[s] = exponent
        worst = max(worst, abs(exponent - (-2.0 * s)) if math.isfinite(exponent) else math.inf)
    return Outcome(worst <= 0.15, worst, 0.15, {"fitted_exponent": fits})


CRITERIA: Tuple[Criterion, ...] = (
    Criterion("A1", "Per_s(𝒦′) = Per_s(𝒦)", check_cone_flip),
    Criterion("A2", "EL: 𝒦 为 0, 𝒦′ 为正", check_el_dichotomy),
    Criterion("A3", "半平面是离散极小元", check_halfplane_minimal),
    Criterion("A4", "𝒦 不是离散极小元", check_cone_not_minimal),
    Criterion("A5", "s↘0: 球的极限 π²/2", check_s_to_zero_ball),
    Criterion("A6", "s↘0: 象限锥的凸组合", check_s_to_zero_quadrant),
    Criterion("A7", "s↗1/2: 𝒦 与半平面之比为 2", check_s_to_half),
    Criterion("A8", "振荡锥 2s·Per_s 不收敛", check_oscillation),
    Criterion("A9", "最小割与穷举一致", check_brute_oracle),
    Criterion("A10", "𝒢_ε 三个分支", check_branches),
    Criterion("A11", "梯度与中心差分", check_gradient),
    Criterion("A12", "ε 扫描界面偏差 ≤ 2h", check_gamma_interface),
    Criterion("A13", "密度下界", check_density_floor),
    Criterion("A14", "延拓核质量与经典 Poisson 核", check_extension_kernel),
    Criterion("A15", "min/max 次模性", check_submodularity),
    Criterion("A16", "平移竞争者 R^{−2s} 衰减", check_competitor_decay),
)


def select_criteria(ids: Optional[Sequence[str]] = None) -> List[Criterion]:
    if not ids:
        return list(CRITERIA)
    wanted = {str(i).strip().upper() for i in ids}
    unknown = wanted - {c.id for c in CRITERIA}
    if unknown:
        from errors import ValidationError
        raise ValidationError(f"未知的验收准则: {', '.join(sorted(unknown))}")
    return [c for c in CRITERIA if c.id in wanted]


def repro_all(ids: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """
    运行验收准则并打印 PASS/FAIL

    Returns:
        {"schema", "version", "passed", "failed", "all_passed", "criteria": [...]}
    """
    selected = select_criteria(ids)
    print(f"[Repro] 运行 {len(selected)} 条验收准则")
    items = []
    for criterion in selected:
        start = time.perf_counter()
        try:
            outcome = criterion.check()
            error = None
        except Exception as e:
            outcome = Outcome(False, math.nan, math.nan)
            error = f"{type(e).__name__}: {e}"
        runtime = time.perf_counter() - start
        tag = "✅ PASS" if outcome.passed else "❌ FAIL"
        print(f"[Repro] {tag} {criterion.id} {criterion.title}: value={outcome.value:.6g} "
              f"threshold={outcome.threshold:.6g} ({runtime:.1f}s)")
        if error:
            print(f"[Repro]    错误: {error}")
        items.append({
            "id": criterion.id,
            "title": criterion.title,
            "passed": bool(outcome.passed),
            "value": float(outcome.value),
            "threshold": float(outcome.threshold),
            "runtime_s": runtime,
            "detail": outcome.detail,
            "error": error,
        })
    passed = sum(item["passed"] for item in items)
    print(f"[Repro] 📊 通过 {passed}/{len(items)}")
    return {
        "schema": SUMMARY_SCHEMA_VERSION,
        "version": Config.VERSION,
        "passed": passed,
        "failed": len(items) - passed,
        "all_passed": passed == len(items),
        "criteria": items,
    }
