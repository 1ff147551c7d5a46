# perimeter.py
"""
分数阶周长 Per_s(E,U) 的四区域分解

Per_s(E,U) = ℐ(E′,O′) + ℐ(E′,O″) + ℐ(E″,O′)
E′/O′ 是 U 内的网格单元，E″/O″ 来自外部解析形状（截断半径内栅格化，之外用解析尾部）。
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage import measure

from config import Config
from errors import BadWindow, SOutOfRange, UnsupportedShape
from kernel import (
    InteractionTable,
    KahanAccumulator,
    build_table,
    check_s,
    kahan_sum,
)
from reporting import SweepReport, extrapolate_linear
from shapes import GridSet, ShapeSpec, Window, rasterize, surface_measure


PERIMETER_S_LABEL = "s ∈ (0,1/2)"


def check_perimeter_s(s: float) -> float:
    return check_s(s, 0.5, PERIMETER_S_LABEL)


def default_rt(window: Window) -> float:
    """默认截断半径：窗口最长边，至少 4h"""
    side = max(hi - lo for lo, hi in zip(window.lower, window.upper))
    return max(side, 4.0 * window.h)


@dataclass(frozen=True, eq=False)
class RegionSplit:
    """
    E′/O′ 为窗口形状的掩码（只在 U 内为真），
    E″/O″ 为加宽 pad 层后的掩码（U 内的单元一律为假）
    """
    eprime: np.ndarray
    oprime: np.ndarray
    edouble: np.ndarray
    odouble: np.ndarray
    pad: int


def region_split(gridset: GridSet, pad: int) -> RegionSplit:
    window = gridset.window
    domain = gridset.domain_mask
    eprime = gridset.mask & domain
    oprime = ~gridset.mask & domain

    member = gridset.exterior.contains(window.centers(pad))
    inside_u = np.zeros(member.shape, dtype=bool)
    core = tuple(slice(pad, pad + m) for m in window.shape)
    inside_u[core] = domain
    return RegionSplit(eprime, oprime, member & ~inside_u, ~member & ~inside_u, pad)


@dataclass(frozen=True, eq=False)
class ExteriorFields:
    """每个窗口单元与外部 E″ / O″ 的相互作用（已含尾部）"""
    field_in: np.ndarray
    field_out: np.ndarray
    tail_in: float
    tail_out: float
    occupancy: float


def exterior_fields(gridset: GridSet, table: InteractionTable, with_tails: bool = True) -> ExteriorFields:
    """
    field_in(a)  = Σ_b w(a,b)[b ∈ E″] + hⁿ·τ(R_t)·occ
    field_out(a) = Σ_b w(a,b)[b ∈ O″] + hⁿ·τ(R_t)·(1−occ)
    """
    window = gridset.window
    m = table.radius_cells
    split = region_split(gridset, m)
    acc_in = KahanAccumulator(window.shape)
    acc_out = KahanAccumulator(window.shape)
    for offset, weight in zip(table.offsets, table.weights):
        sl = tuple(slice(m + int(d), m + int(d) + size) for d, size in zip(offset, window.shape))
        acc_in.add(weight * split.edouble[sl])
        acc_out.add(weight * split.odouble[sl])

    occ = 0.0
    tail_in = tail_out = 0.0
    if with_tails:
        occ = gridset.exterior.tail_occupancy(table.rt, table.s)
        tau = table.tail_coefficient * window.cell_volume
        tail_in, tail_out = tau * occ, tau * (1.0 - occ)
    return ExteriorFields(acc_in.total + tail_in, acc_out.total + tail_out, tail_in, tail_out, occ)


def interior_interaction(a: np.ndarray, b: np.ndarray, table: InteractionTable) -> float:
    """ℐ(A,B) 在窗口单元之间：Σ_{无序对} w·([a∈A][b∈B] + [a∈B][b∈A])"""
    shape = a.shape
    offsets, weights = table.half()
    terms = []
    for offset, weight in zip(offsets, weights):
        if any(abs(int(d)) >= size for d, size in zip(offset, shape)):
            continue
        src = tuple(slice(max(0, -int(d)), size - max(0, int(d))) for d, size in zip(offset, shape))
        dst = tuple(slice(max(0, int(d)), size + min(0, int(d))) for d, size in zip(offset, shape))
        count = np.count_nonzero(a[src] & b[dst]) + np.count_nonzero(b[src] & a[dst])
        if count:
            terms.append(weight * count)
    return kahan_sum(terms)


@dataclass(frozen=True)
class PerimeterValue:
    total: float
    interior: float          # ℐ(E′,O′)
    e_to_exterior: float     # ℐ(E′,O″)
    exterior_to_o: float     # ℐ(E″,O′)
    rt: float
    tail_contribution: float

    @property
    def tail_share(self) -> float:
        return self.tail_contribution / self.total if self.total > 0.0 else 0.0

    def components(self) -> Tuple[float, float, float]:
        return self.interior, self.e_to_exterior, self.exterior_to_o


def frac_perimeter(gridset: GridSet, s: float, rt: Optional[float] = None,
                   table: Optional[InteractionTable] = None, with_tails: bool = True) -> PerimeterValue:
    """Per_s(E,U)；U 为 gridset 的 domain（默认整个窗口）"""
    check_perimeter_s(s)
    window = gridset.window
    if table is None:
        table = build_table(window, s, rt if rt is not None else default_rt(window))
    fields = exterior_fields(gridset, table, with_tails)
    split_e = gridset.mask & gridset.domain_mask
    split_o = ~gridset.mask & gridset.domain_mask

    interior = interior_interaction(split_e, split_o, table)
    e_ext = kahan_sum(np.sort(fields.field_out[split_e]))
    ext_o = kahan_sum(np.sort(fields.field_in[split_o]))
    tail_part = (np.count_nonzero(split_e) * fields.tail_out
                 + np.count_nonzero(split_o) * fields.tail_in)
    total = kahan_sum([interior, e_ext, ext_o])
    if Config.DEBUG_MODE:
        print(f"[Perimeter] s={s:g}, R_t={table.rt:g}: total={total:.6g} "
              f"(ℐ(E′,O′)={interior:.6g}, ℐ(E′,O″)={e_ext:.6g}, ℐ(E″,O′)={ext_o:.6g})")
    return PerimeterValue(total, interior, e_ext, ext_o, table.rt, float(tail_part))


def gagliardo_seminorm_sq(field, s: float, rt: Optional[float] = None,
                          table: Optional[InteractionTable] = None) -> float:
    """
    [u]² over Q_U（有序对，外部×外部除外）

    field 需要 window / values / exterior / trace 属性，可选 domain；
    外部值为 trace[0]（在 E 内）或 trace[1]（在 E 外）。
    """
    check_perimeter_s(s)
    window = field.window
    if table is None:
        table = build_table(window, s, rt if rt is not None else default_rt(window))
    values = np.asarray(field.values, dtype=float)
    domain = getattr(field, "domain", None)
    domain = np.ones(window.shape, dtype=bool) if domain is None else np.asarray(domain, dtype=bool)
    inside_val, outside_val = field.trace

    grid = GridSet(window, np.zeros(window.shape, dtype=bool), field.exterior, domain)
    ext = exterior_fields(grid, table)

    offsets, weights = table.half()
    shape = window.shape
    pair_terms = []
    for offset, weight in zip(offsets, weights):
        if any(abs(int(d)) >= size for d, size in zip(offset, shape)):
            continue
        src = tuple(slice(max(0, -int(d)), size - max(0, int(d))) for d, size in zip(offset, shape))
        dst = tuple(slice(max(0, int(d)), size + min(0, int(d))) for d, size in zip(offset, shape))
        both = domain[src] & domain[dst]
        if not both.any():
            continue
        diff = values[src] - values[dst]
        pair_terms.append(weight * float(np.sum(np.where(both, diff * diff, 0.0))))
    # U 内对 × U 外单元（含窗口内 U 以外的单元，它们由 exterior_fields 负责）
    cross = (values - inside_val) ** 2 * ext.field_in + (values - outside_val) ** 2 * ext.field_out
    exterior_part = kahan_sum(np.sort(cross[domain]))
    return 2.0 * (kahan_sum(pair_terms) + exterior_part)


def _contour_length(mask: np.ndarray, window: Window, radius: float) -> float:
    """marching squares：中点落在 B_r 内的线段长度（先做 σ = 1 单元的高斯平滑去掉阶梯）"""
    smooth = ndimage.gaussian_filter(mask.astype(float), sigma=1.0, mode="nearest")
    padded = np.pad(smooth, 1, mode="edge")
    length = 0.0
    for contour in measure.find_contours(padded, 0.5):
        pts = (contour - 1.0 + 0.5) * window.h + np.asarray(window.lower)
        seg = np.diff(pts, axis=0)
        mid = 0.5 * (pts[1:] + pts[:-1])
        inside = np.sum(mid * mid, axis=1) < radius * radius
        length += float(np.sum(np.hypot(seg[inside, 0], seg[inside, 1])))
    return length


def classical_perimeter(gridset: GridSet, r: float, prefer_exact: bool = True) -> float:
    """B_r 内的经典周长：掩码与解析形状一致时用闭式，否则用网格轮廓"""
    window = gridset.window
    if r > window.half_width + 1e-12:
        raise BadWindow(f"B_{r} 必须在窗口内（半宽 {window.half_width}）")
    if prefer_exact and np.array_equal(gridset.mask, gridset.exterior.contains(window.centers())):
        try:
            return gridset.exterior.exact_local_quantities(r).perimeter_in_br
        except UnsupportedShape:
            pass
    if window.n == 1:
        x = window.axis_centers()[0]
        flips = np.nonzero(gridset.mask[1:] != gridset.mask[:-1])[0]
        boundary = 0.5 * (x[flips] + x[flips + 1])
        return float(np.count_nonzero(np.abs(boundary) < r))
    return _contour_length(gridset.mask, window, r)


def local_measures(spec: ShapeSpec, window: Window, r: float) -> Tuple[float, float]:
    """(|E∩B_r|, |B_r∖E|)，闭式优先，否则网格计数"""
    try:
        q = spec.exact_local_quantities(r)
        return q.measure_e_in_br, q.measure_complement_in_br
    except UnsupportedShape:
        gs = rasterize(spec, window).restrict(r)
        return gs.measure(), gs.complement_measure()


def a_of_E(spec: ShapeSpec, s_list: Iterable[float]) -> List[float]:
    """(2s/ω) ∫_{E∖B_1} |y|^{−n−2s} dy，每个 s 一个值"""
    return [spec.tail_occupancy(1.0, check_perimeter_s(s)) for s in s_list]


SWEEP_COLUMNS = ("s", "per_s", "scaled", "target", "rel_err", "tail_share")


def _sweep_row(spec: ShapeSpec, window: Window, r: float, s: float, rt: float, mode: str,
               target: float) -> tuple:
    gridset = rasterize(spec, window).restrict(r)
    value = frac_perimeter(gridset, s, rt)
    factor = (1.0 - 2.0 * s) if mode == "to_half" else 2.0 * s
    scaled = factor * value.total
    rel_err = abs(scaled - target) / abs(target) if target else abs(scaled)
    return (s, value.total, scaled, target, rel_err, value.tail_share)


def limit_target(spec: ShapeSpec, window: Window, r: float, mode: str) -> float:
    omega = surface_measure(spec.dimension)
    if mode == "to_half":
        gs = rasterize(spec, window)
        return omega * classical_perimeter(gs, r)
    a = spec.asymptotic_density().value
    inside, outside = local_measures(spec, window, r)
    return omega * ((1.0 - a) * inside + a * outside)


def scaled_limits(spec: ShapeSpec, window: Window, s_list: Sequence[float], mode: str,
                  r: Optional[float] = None, rt: Optional[float] = None) -> SweepReport:
    """
    to_half: (1−2s)·Per_s(E,B_r) → ω·Per(E,B_r)
    to_zero: 2s·Per_s(E,B_r) → ω[(1−a)|E∩B_r| + a|B_r∖E|]
    """
    if mode not in ("to_half", "to_zero"):
        raise SOutOfRange(f"未知的极限模式: {mode}（to_half 或 to_zero）")
    s_values = [check_perimeter_s(s) for s in s_list]
    if not s_values:
        raise SOutOfRange("s 列表为空")
    diffs = np.diff(s_values)
    if diffs.size and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise SOutOfRange("s 列表必须单调")
    r = r if r is not None else 0.75 * window.half_width
    rt = rt if rt is not None else default_rt(window)

    if mode == "to_zero" and not spec.asymptotic_density().defined:
        target = float("nan")
    else:
        target = limit_target(spec, window, r, mode)

    workers = max(1, min(Config.THREADS, len(s_values)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda s: _sweep_row(spec, window, r, s, rt, mode, target), s_values))

    report = SweepReport(SWEEP_COLUMNS)
    for row in rows:
        report.add_row(*row)

    s_limit = 0.5 if mode == "to_half" else 0.0
    limit = extrapolate_linear(report.column("s"), report.column("scaled"), s_limit)
    report.metadata.update({
        "shape": spec.to_grammar(),
        "mode": mode,
        "r": r,
        "rt": rt,
        "h": window.h,
        "window": window.to_text(),
        "extrapolated_limit": limit,
        "target": target,
        "extrapolated_rel_err": abs(limit - target) / abs(target) if math.isfinite(target) and target else None,
    })
    return report
