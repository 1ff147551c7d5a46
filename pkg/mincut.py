# mincut.py
"""
固定外部数据下的离散 s-周长极小化

目标函数 = Σ_{a∈IN} cost_in(a) + Σ_{a∈OUT} cost_out(a) + Σ_{无序对, 标签不同} w(a,b)
成对项非负，所以目标是子模的，用 PyMaxflow 的最小割精确求解。
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import maxflow
import numpy as np
from scipy import ndimage

from config import Config
from errors import BadRadii, CertificateMismatch, TooLarge, ValidationError
from kernel import InteractionTable, build_table, kahan_sum
from perimeter import check_perimeter_s, exterior_fields, interior_interaction
from shapes import GridSet, ShapeSpec, Window, rasterize

METHODS = ("maxflow", "brute", "flip-descent")
CERTIFICATE_RTOL = 1e-9

_stats_lock = threading.Lock()
_stats = {
    "problems_built": 0,
    "maxflow_runs": 0,
    "brute_runs": 0,
    "descent_runs": 0,
    "tie_flips": 0,
}


def _bump(key: str, amount: int = 1) -> None:
    with _stats_lock:
        _stats[key] += amount


def get_mincut_stats() -> dict:
    with _stats_lock:
        return dict(_stats)


def default_cut_rt(window: Window) -> float:
    """默认截断半径 16h"""
    return 16.0 * window.h


@dataclass(frozen=True, eq=False)
class CutProblem:
    """
    cost_in(a)  = a 标为 IN 时与外部补集（含尾部）的相互作用
    cost_out(a) = a 标为 OUT 时与外部 E（含尾部）的相互作用
    """
    window: Window
    s: float
    table: InteractionTable
    exterior: ShapeSpec
    cost_in: np.ndarray
    cost_out: np.ndarray
    constant: float = 0.0

    @property
    def rt(self) -> float:
        return self.table.rt

    @property
    def cells(self) -> int:
        return self.window.cell_count

    def objective(self, mask: np.ndarray) -> float:
        mask = np.asarray(mask, dtype=bool)
        interior = interior_interaction(mask, ~mask, self.table)
        e_ext = kahan_sum(np.sort(self.cost_in[mask]))
        ext_o = kahan_sum(np.sort(self.cost_out[~mask]))
        return kahan_sum([interior, e_ext, ext_o]) + self.constant

    def complemented(self) -> "CutProblem":
        """E ↔ Eᶜ：IN 与 OUT 代价互换"""
        return CutProblem(self.window, self.s, self.table, self.exterior.complement(),
                          self.cost_out, self.cost_in, self.constant)

    def truncation_bound(self, mask_a: np.ndarray, mask_b: np.ndarray) -> float:
        """
        截断引起的目标差上界：只在两个掩码不同的单元上累计
        hⁿ·τ(R_t)·min(1, 2|x_a|/R_t)
        """
        diff = np.asarray(mask_a, dtype=bool) ^ np.asarray(mask_b, dtype=bool)
        if not diff.any():
            return 0.0
        pts = self.window.centers()[diff]
        radius = np.sqrt(np.sum(pts * pts, axis=-1))
        factor = np.minimum(1.0, 2.0 * radius / self.rt)
        return self.window.cell_volume * self.table.tail_coefficient * kahan_sum(np.sort(factor))


@dataclass
class MinimizeResult:
    mask: np.ndarray
    objective: float
    method: str
    cells: int
    rt: float
    certificate: Optional[float] = None
    tie_break: str = "OUT"
    history: List[float] = field(default_factory=list)
    margin_vs_input: Optional[float] = None

    def to_record(self) -> dict:
        return {
            "objective": self.objective,
            "method": self.method,
            "cells": self.cells,
            "rt": self.rt,
            "certificate": self.certificate,
            "tie_break": self.tie_break,
            "in_cells": int(np.count_nonzero(self.mask)),
            "margin_vs_input": self.margin_vs_input,
        }


def build_problem(exterior: ShapeSpec, window: Window, s: float, rt: Optional[float] = None,
                  table: Optional[InteractionTable] = None) -> CutProblem:
    check_perimeter_s(s)
    if table is None:
        rt = float(rt) if rt is not None else default_cut_rt(window)
        if rt < 4.0 * window.h:
            raise BadRadii(f"R_t={rt} 小于 4h={4.0 * window.h}")
        table = build_table(window, s, rt)
    grid = GridSet(window, np.zeros(window.shape, dtype=bool), exterior)
    fields = exterior_fields(grid, table)
    _bump("problems_built")
    return CutProblem(window, s, table, exterior, fields.field_out, fields.field_in)


def _check_size(problem: CutProblem, cap: int, hint: str) -> None:
    if problem.cells > cap:
        raise TooLarge(f"窗口有 {problem.cells} 个单元，超过上限 {cap}（{hint}）")


def _half_structure(problem: CutProblem) -> np.ndarray:
    """半模板：每个无序对只出现一次，裁剪到窗口大小"""
    table = problem.table
    m = min(table.radius_cells, max(problem.window.shape) - 1)
    structure = np.zeros((2 * m + 1,) * table.n)
    offsets, weights = table.half()
    inside = np.all(np.abs(offsets) <= m, axis=1)
    idx = tuple(offsets[inside, k] + m for k in range(table.n))
    structure[idx] = weights[inside]
    return structure


def _neighbor_sums(problem: CutProblem, mask: np.ndarray):
    """(S_in, S_total)：每个单元与 IN 单元 / 全部窗口单元的权重和"""
    stencil = problem.table.stencil()
    s_in = ndimage.correlate(mask.astype(float), stencil, mode="constant", cval=0.0)
    s_all = ndimage.correlate(np.ones(mask.shape), stencil, mode="constant", cval=0.0)
    return s_in, s_all


def _flip_gain(problem: CutProblem, s_in: np.ndarray, s_all: np.ndarray) -> np.ndarray:
    """g(a) = OUT→IN 时目标的变化量；IN→OUT 的变化量为 −g(a)"""
    return problem.cost_in - problem.cost_out + (s_all - s_in) - s_in


def _add_stencil(s_in: np.ndarray, stencil: np.ndarray, a: Tuple[int, ...], m: int, sign: float) -> None:
    """单元 a 翻转后就地更新其周围的 S_in"""
    shape = s_in.shape
    dst = tuple(slice(max(0, c - m), min(size, c + m + 1)) for c, size in zip(a, shape))
    src = tuple(slice(sl.start - c + m, sl.stop - c + m) for sl, c in zip(dst, a))
    s_in[dst] += sign * stencil[src]


def _break_ties_out(problem: CutProblem, mask: np.ndarray, scale: float) -> np.ndarray:
    """不增加目标的 IN→OUT 翻转全部执行，直到没有可翻转的单元"""
    mask = mask.copy()
    tol = 1e-12 * max(1.0, scale)
    stencil = problem.table.stencil()
    m = problem.table.radius_cells
    s_in, s_all = _neighbor_sums(problem, mask)
    base_gain = problem.cost_in - problem.cost_out + s_all
    while True:
        # 一次只翻一个，翻转后邻居的增量会变化
        candidates = np.flatnonzero(mask & (2.0 * s_in - base_gain <= tol))
        if candidates.size == 0:
            return mask
        a = np.unravel_index(int(candidates[0]), mask.shape)
        mask[a] = False
        _add_stencil(s_in, stencil, a, m, -1.0)
        _bump("tie_flips")


def minimize_exact(problem: CutProblem) -> MinimizeResult:
    _check_size(problem, Config.MINCUT_CELL_CAP, "改用 flip_descent")
    graph = maxflow.Graph[float]()
    nodes = graph.add_grid_nodes(problem.window.shape)
    graph.add_grid_edges(nodes, weights=1.0, structure=_half_structure(problem), symmetric=True)
    # 源侧为 IN：割断汇边付 cost_in，割断源边付 cost_out
    graph.add_grid_tedges(nodes, problem.cost_out, problem.cost_in)
    flow = graph.maxflow()
    mask = ~graph.get_grid_segments(nodes)
    _bump("maxflow_runs")

    value = problem.objective(mask)
    if abs(value - flow) > CERTIFICATE_RTOL * max(1.0, abs(flow)):
        raise CertificateMismatch(f"割值 {value:.15g} 与最大流 {flow:.15g} 不一致")

    mask = _break_ties_out(problem, mask, abs(value))
    value = problem.objective(mask)
    if Config.DEBUG_MODE:
        print(f"[MinCut] {problem.cells} 个单元, R_t={problem.rt:g}: "
              f"objective={value:.10g}, flow={flow:.10g}")
    return MinimizeResult(mask, value, "maxflow", problem.cells, problem.rt, certificate=float(flow))


def _dense_pairs(problem: CutProblem) -> np.ndarray:
    idx = np.argwhere(np.ones(problem.window.shape, dtype=bool))
    stencil = problem.table.stencil()
    m = problem.table.radius_cells
    diff = idx[np.newaxis, :, :] - idx[:, np.newaxis, :]
    inside = np.all(np.abs(diff) <= m, axis=-1)
    dense = np.zeros(inside.shape)
    sel = tuple((diff[..., k] + m)[inside] for k in range(diff.shape[-1]))
    dense[inside] = stencil[sel]
    return dense


def minimize_brute(problem: CutProblem, chunk: int = 1 << 15) -> MinimizeResult:
    """穷举全部 2^N 个掩码（N ≤ BRUTE_CELL_CAP）"""
    _check_size(problem, Config.BRUTE_CELL_CAP, "穷举只用于小窗口")
    n = problem.cells
    w = _dense_pairs(problem)
    row = w.sum(axis=1)
    c_in = problem.cost_in.reshape(-1)
    c_out = problem.cost_out.reshape(-1)
    bits = np.arange(n, dtype=np.int64)

    best_value, best_index = math.inf, 0
    for start in range(0, 1 << n, chunk):
        index = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        labels = ((index[:, np.newaxis] >> bits) & 1).astype(float)
        # Σ_{a<b} w_ab [L_a ≠ L_b] = L·r − L·W·L
        values = (labels @ c_in + (1.0 - labels) @ c_out
                  + labels @ row - np.sum((labels @ w) * labels, axis=1))
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value, best_index = float(values[k]), int(index[k])
    _bump("brute_runs")

    mask = (((best_index >> bits) & 1) == 1).reshape(problem.window.shape)
    return MinimizeResult(mask, problem.objective(mask), "brute", n, problem.rt)


def flip_descent(problem: CutProblem, init: Optional[np.ndarray] = None, seed: int = 0,
                 max_sweeps: Optional[int] = None) -> MinimizeResult:
    """
    单单元翻转下降：按种子打乱的顺序扫描，目标严格下降才接受，
    一整轮没有接受的翻转即为局部极小
    """
    mask = (np.zeros(problem.window.shape, dtype=bool) if init is None
            else np.array(init, dtype=bool, copy=True))
    rng = np.random.default_rng(seed)
    stencil = problem.table.stencil()
    m = problem.table.radius_cells
    shape = problem.window.shape
    s_in, s_all = _neighbor_sums(problem, mask)
    base_gain = problem.cost_in - problem.cost_out + s_all

    value = problem.objective(mask)
    history = [value]
    tol = 1e-14 * max(1.0, abs(value))
    max_sweeps = max_sweeps or Config.DESCENT_MAX_ITERS
    cells = np.argwhere(np.ones(shape, dtype=bool))

    for _ in range(max_sweeps):
        accepted = 0
        for k in rng.permutation(len(cells)):
            a = tuple(cells[k])
            gain = base_gain[a] - 2.0 * s_in[a]
            delta = -gain if mask[a] else gain
            if delta >= -tol:
                continue
            mask[a] = not mask[a]
            _add_stencil(s_in, stencil, a, m, 1.0 if mask[a] else -1.0)
            value += delta
            history.append(value)
            accepted += 1
        if not accepted:
            break
    _bump("descent_runs")

    return MinimizeResult(mask, problem.objective(mask), "flip-descent", problem.cells,
                          problem.rt, history=history)


def minimize(exterior: ShapeSpec, window: Window, s: float, method: str = "maxflow",
             rt: Optional[float] = None, seed: int = 0) -> MinimizeResult:
    """构建问题并求解，附带与栅格化外部形状的目标差"""
    if method not in METHODS:
        raise ValidationError(f"未知方法: {method}，可选 {', '.join(METHODS)}")
    problem = build_problem(exterior, window, s, rt)
    if method == "maxflow":
        result = minimize_exact(problem)
    elif method == "brute":
        result = minimize_brute(problem)
    else:
        result = flip_descent(problem, rasterize(exterior, window).mask, seed)
    result.margin_vs_input = problem.objective(rasterize(exterior, window).mask) - result.objective
    return result
