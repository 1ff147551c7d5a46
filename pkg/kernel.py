# kernel.py
"""
奇异核 |x−y|^{−(n+2s)} 的离散化

- pair_weight: 两个边长 h 的单元之间的二重积分（近场自相似细分，远场中点公式）
- tail: 半径 R 以外的解析尾部积分 ω_{n−1} R^{−2s}/(2s)
- build_table: 截断半径 R_t 内所有偏移的权重表（可多线程构建，结果与线程数无关）
- Kahan 补偿求和工具，供所有能量归约使用
"""

from __future__ import annotations

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from config import Config
from errors import (
    BadRadii,
    SOutOfRange,
    TableTooLarge,
    ZeroOffset,
)
from shapes import Window, surface_measure

TABLE_FORMAT_VERSION = 1

# 远场子单元对使用的 Gauss-Legendre 阶数
_FAR_GAUSS_ORDER = 3

_stats = {
    "tables_built": 0,
    "cache_hits": 0,
    "cache_misses": 0,
}
_stats_lock = threading.Lock()


def _bump(key: str) -> None:
    with _stats_lock:
        _stats[key] += 1


def get_kernel_stats() -> dict:
    with _stats_lock:
        return dict(_stats)


@dataclass(frozen=True)
class Constants:
    """维数 n、指数 s 以及 ω_{n−1}、c_n"""
    n: int
    s: float

    @property
    def omega(self) -> float:
        return surface_measure(self.n)

    @property
    def c_n(self) -> float:
        # s↘0 极限常数取 ω_{n−1}
        return self.omega

    @property
    def exponent(self) -> float:
        return self.n + 2.0 * self.s


def check_s(s: float, upper: float = 1.0, label: str = "s ∈ (0,1)") -> float:
    if not (isinstance(s, (int, float)) and 0.0 < s < upper):
        raise SOutOfRange(f"需要 {label}, 收到 s={s}")
    return float(s)


# Kahan 补偿求和

def kahan_add(total: float, compensation: float, term: float) -> Tuple[float, float]:
    """一次补偿加法，返回新的 (total, compensation)"""
    y = term - compensation
    t = total + y
    compensation = (t - total) - y
    return t, compensation


def kahan_sum(values: Iterable[float]) -> float:
    total = 0.0
    c = 0.0
    for v in values:
        total, c = kahan_add(total, c, float(v))
    return total


class KahanAccumulator:
    """逐元素补偿累加（数组形状固定，按调用顺序累加）"""

    def __init__(self, shape=()):
        self.total = np.zeros(shape, dtype=float)
        self._c = np.zeros(shape, dtype=float)

    def add(self, values) -> None:
        y = np.asarray(values, dtype=float) - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t

    @property
    def value(self):
        return self.total if self.total.shape else float(self.total)


# 单位单元权重（h = 1）

def canonical_offset(offset: Iterable[int]) -> Tuple[int, ...]:
    """格点反射与坐标置换下的代表元：绝对值排序"""
    return tuple(sorted(abs(int(v)) for v in offset))


def _midpoint(offset: np.ndarray, exponent: float) -> np.ndarray:
    r2 = np.sum(np.asarray(offset, dtype=float) ** 2, axis=-1)
    return r2 ** (-0.5 * exponent)


@lru_cache(maxsize=8)
def _gauss_cell(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(_FAR_GAUSS_ORDER)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    pts = np.array(list(product(nodes, repeat=n)))
    wts = np.array([np.prod(w) for w in product(weights, repeat=n)])
    return pts, wts


def _far_child(offset: Tuple[int, ...], n: int, s: float) -> float:
    """分离充分的单位单元对：张量 Gauss 求积"""
    pts, wts = _gauss_cell(n)
    diff = (np.asarray(offset, dtype=float) + pts)[np.newaxis, :, :] - pts[:, np.newaxis, :]
    vals = np.sum(diff * diff, axis=-1) ** (-0.5 * (n + 2.0 * s))
    return float(wts @ vals @ wts)


def _near_keys(n: int, separation: int):
    keys = set()
    for e in product(range(-separation + 1, separation), repeat=n):
        if any(e):
            keys.add(canonical_offset(e))
    return sorted(keys)


def _children(key: Tuple[int, ...], n: int):
    """把两个单位单元各自二分后，子单元对的偏移（以子单元宽度为单位）"""
    for i in product((0, 1), repeat=n):
        for j in product((0, 1), repeat=n):
            yield tuple(2 * key[k] + j[k] - i[k] for k in range(n))


@lru_cache(maxsize=64)
def _near_fixed_point(n: int, s: float, separation: int) -> Dict[Tuple[int, ...], float]:
    """
    自相似关系 P(e) = 2^{−(n−2s)} Σ_{i,j} P(2e+j−i) 的不动点（s < 1/2）

    近场子对是未知量，远场子对用 Gauss 求积，得到线性方程组 (I−A)P = b。
    """
    keys = _near_keys(n, separation)
    index = {k: i for i, k in enumerate(keys)}
    scale = 2.0 ** (-(n - 2.0 * s))
    a = np.zeros((len(keys), len(keys)))
    b = np.zeros(len(keys))
    for row, key in enumerate(keys):
        for child in _children(key, n):
            if max(abs(v) for v in child) >= separation:
                b[row] += scale * _far_child(child, n, s)
            else:
                a[row, index[canonical_offset(child)]] += scale
    values = np.linalg.solve(np.eye(len(keys)) - a, b)
    return {k: float(v) for k, v in zip(keys, values)}


@lru_cache(maxsize=4096)
def _near_recursive(key: Tuple[int, ...], n: int, s: float, separation: int, depth: int) -> float:
    """深度受限的细分递归，叶子用中点公式（s ≥ 1/2 时相邻单元积分发散）"""
    if depth == 0:
        return float(_midpoint(np.asarray(key), n + 2.0 * s))
    scale = 2.0 ** (-(n - 2.0 * s))
    total = 0.0
    for child in _children(key, n):
        if max(abs(v) for v in child) >= separation:
            total += _far_child(child, n, s)
        else:
            total += _near_recursive(canonical_offset(child), n, s, separation, depth - 1)
    return scale * total


def unit_weight(offset: Iterable[int], s: float, n: int) -> float:
    """h = 1 时的单元对权重"""
    offset = tuple(int(v) for v in offset)
    if len(offset) != n:
        raise ZeroOffset(f"偏移维数 {len(offset)} 与 n={n} 不一致")
    if not any(offset):
        raise ZeroOffset("单元自身相互作用不会被请求（对角线上 |χ−χ| = 0）")
    separation = Config.NEAR_SEPARATION
    if max(abs(v) for v in offset) >= separation:
        return float(_midpoint(np.asarray(offset), n + 2.0 * s))
    key = canonical_offset(offset)
    if s < 0.5:
        return _near_fixed_point(n, float(s), separation)[key]
    return _near_recursive(key, n, float(s), separation, Config.NEAR_DEPTH)


def pair_weight(offset: Iterable[int], h: float, s: float, n: int) -> float:
    """
    ∬_{C_0×C_offset} |x−y|^{−(n+2s)} dx dy

    ‖offset‖∞ ≥ 4 用中点公式 h^{2n}|h·offset|^{−(n+2s)}；
    更近的偏移由单位单元值按 h^{n−2s} 伸缩。
    """
    check_s(s)
    if h <= 0.0:
        raise BadRadii(f"分辨率必须为正: h={h}")
    return h ** (n - 2.0 * s) * unit_weight(offset, s, n)


def tail(radius: float, s: float, n: int) -> float:
    """∫_{|y|>R} |y|^{−(n+2s)} dy = ω_{n−1} R^{−2s} / (2s)"""
    check_s(s)
    if not radius > 0.0:
        raise BadRadii(f"尾部半径必须为正: R={radius}")
    return surface_measure(n) * radius ** (-2.0 * s) / (2.0 * s)


# 权重表

@dataclass(frozen=True, eq=False)
class InteractionTable:
    """
    截断半径内全部偏移（含 ±e）的权重，偏移按字典序排列

    radius_cells = ceil(R_t / h)，即需要填充的外部单元层数。
    """
    n: int
    h: float
    s: float
    rt: float
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def tail_coefficient(self) -> float:
        return tail(self.rt, self.s, self.n)

    @property
    def radius_cells(self) -> int:
        return int(math.ceil(self.rt / self.h - 1e-12))

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def weight_of(self, offset: Iterable[int]) -> float:
        offset = np.asarray(tuple(offset), dtype=np.int64)
        hit = np.nonzero(np.all(self.offsets == offset, axis=1))[0]
        return float(self.weights[hit[0]]) if hit.size else 0.0

    def half(self) -> Tuple[np.ndarray, np.ndarray]:
        """每个无序对只保留一次：字典序为正的偏移"""
        keep = np.zeros(self.size, dtype=bool)
        for k in range(self.n - 1, -1, -1):
            keep = np.where(self.offsets[:, k] != 0, self.offsets[:, k] > 0, keep)
        # 上面从最后一个分量往前覆盖，最终由第一个非零分量决定符号
        return self.offsets[keep], self.weights[keep]

    def stencil(self) -> np.ndarray:
        """(2M+1)^n 的稠密模板，中心与截断盘外为 0"""
        m = self.radius_cells
        dense = np.zeros((2 * m + 1,) * self.n)
        idx = tuple((self.offsets[:, k] + m) for k in range(self.n))
        dense[idx] = self.weights
        return dense

    def total_weight(self) -> float:
        return kahan_sum(self.weights)


def table_offsets(n: int, h: float, rt: float) -> np.ndarray:
    m = int(math.ceil(rt / h - 1e-12))
    estimate = (2 * m + 1) ** n * (math.pi / 4.0 if n == 2 else 1.0)
    if estimate > Config.TABLE_OFFSET_CAP * 1.1:
        raise TableTooLarge(f"偏移数约 {int(estimate)} 超过上限 {Config.TABLE_OFFSET_CAP}")
    axis = np.arange(-m, m + 1)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    r2 = np.sum(grid.astype(float) ** 2, axis=1) * h * h
    keep = (r2 <= rt * rt * (1.0 + 1e-12)) & np.any(grid != 0, axis=1)
    offsets = grid[keep]
    if offsets.shape[0] > Config.TABLE_OFFSET_CAP:
        raise TableTooLarge(f"偏移数 {offsets.shape[0]} 超过上限 {Config.TABLE_OFFSET_CAP}")
    return offsets


def _weights_chunk(offsets: np.ndarray, h: float, s: float, n: int) -> np.ndarray:
    separation = Config.NEAR_SEPARATION
    out = h ** (n - 2.0 * s) * _midpoint(offsets, n + 2.0 * s)
    near = np.max(np.abs(offsets), axis=1) < separation
    for i in np.nonzero(near)[0]:
        out[i] = pair_weight(offsets[i], h, s, n)
    return out


def build_table(window: Window, s: float, rt: float, threads: Optional[int] = None) -> InteractionTable:
    """
    构建 R_t 内的权重表。偏移被切成固定的块并按原顺序拼接，
    所以结果与线程数无关。
    """
    check_s(s)
    h = window.h
    if rt < 4.0 * h * (1.0 - 1e-12):
        raise BadRadii(f"截断半径需要 R_t ≥ 4h: R_t={rt}, h={h}")

    cached = _load_cached(window.n, h, s, rt)
    if cached is not None:
        return cached

    offsets = table_offsets(window.n, h, rt)
    workers = max(1, threads or Config.THREADS)
    chunk = 4096
    pieces = [offsets[i:i + chunk] for i in range(0, offsets.shape[0], chunk)]
    if workers == 1 or len(pieces) == 1:
        results = [_weights_chunk(p, h, s, window.n) for p in pieces]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _weights_chunk(p, h, s, window.n), pieces))
    weights = np.concatenate(results) if results else np.zeros(0)

    table = InteractionTable(window.n, h, float(s), float(rt), offsets, weights)
    _bump("tables_built")
    if Config.DEBUG_MODE:
        print(f"[Kernel] ✅ 权重表: n={window.n}, h={h:g}, s={s:g}, R_t={rt:g}, 偏移数={table.size}")
    _store_cached(table)
    return table


# 表缓存

def save_table(table: InteractionTable, path: str) -> None:
    np.savez(
        path,
        version=np.array(TABLE_FORMAT_VERSION),
        header=np.array([table.n, table.h, table.s, table.rt], dtype=float),
        offsets=table.offsets,
        weights=table.weights,
    )


def load_table(path: str) -> Optional[InteractionTable]:
    """读取缓存；版本不符时返回 None"""
    with np.load(path) as data:
        if int(data["version"]) != TABLE_FORMAT_VERSION:
            if Config.DEBUG_MODE:
                print(f"[Kernel] ⚠️ 缓存版本不符，忽略: {path}")
            return None
        n, h, s, rt = data["header"].tolist()
        return InteractionTable(int(n), h, s, rt, data["offsets"].astype(np.int64), data["weights"].copy())


def _cache_path(n: int, h: float, s: float, rt: float) -> Optional[str]:
    if not Config.CACHE_DIR:
        return None
    name = f"table_n{n}_h{h:.12g}_s{s:.12g}_rt{rt:.12g}_v{TABLE_FORMAT_VERSION}.npz"
    return os.path.join(Config.CACHE_DIR, name)


def _load_cached(n: int, h: float, s: float, rt: float) -> Optional[InteractionTable]:
    path = _cache_path(n, h, s, rt)
    if path is None:
        return None
    if not os.path.exists(path):
        _bump("cache_misses")
        return None
    table = load_table(path)
    if table is not None:
        _bump("cache_hits")
    return table


def _store_cached(table: InteractionTable) -> None:
    path = _cache_path(table.n, table.h, table.s, table.rt)
    if path is None:
        return
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_table(table, path)
