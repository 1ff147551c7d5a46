# experiments.py
"""
具体实验：每个命令行子命令对应一个 ExperimentBase 子类
"""

import os
from typing import Optional, Sequence

import numpy as np

from config import Config, ExperimentKind
from errors import ValidationError
from experiment_base import ExperimentBase, ExperimentResult
from reporting import SweepReport, write_json, write_levels, write_matrix
from shapes import (
    CrossCone,
    CrossConePlusSquare,
    ShapeSpec,
    Window,
    mask_to_pgm,
    parse_shape,
    rasterize,
)

DEFAULT_H = 1.0 / 32
DEFAULT_S_LISTS = {
    "to_half": (0.40, 0.44, 0.47, 0.49),
    "to_zero": (0.05, 0.02, 0.01),
}


def _require(value, name: str, kind: ExperimentKind):
    if value is None:
        raise ValidationError(f"{kind.value} 需要参数 --{name.replace('_', '-')}")
    return value


class _GridExperiment(ExperimentBase):
    """需要形状与窗口的实验的公共部分"""

    default_h = DEFAULT_H
    default_shape: Optional[str] = None

    def _shape(self) -> ShapeSpec:
        text = self.config.shape or self.default_shape
        return parse_shape(_require(text, "shape", self.kind))

    def _h(self) -> float:
        return float(self.config.h if self.config.h is not None else self.default_h)

    def _window(self, spec: ShapeSpec) -> Window:
        if self.config.window is not None:
            return Window.parse(self.config.window, self._h())
        return Window.square(1.0, self._h(), spec.dimension)

    def _s(self) -> float:
        return float(_require(self.config.s, "s", self.kind))

    def _write_record(self, result: ExperimentResult, path: Optional[str]) -> None:
        if path is None:
            return
        record = dict(result.record)
        record["config_hash"] = self.config.config_hash()
        record["code_version"] = Config.VERSION
        write_json(path, record)
        result.artifacts.append(path)
        print(f"[Experiment] ✅ 写出 {path}")


class PerimeterExperiment(_GridExperiment):
    """单个 s 的 Per_s(E, U)"""

    kind = ExperimentKind.PERIMETER

    def _execute(self) -> ExperimentResult:
        from perimeter import frac_perimeter

        spec = self._shape()
        window = self._window(spec)
        s = self._s()
        gridset = rasterize(spec, window)
        if self.config.r is not None:
            gridset = gridset.restrict(self.config.r)
        value = frac_perimeter(gridset, s, self.config.rt)

        report = SweepReport(("s", "per_s", "interior", "e_to_exterior", "exterior_to_o", "tail_share"))
        report.add_row(s, value.total, *value.components(), value.tail_share)
        report.metadata.update({"shape": spec.to_grammar(), "window": window.to_text(), "h": window.h,
                                "rt": value.rt, "r": self.config.r})
        result = ExperimentResult(self.kind, report, {
            "per_s": value.total, "interior": value.interior, "e_to_exterior": value.e_to_exterior,
            "exterior_to_o": value.exterior_to_o, "tail_share": value.tail_share, "rt": value.rt,
        })
        print(f"[Perimeter] ✅ Per_s={value.total:.12g} (s={s:g}, R_t={value.rt:g})")
        self._write_report(result)
        self._write_record(result, self.config.record)
        return result


class SweepSExperiment(_GridExperiment):
    """(1−2s)·Per_s 或 2s·Per_s 的 s 扫描与外推"""

    kind = ExperimentKind.SWEEP_S

    def _execute(self) -> ExperimentResult:
        from perimeter import scaled_limits

        spec = self._shape()
        window = self._window(spec)
        mode = self.config.mode or "to_half"
        s_list = self.config.s_list or DEFAULT_S_LISTS[mode]
        report = scaled_limits(spec, window, s_list, mode, self.config.r, self.config.rt)
        report.print_table("SweepS")
        record = {k: report.metadata.get(k) for k in ("extrapolated_limit", "target", "extrapolated_rel_err")}
        result = ExperimentResult(self.kind, report, record)
        self._write_report(result)
        self._write_record(result, self.config.record)
        return result


class ELExperiment(_GridExperiment):
    """边界点上的 Euler–Lagrange 积分"""

    kind = ExperimentKind.EL

    def _execute(self) -> ExperimentResult:
        from euler_lagrange import el_integral

        spec = self._shape()
        x0 = self.config.x0 if self.config.x0 is not None else [0.0] * spec.dimension
        value = el_integral(spec, x0, self._s(), rt=self.config.rt)

        columns = tuple(f"x{k}" for k in range(len(value.point))) + (
            "value", "error", "near_annulus", "far_tail")
        report = SweepReport(columns)
        report.add_row(*value.point, value.value, value.error, value.near_annulus, value.far_tail)
        report.metadata.update({"shape": spec.to_grammar(), "rho0": value.rho0, "rt": value.rt})
        result = ExperimentResult(self.kind, report, {
            "point": list(value.point), "value": value.value, "error": value.error,
            "components": value.components(), "rho0": value.rho0, "rt": value.rt,
        })
        print(f"[EL] ✅ x₀={value.point}: value={value.value:.12g} ± {value.error:.3g}")
        print(f"[EL]    近场环={value.near_annulus:.12g}, 远场尾={value.far_tail:.12g}")
        self._write_report(result)
        self._write_record(result, self.config.record)
        return result


class MinimizeExperiment(_GridExperiment):
    """离散 s-极小元（最小割 / 穷举 / 翻转下降）"""

    kind = ExperimentKind.MINIMIZE
    default_h = 1.0 / 16

    def _execute(self) -> ExperimentResult:
        from mincut import minimize

        spec = self._shape()
        window = self._window(spec)
        result_min = minimize(spec, window, self._s(), self.config.method, self.config.rt, self.config.seed)
        record = result_min.to_record()
        record.update({"exterior": spec.to_grammar(), "window": window.to_text(), "h": window.h})
        result = ExperimentResult(self.kind, None, record)
        print(f"[Minimize] ✅ {result_min.method}: objective={result_min.objective:.12g}, "
              f"margin_vs_input={result_min.margin_vs_input:.4g}")

        out = self.config.out
        if out is not None:
            os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(mask_to_pgm(result_min.mask))
            result.artifacts.append(out)
            print(f"[Experiment] ✅ 写出 {out}")
        record_path = self.config.record
        if record_path is None and out is not None:
            record_path = os.path.splitext(out)[0] + ".json"
        self._write_record(result, record_path)
        return result


class AllenCahnExperiment(_GridExperiment):
    """𝒢_ε 的投影梯度下降，输出场矩阵与密度报告"""

    kind = ExperimentKind.ALLEN_CAHN
    default_h = 1.0 / 16
    default_shape = "halfplane:ny=-1"

    def _execute(self) -> ExperimentResult:
        from allen_cahn import PhaseField, interface_and_density, minimize_G

        spec = self._shape()
        window = self._window(spec)
        u0 = PhaseField.from_shape(spec, window)
        descent = minimize_G(u0, self._s(), self.config.eps, self.config.rt, max_iters=self.config.iters)
        record = descent.to_record()
        record.update({"exterior": spec.to_grammar(), "window": window.to_text(), "h": window.h})
        result = ExperimentResult(self.kind, None, record)
        print(f"[AllenCahn] ✅ 𝒢={descent.energy.total:.12g}, {descent.iterations} 步, "
              f"converged={descent.converged}")

        if self.config.out is not None:
            write_matrix(self.config.out, descent.field.values,
                         header=f"allen-cahn s={self._s():g} eps={self.config.eps} h={window.h:g}")
            result.artifacts.append(self.config.out)
        if self.config.report is not None:
            radii = self.config.radii or [window.half_width * f for f in (0.25, 0.5)]
            thetas = tuple(self.config.thetas or (-0.5, 0.5))
            density = interface_and_density(descent.field, thetas, radii)
            result.report = density.to_report()
            record["min_ratio"] = density.min_ratio
            self._write_report(result, self.config.report)
        self._write_record(result, self.config.record)
        return result


class GammaSweepExperiment(_GridExperiment):
    """ε 扫描：界面偏差、密度比与能量"""

    kind = ExperimentKind.GAMMA_SWEEP
    default_h = 1.0 / 16
    default_shape = "halfplane:ny=-1"

    def _execute(self) -> ExperimentResult:
        from allen_cahn import gamma_sweep

        spec = self._shape()
        window = self._window(spec)
        eps_list = self.config.eps_list or [0.2, 0.1, 0.05]
        thetas = tuple(self.config.thetas or (-0.5, 0.5))
        report = gamma_sweep(spec, window, self._s(), eps_list, self.config.rt, self.config.radii,
                             thetas, self.config.iters)
        report.print_table("GammaSweep")
        result = ExperimentResult(self.kind, report, {
            "max_deviation": float(np.nanmax(report.column("deviation"))),
            "min_ratio": float(np.nanmin(report.column("min_ratio"))),
        })
        self._write_report(result)
        self._write_record(result, self.config.record)
        return result


class ExtendExperiment(_GridExperiment):
    """±1 迹的上半空间延拓，按层输出"""

    kind = ExperimentKind.EXTEND
    default_h = 1.0 / 16

    def _execute(self) -> ExperimentResult:
        from extension import extend, normalize_kernel, vertical_levels, weighted_energy

        spec = self._shape()
        window = self._window(spec)
        s = self._s()
        height = self.config.height or 1.0
        field = extend(spec, normalize_kernel(window.n, s), window, vertical_levels(window.h, height))

        report = SweepReport(("level", "t", "min", "max", "mean"))
        for k, (t, slab) in enumerate(zip(field.levels, field.values)):
            report.add_row(k, t, slab.min(), slab.max(), slab.mean())
        report.metadata.update({"trace": spec.to_grammar(), "s": s, "height": height, "h": window.h})
        energy = weighted_energy(field)
        result = ExperimentResult(self.kind, report, {
            "levels": int(field.levels.size), "weighted_energy": energy,
            "min": float(field.values.min()), "max": float(field.values.max()),
        })
        print(f"[Extension] ✅ {field.levels.size} 层, ℰ={energy:.8g}")
        if self.config.out is not None:
            write_levels(self.config.out, field.levels, field.values)
            result.artifacts.append(self.config.out)
            print(f"[Experiment] ✅ 写出 {self.config.out}")
        if self.config.report is not None:
            self._write_report(result, self.config.report)
        self._write_record(result, self.config.record)
        return result


CONE_DEMO_COLUMNS = ("s", "per_K", "per_K_prime", "rel_diff", "el_K", "el_K_prime",
                     "margin", "truncation_bound")


class ConeDemoExperiment(_GridExperiment):
    """𝒦 与 𝒦′ 周长相等、EL 值不同，且离散极小元严格优于 𝒦"""

    kind = ExperimentKind.CONE_DEMO
    default_h = 1.0 / 16

    def _execute(self) -> ExperimentResult:
        from euler_lagrange import el_integral
        from kernel import build_table
        from mincut import build_problem, minimize_exact
        from perimeter import frac_perimeter

        h = self._h()
        window = Window.parse(self.config.window, h) if self.config.window else Window.square(1.0, h)
        s_list: Sequence[float] = self.config.s_list or ([self.config.s] if self.config.s else [0.1, 0.25, 0.4])
        cone, flipped = CrossCone(), CrossConePlusSquare(h)
        rt = self.config.rt or 1.0

        report = SweepReport(CONE_DEMO_COLUMNS)
        for s in s_list:
            table = build_table(window, s, rt)
            per_k = frac_perimeter(rasterize(cone, window), s, table=table).total
            per_kp = frac_perimeter(rasterize(flipped, window), s, table=table).total
            rel = abs(per_k - per_kp) / max(abs(per_k), abs(per_kp))
            el_k = el_integral(cone, (0.0, 0.0), s).value
            el_kp = el_integral(flipped, (0.0, 0.0), s).value
            problem = build_problem(cone, window, s, table=table)
            best = minimize_exact(problem)
            cone_mask = rasterize(cone, window).mask
            margin = problem.objective(cone_mask) - best.objective
            bound = problem.truncation_bound(cone_mask, best.mask)
            report.add_row(s, per_k, per_kp, rel, el_k, el_kp, margin, bound)
            print(f"[ConeDemo] ✅ s={s:g}: Per_s 相对差 {rel:.2e}, EL(𝒦)={el_k:.3e}, "
                  f"EL(𝒦′)={el_kp:.6g}, 极小元改进 {margin:.4g}")
        report.metadata.update({"h": h, "window": window.to_text(), "rt": rt, "side": h})
        result = ExperimentResult(self.kind, report, {
            "max_rel_diff": float(report.column("rel_diff").max()),
            "min_el_K_prime": float(report.column("el_K_prime").min()),
            "min_margin": float(report.column("margin").min()),
        })
        self._write_report(result)
        self._write_record(result, self.config.record)
        return result


class ReproExperiment(ExperimentBase):
    """验收准则全集（或按 id 过滤）"""

    kind = ExperimentKind.REPRO

    def _execute(self) -> ExperimentResult:
        from acceptance import repro_all

        summary = repro_all(self.config.ids)
        report = SweepReport(("criterion", "passed", "value", "threshold", "runtime_s"))
        for item in summary["criteria"]:
            report.add_row(item["id"], item["passed"], item["value"], item["threshold"], item["runtime_s"])
        result = ExperimentResult(self.kind, report, summary)
        self._write_report(result)
        if self.config.record is not None:
            write_json(self.config.record, summary)
            result.artifacts.append(self.config.record)
        return result


EXPERIMENTS = {
    cls.kind: cls for cls in (
        PerimeterExperiment,
        SweepSExperiment,
        ELExperiment,
        MinimizeExperiment,
        AllenCahnExperiment,
        GammaSweepExperiment,
        ExtendExperiment,
        ConeDemoExperiment,
        ReproExperiment,
    )
}
