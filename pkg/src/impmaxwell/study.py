"""Convergence studies: configuration, per-cell measurements, CSV and SVG output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import (
    best_approximation,
    discrete_inf_sup,
    error_norms,
    galerkin_consistency,
    gradient_residual,
    n_lambda,
    quasi_opt_ratio,
    solve_maxwell,
)
from .assembly import Variant, WaveParams
from .cases import CASE_NAMES, manufactured_case
from .errors import InvalidArgumentError
from .fespace import MAX_DEGREE, discrete_gradient
from .linalg import DENSE_CAP
from .mesh import build_cube_mesh, build_cube_with_hole_mesh, mesh_stats

log = logging.getLogger(__name__)

CSV_HEADER = (
    "case,k,p,level,h_max,ndof,n_lambda,rel_err_paper_norm,rel_err_imp,"
    "best_err_imp,quasi_ratio,gamma_kh,delta_k,runtime_s,solver_iters"
)
COLUMNS = tuple(CSV_HEADER.split(","))
T3_FACTOR = 1e-9


@dataclass
class StudyConfig:
    case: str
    k: list
    p: list
    levels: int | list = 1
    base_n: int = 2
    solver: str = "lu"
    tol: float = 1e-10
    inf_sup: bool = False
    delta_k: bool = False
    best_approx: bool = True
    out_dir: str = "."
    csv_name: str = "study.csv"
    svg_name: str = "study.svg"
    threads: int = 1
    seed: int = 0
    timing: bool = True

    def __post_init__(self):
        if self.case not in CASE_NAMES:
            raise InvalidArgumentError(f"unknown case {self.case!r}")
        if not self.k or not self.p:
            raise InvalidArgumentError("k and p lists must be non-empty")
        if any(abs(k) < 1 for k in self.k):
            raise InvalidArgumentError("every |k| must be at least 1")
        if any(not 0 <= p <= MAX_DEGREE for p in self.p):
            raise InvalidArgumentError(f"p must lie in 0..{MAX_DEGREE}")
        if not 0 < self.tol < 1:
            raise InvalidArgumentError("solver tolerance must lie in (0, 1)")
        if self.solver not in ("lu", "gmres"):
            raise InvalidArgumentError("solver must be 'lu' or 'gmres'")
        if not self.mesh_sizes():
            raise InvalidArgumentError("at least one refinement level is required")

    def mesh_sizes(self) -> list[int]:
        if isinstance(self.levels, int):
            if self.levels < 1 or self.base_n < 1:
                return []
            return [self.base_n * 2**i for i in range(self.levels)]
        sizes = [int(n) for n in self.levels]
        return sizes if all(n >= 1 for n in sizes) else []

    @classmethod
    def from_json(cls, text: str, **overrides) -> "StudyConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class StudyRow:
    case: str
    k: float
    p: int
    level: int
    h_max: float
    ndof: int
    n_lambda: float
    rel_err_paper_norm: float
    rel_err_imp: float
    best_err_imp: float | None = None
    quasi_ratio: float | None = None
    gamma_kh: float | None = None
    delta_k: float | None = None
    runtime_s: float | None = None
    solver_iters: int | None = None


@dataclass
class StudyReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    t3_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and not self.t3_violations

    def series(self):
        """Rows grouped by ``(k, p)`` in first-seen order."""
        out = {}
        for r in self.rows:
            out.setdefault((r.k, r.p), []).append(r)
        return out


def build_mesh(case: str, n: int):
    if case == "cube-hole":
        return build_cube_with_hole_mesh(n)
    return build_cube_mesh(n)


def run_cell(case_name: str, k: float, p: int, n: int, level: int, config: StudyConfig):
    """Solve and measure one (k, p, level) cell."""
    t0 = time.perf_counter()
    mesh = build_mesh(case_name, n)
    case = manufactured_case(case_name, k)
    params = WaveParams(k, p)
    sol = solve_maxwell(mesh, params, case, solver=config.solver, tol=config.tol)
    err = error_norms(sol, case)
    G = discrete_gradient(mesh, p).matrix
    t3 = gradient_residual(sol, G)
    t3_ok = t3 <= T3_FACTOR * sol.residual_scale()
    row = StudyRow(
        case=case_name, k=k, p=p, level=level,
        h_max=mesh_stats(mesh).h_max,
        ndof=sol.dofmap.ndof,
        n_lambda=n_lambda(sol.dofmap.ndof, k, mesh.volume),
        rel_err_paper_norm=err.paper_fig_norm,
        rel_err_imp=err.rel_imp,
        solver_iters=sol.report.iterations,
    )
    if config.best_approx:
        _, best = best_approximation(mesh, params, case, blocks=sol.blocks)
        row.best_err_imp = best
        row.quasi_ratio = quasi_opt_ratio(err.imp, best)
    if config.inf_sup and len(sol.system.free) <= DENSE_CAP:
        row.gamma_kh = discrete_inf_sup(mesh, params, Variant.STANDARD, blocks=sol.blocks)
    if config.delta_k:
        row.delta_k = galerkin_consistency(sol, case, err.imp)
    if config.timing:
        row.runtime_s = time.perf_counter() - t0
    return row, t3_ok, sol


def run_study(config: StudyConfig, keep_solutions: bool = False):
    report = StudyReport()
    solutions = []
    for k in config.k:
        for p in config.p:
            for level, n in enumerate(config.mesh_sizes()):
                try:
                    row, t3_ok, sol = run_cell(config.case, k, p, n, level, config)
                except Exception as exc:  # keep going; the failure is reported
                    log.error("cell k=%s p=%s n=%s failed: %s", k, p, n, exc)
                    report.failures.append((k, p, level, repr(exc)))
                    continue
                report.rows.append(row)
                if not t3_ok:
                    report.t3_violations.append((k, p, level))
                if keep_solutions:
                    solutions.append(sol)
                log.info(
                    "k=%s p=%s n=%s ndof=%d err=%.4e", k, p, n, row.ndof, row.rel_err_paper_norm
                )
    return (report, solutions) if keep_solutions else report


# --------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def report_to_csv(report: StudyReport, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in report.rows:
        vals = [getattr(r, c) for c in COLUMNS]
        if not timing:
            vals[COLUMNS.index("runtime_s")] = None
        w.writerow([_fmt(v) for v in vals])
    return buf.getvalue()


def emit_csv(report: StudyReport, path, timing: bool = True) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_to_csv(report, timing))
    return path


_INT_COLS = {"p", "level", "ndof", "solver_iters"}
_STR_COLS = {"case"}


def read_csv(path) -> StudyReport:
    report = StudyReport()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise InvalidArgumentError("unexpected CSV header")
        for rec in reader:
            kw = {}
            for name, text in zip(COLUMNS, rec):
                if name in _STR_COLS:
                    kw[name] = text
                elif text == "":
                    kw[name] = None
                elif name in _INT_COLS:
                    kw[name] = int(text)
                else:
                    kw[name] = float(text)
            report.rows.append(StudyRow(**kw))
    return report


# --------------------------------------------------------------------------
# SVG


_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 160, 30, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _log_range(vals):
    lo, hi = math.log10(min(vals)), math.log10(max(vals))
    lo, hi = math.floor(lo), math.ceil(hi)
    if hi == lo:
        hi = lo + 1
    return lo, hi


def report_to_svg(report: StudyReport) -> str:
    """Log-log plot of relative error versus dofs per wavelength, one polyline per (k, p)."""
    if not report.rows:
        raise InvalidArgumentError("cannot plot an empty report")
    series = report.series()
    xs = [r.n_lambda for r in report.rows if r.n_lambda and r.n_lambda > 0]
    ys = [r.rel_err_paper_norm for r in report.rows if r.rel_err_paper_norm and r.rel_err_paper_norm > 0]
    if not ys:
        log.warning("all errors are zero; emitting axes only")
    xlo, xhi = _log_range(xs or [1.0])
    ylo, yhi = _log_range(ys or [1.0])
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(x):
        return _ML + (math.log10(x) - xlo) / (xhi - xlo) * pw

    def py(y):
        return _MT + (1.0 - (math.log10(y) - ylo) / (yhi - ylo)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for e in range(xlo, xhi + 1):
        x = px(10.0**e)
        out.append(f'<line x1="{x:.2f}" y1="{_MT + ph}" x2="{x:.2f}" y2="{_MT + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_MT + ph + 20}" font-size="12" text-anchor="middle">1e{e}</text>')
    for e in range(ylo, yhi + 1):
        y = py(10.0**e)
        out.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-size="12" text-anchor="end">1e{e}</text>')
    out.append(
        f'<text x="{_ML + pw / 2:.0f}" y="{_H - 12}" font-size="13" text-anchor="middle">'
        "dofs per wavelength N_lambda</text>"
    )
    out.append(
        f'<text x="16" y="{_MT + ph / 2:.0f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MT + ph / 2:.0f})">relative error |curl e| + k|e|</text>'
    )
    for i, ((k, p), rows) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = [
            (px(r.n_lambda), py(r.rel_err_paper_norm))
            for r in rows
            if r.n_lambda > 0 and r.rel_err_paper_norm > 0
        ]
        if pts:
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = _MT + 20 + 18 * i
        lx = _ML + pw + 15
        out.append(
            f'<g class="legend"><line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
            f'stroke-width="1.5"/><text x="{lx + 26}" y="{ly + 4}" font-size="12">'
            f"k={k:g}, p={p}</text></g>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(report: StudyReport, path) -> Path:
    path = Path(path)
    path.write_text(report_to_svg(report), encoding="utf-8")
    return path


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
