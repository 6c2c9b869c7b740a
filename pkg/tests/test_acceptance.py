"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N PASS/FAIL`` line (also repeated in the
terminal summary) and then asserts the criterion at its stated tolerance.
Index ``p`` below is the Nedelec index; the criteria count full polynomial
order, which is the index plus one.
"""

import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from impmaxwell.analysis import discrete_inf_sup, eoc
from impmaxwell.assembly import Variant, WaveParams, assemble_blocks, system_matrix
from impmaxwell.cases import manufactured_case
from impmaxwell.fespace import build_dof_map
from impmaxwell.mesh import build_cube_mesh
from impmaxwell.study import StudyConfig, run_study
from impmaxwell.verify import exact_sequence, piola_commutation, quadrature_sweep

# every study below adds its T3 bookkeeping here for criterion 9
SOLVED_CELLS = []


def _run(cfg):
    t0 = time.perf_counter()
    report = run_study(cfg)
    elapsed = time.perf_counter() - t0
    SOLVED_CELLS.append((cfg.case, len(report.rows), list(report.t3_violations), list(report.failures)))
    return report, elapsed


@pytest.fixture(scope="module")
def smooth_study():
    cfg = StudyConfig("cube-smooth", [10.0], [0, 1], levels=[4, 8, 16], best_approx=True, timing=True)
    return _run(cfg)


def _series(report, p):
    return sorted((r for r in report.rows if r.p == p), key=lambda r: r.level)


def _last_eoc(rows):
    table = eoc([r.h_max for r in rows], [r.rel_err_paper_norm for r in rows])
    return table.rates[-1]


def test_criterion_01_coercivity_identity():
    rng = np.random.default_rng(1)
    sigma_bar = np.conj(np.exp(0.25j * np.pi))
    t0 = time.perf_counter()
    worst = 0.0
    for n in (1, 2):
        mesh = build_cube_mesh(n)
        for p in (0, 1):
            blocks = assemble_blocks(mesh, build_dof_map(mesh, p))
            for k in (1.0, 4.0, 16.0):
                Ap = system_matrix(blocks, k, Variant.GOOD_SIGN)
                N = system_matrix(blocks, k, Variant.IMP_GRAM)
                for _ in range(100):
                    v = rng.standard_normal(N.shape[0]) + 1j * rng.standard_normal(N.shape[0])
                    nn = np.vdot(v, N @ v).real
                    lhs = (sigma_bar * np.vdot(v, Ap @ v)).real
                    worst = max(worst, abs(lhs - nn / math.sqrt(2)) / nn)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    record_criterion(1, "coercivity identity with conj(sigma)", ok,
                     f"worst relative defect {worst:.3e} (tol 1e-12), {elapsed:.1f} s")
    assert ok


def test_criterion_02_exact_sequence():
    t0 = time.perf_counter()
    res = exact_sequence(n=2, degrees=range(4), rtol=1e-10)
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 30
    record_criterion(2, "exact sequence S G = 0", ok,
                     f"max |SG| / (|S| |G|) = {res.worst:.3e} (tol 1e-10), {elapsed:.1f} s")
    assert ok


def test_criterion_03_inf_sup_bounds():
    t0 = time.perf_counter()
    mesh = build_cube_mesh(1)
    good, std = math.inf, 0.0
    for p in (0, 1):
        blocks = assemble_blocks(mesh, build_dof_map(mesh, p))
        for k in (1.0, 4.0, 8.0):
            params = WaveParams(k, p)
            good = min(good, discrete_inf_sup(mesh, params, Variant.GOOD_SIGN, blocks=blocks))
            std = max(std, discrete_inf_sup(mesh, params, Variant.STANDARD, blocks=blocks))
    elapsed = time.perf_counter() - t0
    ok = good >= 2**-0.5 - 1e-6 and std <= 1 + 1e-6 and elapsed < 60
    record_criterion(3, "inf-sup bounds", ok,
                     f"min gamma(good sign) {good:.6f} >= {2**-0.5:.6f}, "
                     f"max gamma(standard) {std:.6f} <= 1, {elapsed:.1f} s")
    assert ok


def test_criterion_04_convergence_cube(smooth_study):
    report, elapsed = smooth_study
    r0, r1 = _last_eoc(_series(report, 0)), _last_eoc(_series(report, 1))
    ok0 = abs(r0 - 1.0) <= 0.25
    ok1 = abs(r1 - 2.0) <= 0.35
    ok = ok0 and ok1 and elapsed < 900 and not report.failures
    record_criterion(4, "convergence rates, cube, k=10, n=4,8,16", ok,
                     f"order 1 EOC {r0:.3f} (1.0+-0.25 {'ok' if ok0 else 'missed'}), "
                     f"order 2 EOC {r1:.3f} (2.0+-0.35 {'ok' if ok1 else 'missed'}), {elapsed:.0f} s")
    assert ok


def test_criterion_05_convergence_hole():
    report, elapsed = _run(StudyConfig("cube-hole", [10.0], [0], levels=[2, 4, 8], best_approx=False))
    rows = _series(report, 0)
    rate = _last_eoc(rows) if len(rows) == 3 else math.nan
    ok = abs(rate - 1.0) <= 0.3 and elapsed < 900
    record_criterion(5, "convergence rate, cube with hole, k=10, order 1", ok,
                     f"EOC {rate:.3f} on n=2,4,8 (1.0+-0.3), {elapsed:.0f} s")
    assert ok


def test_criterion_06_pollution_trend():
    # levels chosen so that both have N_lambda in [8, 12] at k=20
    low, _ = _run(StudyConfig("cube-smooth", [20.0], [0], levels=[27], best_approx=False))
    high, _ = _run(StudyConfig("cube-smooth", [20.0], [1], levels=[15], best_approx=False))
    r0, r1 = low.rows[0], high.rows[0]
    matched = 8 <= r0.n_lambda <= 12 and 8 <= r1.n_lambda <= 12
    ok = matched and r1.rel_err_paper_norm < r0.rel_err_paper_norm
    record_criterion(6, "higher order more accurate at matched N_lambda, k=20", ok,
                     f"order 2 err {r1.rel_err_paper_norm:.4f} (N_lambda {r1.n_lambda:.2f}) vs "
                     f"order 1 err {r0.rel_err_paper_norm:.4f} (N_lambda {r0.n_lambda:.2f})")
    assert ok


def test_criterion_07_quasi_optimality(smooth_study):
    report, _ = smooth_study
    finest = _series(report, 1)[-1]
    ok = finest.quasi_ratio is not None and finest.quasi_ratio <= 3
    record_criterion(7, "quasi-optimality ratio, order 2, n=16", ok,
                     f"ratio {finest.quasi_ratio:.4f} (<= 3)")
    assert ok


def _fd_curl_curl(F, x, h):
    # fourth-order central differences, nested first derivatives
    def d(fun, i):
        e = np.zeros(3)
        e[i] = h
        return lambda y: (-fun(y + 2 * e) + 8 * fun(y + e) - 8 * fun(y - e) + fun(y - 2 * e)) / (12 * h)

    def curl(G):
        J = [[d(lambda y, a=a: G(y)[..., a], i) for i in range(3)] for a in range(3)]
        return lambda y: np.stack(
            [J[2][1](y) - J[1][2](y), J[0][2](y) - J[2][0](y), J[1][0](y) - J[0][1](y)], axis=-1
        )

    return curl(curl(F))(x)


def test_criterion_08_manufactured_source():
    k = 10.0
    case = manufactured_case("cube-smooth", k)
    x = np.random.default_rng(8).uniform(-0.99, 0.99, (100, 3))
    residual = _fd_curl_curl(lambda y: case.exact_E(y).real, x, 1e-3) - k * k * case.exact_E(x).real
    worst = np.abs(residual).max()
    ok = worst <= 1e-6 * k**3 and np.all(case.source_f(x) == 0)
    record_criterion(8, "manufactured source vanishes (FD oracle)", ok,
                     f"max |curl curl E - k^2 E| = {worst:.3e} (tol {1e-6 * k**3:.1e})")
    assert ok


def test_criterion_09_gradient_orthogonality():
    if not SOLVED_CELLS:
        _run(StudyConfig("cube-smooth", [10.0], [0, 1], levels=[2, 4], best_approx=False))
    cells = sum(n for _, n, _, _ in SOLVED_CELLS)
    bad = [(case, v) for case, _, viol, _ in SOLVED_CELLS for v in viol]
    ok = cells > 0 and not bad
    record_criterion(9, "gradient orthogonality T3 on every solved cell", ok,
                     f"{cells} cells checked, {len(bad)} violations (tol 1e-9 scale)")
    assert ok


def test_criterion_10_quadrature_and_piola():
    t0 = time.perf_counter()
    quad = quadrature_sweep()
    piola = piola_commutation(seed=10)
    elapsed = time.perf_counter() - t0
    ok = quad.passed and piola.passed and elapsed < 10
    record_criterion(10, "quadrature exactness and Piola commutation", ok,
                     f"quadrature worst {quad.worst:.2e} (tol {quad.tol:.0e}), "
                     f"Piola worst {piola.worst:.2e} (tol {piola.tol:.0e}), {elapsed:.1f} s")
    assert ok
