import math

import numpy as np
import pytest

from impmaxwell.analysis import (
    QUASI_EXACT,
    best_approximation,
    consistency_indicator,
    consistency_quotient,
    discrete_inf_sup,
    eoc,
    error_norms,
    error_norms_from_coeffs,
    galerkin_consistency,
    gradient_residual,
    helmholtz_projection,
    n_lambda,
    quasi_opt_ratio,
    solve_maxwell,
)
from impmaxwell.assembly import Variant, WaveParams, assemble_blocks, system_matrix
from impmaxwell.cases import manufactured_case, zero_case
from impmaxwell.errors import InvalidArgumentError, SizeCapError
from impmaxwell.fespace import build_dof_map, discrete_gradient, hcurl_entity_counts
from impmaxwell.mesh import build_cube_mesh, build_cube_with_hole_mesh


def const_interpolant(mesh, dofmap):
    # (1,0,0) lies in the Whitney space; its edge moments are the x-extents of the edges
    c = np.zeros(dofmap.ndof, dtype=complex)
    ne = hcurl_entity_counts(dofmap.degree)[0]
    V = mesh.vertices
    c[np.arange(dofmap.n_edges) * ne] = V[dofmap.edges[:, 1], 0] - V[dofmap.edges[:, 0], 0]
    return c


@pytest.mark.parametrize("p", [0, 1, 2])
def test_const_interpolant_errors_vanish(cube2, p):
    dm = build_dof_map(cube2, p)
    case = manufactured_case("const-field", 3.0)
    rep = error_norms_from_coeffs(cube2, dm, case, 3.0, const_interpolant(cube2, dm))
    assert max(rep.abs_l2, rep.curl, rep.imp, rep.paper_fig_norm) <= 1e-10


@pytest.mark.parametrize("n,p,k", [(1, 0, 1.0), (2, 1, 5.0), (2, 2, 12.0)])
def test_const_field_reproduced(n, p, k):
    mesh = build_cube_mesh(n)
    case = manufactured_case("const-field", k)
    sol = solve_maxwell(mesh, WaveParams(k, p), case)
    assert error_norms(sol, case).rel_imp <= 1e-9


def test_const_field_on_hole_mesh_not_pec_compatible(hole1):
    # const-field has no geometry restriction but a nonzero trace on the PEC boundary
    case = manufactured_case("const-field", 2.0)
    sol = solve_maxwell(hole1, WaveParams(2.0, 0), case)
    assert error_norms(sol, case).rel_imp > 1e-3


def test_zero_data_zero_solution(cube2):
    sol = solve_maxwell(cube2, WaveParams(4.0, 1), zero_case(4.0))
    assert np.all(sol.coeffs == 0)


def test_galerkin_residual_and_orthogonality(cube2, rng):
    case = manufactured_case("cube-smooth", 4.0)
    sol = solve_maxwell(cube2, WaveParams(4.0, 1), case)
    A, b, x = sol.system.matrix, sol.system.load, sol.reduced
    r = b - A @ x
    scale = sol.residual_scale()
    assert np.linalg.norm(r) <= 1e-9 * scale
    for _ in range(100):
        v = rng.standard_normal(len(r)) + 1j * rng.standard_normal(len(r))
        assert abs(np.vdot(v, r)) <= 1e-9 * scale * np.linalg.norm(v)


def test_error_decreases_under_refinement():
    case = manufactured_case("cube-smooth", 10.0)
    errs = [error_norms(solve_maxwell(build_cube_mesh(n), WaveParams(10.0, 0), case), case).paper_fig_norm
            for n in (4, 8)]
    assert errs[1] < errs[0]


def test_norm_of_constant_field():
    mesh = build_cube_mesh(1)
    dm = build_dof_map(mesh, 0)
    rep = error_norms_from_coeffs(mesh, dm, manufactured_case("const-field", 1.0), 1.0, np.zeros(dm.ndof))
    assert abs(rep.imp - math.sqrt(24)) < 1e-12
    assert abs(rep.paper_fig_norm - 1) < 1e-14 and abs(rep.rel_imp - 1) < 1e-14


def test_exact_as_error_normalizes_to_one(cube2):
    case = manufactured_case("cube-smooth", 6.0)
    dm = build_dof_map(cube2, 1)
    rep = error_norms_from_coeffs(cube2, dm, case, 6.0, np.zeros(dm.ndof))
    assert abs(rep.paper_fig_norm - 1) < 1e-14
    assert abs(rep.rel_imp - 1) < 1e-14


def test_norm_ordering_and_quasi_optimality():
    mesh = build_cube_mesh(2)
    for name, k, p in (("cube-smooth", 5.0, 0), ("cube-smooth", 5.0, 1), ("cube-smooth", 9.0, 2)):
        case = manufactured_case(name, k)
        params = WaveParams(k, p)
        sol = solve_maxwell(mesh, params, case)
        rep = error_norms(sol, case)
        assert rep.abs_l2 <= rep.hcurlk <= rep.imp
        _, best = best_approximation(mesh, params, case, blocks=sol.blocks)
        assert best <= rep.imp + 1e-10
        assert quasi_opt_ratio(rep.imp, best) >= 1 - 1e-8


def test_best_approximation_hole_mesh():
    mesh = build_cube_with_hole_mesh(1)
    case = manufactured_case("cube-hole", 3.0)
    params = WaveParams(3.0, 1)
    sol = solve_maxwell(mesh, params, case)
    _, best = best_approximation(mesh, params, case, blocks=sol.blocks)
    assert best <= error_norms(sol, case).imp + 1e-10


def test_best_approximation_representable(cube1):
    _, best = best_approximation(cube1, WaveParams(2.0, 0), manufactured_case("const-field", 2.0))
    assert best <= 1e-10
    assert quasi_opt_ratio(1e-12, best) == QUASI_EXACT


def test_best_approximation_monotone():
    case = manufactured_case("cube-smooth", 6.0)
    best = [best_approximation(build_cube_mesh(n), WaveParams(6.0, 1), case)[1] for n in (1, 2, 4)]
    assert best[0] >= best[1] >= best[2]


# ---------------------------------------------------------------- stability


@pytest.mark.parametrize("p", [0, 1])
@pytest.mark.parametrize("k", [1.0, 4.0])
def test_inf_sup_bounds(cube1, p, k):
    params = WaveParams(k, p)
    g_std = discrete_inf_sup(cube1, params, Variant.STANDARD)
    g_good = discrete_inf_sup(cube1, params, Variant.GOOD_SIGN)
    assert 0 < g_std <= 1 + 1e-8
    assert 2**-0.5 - 1e-8 <= g_good <= 1 + 1e-8


def test_inf_sup_trend_standard(cube1):
    g1 = discrete_inf_sup(cube1, WaveParams(1.0, 0), Variant.STANDARD)
    g8 = discrete_inf_sup(cube1, WaveParams(8.0, 0), Variant.STANDARD)
    assert g8 < g1


def test_inf_sup_size_cap():
    with pytest.raises(SizeCapError):
        discrete_inf_sup(build_cube_mesh(6), WaveParams(1.0, 1))


def test_consistency_examples(blocks_cube2_p1, rng):
    n = blocks_cube2_p1.M.shape[0]
    assert consistency_indicator(blocks_cube2_p1, 3.0, np.zeros(n)) == 0.0
    N = system_matrix(blocks_cube2_p1, 3.0, Variant.IMP_GRAM)
    e = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert abs(consistency_quotient(N, N, e) - 2) < 1e-10
    assert consistency_indicator(blocks_cube2_p1, 3.0, e) > 0


def test_galerkin_consistency_finite(cube2):
    case = manufactured_case("cube-smooth", 4.0)
    sol = solve_maxwell(cube2, WaveParams(4.0, 1), case)
    rep = error_norms(sol, case)
    d = galerkin_consistency(sol, case, rep.imp)
    assert 0 < d < 10
    assert galerkin_consistency(sol, case, 0.0) == 0.0


@pytest.mark.parametrize("sign", [1, -1])
def test_helmholtz_projection_of_gradient(cube2, blocks_cube2_p1, rng, sign):
    G = discrete_gradient(cube2, 1).matrix
    psi = rng.standard_normal(G.shape[1]) + 1j * rng.standard_normal(G.shape[1])
    phi = helmholtz_projection(blocks_cube2_p1, 3.0, G @ psi, sign=sign, G=G)
    d = G @ (phi - psi)
    N = system_matrix(blocks_cube2_p1, 3.0, Variant.IMP_GRAM)
    assert math.sqrt(abs(np.vdot(d, N @ d))) <= 1e-10 * math.sqrt(abs(np.vdot(G @ psi, N @ (G @ psi))))


def test_helmholtz_projection_orthogonality(cube2, blocks_cube2_p1, rng):
    G = discrete_gradient(cube2, 1).matrix
    Q = system_matrix(blocks_cube2_p1, 3.0, Variant.PAIRING)
    v = rng.standard_normal(G.shape[0]) + 1j * rng.standard_normal(G.shape[0])
    phi = helmholtz_projection(blocks_cube2_p1, 3.0, v, G=G)
    assert np.linalg.norm(G.T @ (Q @ (v - G @ phi))) <= 1e-10 * np.linalg.norm(G.T @ (Q @ v))
    nv = blocks_cube2_p1.dofmap.n_vertices
    assert abs(phi[:nv].mean()) < 1e-12


def test_helmholtz_projection_orthogonal_input(cube2, blocks_cube2_p1, rng):
    # v orthogonal to all gradients gives the constant mode only, i.e. zero after centering
    G = discrete_gradient(cube2, 1).matrix
    Q = system_matrix(blocks_cube2_p1, 3.0, Variant.PAIRING)
    v = rng.standard_normal(G.shape[0]) + 0j
    v -= G @ helmholtz_projection(blocks_cube2_p1, 3.0, v, G=G)
    phi = helmholtz_projection(blocks_cube2_p1, 3.0, v, G=G)
    assert np.linalg.norm(G @ phi) <= 1e-10 * np.linalg.norm(v)


def test_helmholtz_projection_arguments(blocks_cube2_p1):
    with pytest.raises(InvalidArgumentError):
        helmholtz_projection(blocks_cube2_p1, 3.0, np.zeros(3), sign=2, G=np.eye(3))
    with pytest.raises(InvalidArgumentError):
        helmholtz_projection(blocks_cube2_p1, 3.0, np.zeros(3))


@pytest.mark.parametrize("mesh_fn,name", [(build_cube_mesh, "cube-smooth"), (build_cube_with_hole_mesh, "cube-hole")])
def test_gradient_orthogonality(mesh_fn, name):
    mesh = mesh_fn(2 if name == "cube-smooth" else 1)
    case = manufactured_case(name, 5.0)
    for p in (0, 1):
        sol = solve_maxwell(mesh, WaveParams(5.0, p), case)
        G = discrete_gradient(mesh, p).matrix
        assert gradient_residual(sol, G) <= 1e-9 * sol.residual_scale()


# ---------------------------------------------------------------- bookkeeping


def test_n_lambda_examples():
    k, vol = 10.0, 8.0
    assert abs(n_lambda(8000, k, vol) - 2 * math.pi) < 1e-12
    assert abs(n_lambda((k * vol ** (1 / 3) / (2 * math.pi)) ** 3, k, vol) - 1) < 1e-12
    assert abs(n_lambda(8 * 123, 3.0, 2.0) / n_lambda(123, 3.0, 2.0) - 2) < 1e-12
    assert n_lambda(1000, -10.0, 8.0) == n_lambda(1000, 10.0, 8.0)
    with pytest.raises(InvalidArgumentError):
        n_lambda(0, 1.0, 1.0)


def test_eoc_examples():
    assert eoc([1, 0.5], [0.1, 0.025]).rates == [pytest.approx(2.0, abs=1e-14)]
    assert eoc([1, 0.5, 0.25], [0.3, 0.3, 0.3]).rates == [0.0, 0.0]
    h = [1, 0.5, 0.25, 0.125]
    for p in (1, 2, 3):
        assert all(abs(r - p) <= 1e-12 for r in eoc(h, [4.2 * x**p for x in h]).rates)
    assert math.isnan(eoc([1, 0.5], [0.1, 0.0]).rates[0])
    with pytest.raises(InvalidArgumentError):
        eoc([1], [0.1])
