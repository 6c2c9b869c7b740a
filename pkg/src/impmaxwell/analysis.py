"""Galerkin solves, error norms and the discrete stability diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import linalg
from .assembly import (
    ConstrainedSystem,
    SystemMatrices,
    Variant,
    WaveParams,
    _check_geometry,
    apply_pec,
    assemble_blocks,
    assemble_load,
    element_batches,
    face_batches,
    load_degree,
    system_matrix,
)
from .cases import ManufacturedCase
from .errors import InvalidArgumentError
from .fespace import DofMap, build_dof_map, discrete_gradient, dof_coordinates
from .linalg import SolveReport
from .mesh import Mesh

QUASI_EXACT = math.inf  # ratio reported when the best approximation error vanishes


@dataclass
class Solution:
    mesh: Mesh
    params: WaveParams
    dofmap: DofMap
    blocks: SystemMatrices
    system: ConstrainedSystem
    coeffs: np.ndarray  # full-length coefficient vector
    report: SolveReport

    @property
    def reduced(self) -> np.ndarray:
        return self.system.restrict(self.coeffs)

    def residual_scale(self) -> float:
        A, b = self.system.matrix, self.system.load
        return float(abs(A).max() * np.abs(self.reduced).sum() + np.linalg.norm(b))


@dataclass
class ErrorReport:
    abs_l2: float  # k |e|
    rel_l2: float
    curl: float
    hcurlk: float
    imp: float
    rel_imp: float
    paper_fig_norm: float  # (|curl e| + k|e|) / (|curl E| + k|E|)
    best_imp: float | None = None
    quasi_ratio: float | None = None
    gamma_kh: float | None = None
    delta_k: float | None = None
    n_lambda: float | None = None


@dataclass
class EocTable:
    h: list
    ndof: list
    errors: list
    rates: list = field(default_factory=list)


DIRECT_CAP = 80_000  # above this, LU factors are kept in single precision


def solve_linear(mesh: Mesh, dofmap: DofMap, system: ConstrainedSystem, solver: str = "lu",
                 tol: float = 1e-10):
    """Solve a constrained system.

    ``"lu"``: SuperLU in a nested-dissection ordering built from dof
    coordinates; factors are single precision above ``DIRECT_CAP`` dofs,
    with refinement in double precision. ``"gmres"``: GMRES(200) with ILU(0).
    """
    A, b = system.matrix, system.load
    if solver == "lu":
        coords = dof_coordinates(mesh, dofmap)[system.free]
        return linalg.lu_solve(A, b, coords=coords, single=A.shape[0] > DIRECT_CAP)
    if solver == "gmres":
        x, report = linalg.gmres_solve(A, b, tol=tol, preconditioner="ILU0")
        if not report.converged:
            raise linalg.SingularMatrixError(
                f"GMRES did not converge: residual {report.relative_residual:.3e}"
            )
        return x, report
    raise InvalidArgumentError(f"unknown solver {solver!r}")


def solve_maxwell(mesh: Mesh, params: WaveParams, case: ManufacturedCase,
                  solver: str = "lu", tol: float = 1e-10, blocks: SystemMatrices | None = None,
                  residual_factor: float = 1e-9) -> Solution:
    """Assemble the standard form, eliminate PEC dofs, solve, check the residual."""
    _check_geometry(mesh, case)
    dofmap = blocks.dofmap if blocks is not None else build_dof_map(mesh, params.p)
    if blocks is None:
        blocks = assemble_blocks(mesh, dofmap)
    A = system_matrix(blocks, params.k, Variant.STANDARD)
    b = assemble_load(mesh, dofmap, case, params.k)
    system = apply_pec(A, b, dofmap, mesh)
    x, report = solve_linear(mesh, dofmap, system, solver, tol)
    sol = Solution(mesh, params, dofmap, blocks, system, system.expand(x), report)
    res = np.linalg.norm(system.matrix @ x - system.load)
    limit = residual_factor * sol.residual_scale()
    if report.iterations == 0 and res > limit:
        raise linalg.SingularMatrixError(f"Galerkin residual {res:.3e} above {limit:.3e}")
    return sol


# --------------------------------------------------------------------------
# error integration


def error_degree(p: int) -> int:
    return 2 * p + 6


def _error_integrals(mesh, dofmap, case, k, coeffs, degree):
    """Squared norms of e = E - E_h and of E: (|e|^2, |curl e|^2, |e_T|_G^2), same for E."""
    e = np.zeros(3)
    E = np.zeros(3)
    for eb in element_batches(mesh, dofmap, degree, k):
        c = coeffs[dofmap.dofs[eb.tets]] * dofmap.signs[eb.tets]
        uh, cuh = eb.field(c)
        Ex, cEx = case.exact_E(eb.x), case.exact_curl_E(eb.x)
        dx = eb.dx()
        e[0] += np.einsum("kq,kqa->", dx, np.abs(Ex - uh) ** 2)
        e[1] += np.einsum("kq,kqa->", dx, np.abs(cEx - cuh) ** 2)
        E[0] += np.einsum("kq,kqa->", dx, np.abs(Ex) ** 2)
        E[1] += np.einsum("kq,kqa->", dx, np.abs(cEx) ** 2)
    for fb in face_batches(mesh, dofmap, degree, k=k):
        c = coeffs[dofmap.dofs[fb.tets]] * dofmap.signs[fb.tets]
        uh = np.einsum("ki,kiqa->kqa", c, fb.phi)
        Ex = case.exact_E(fb.x)
        e[2] += np.einsum("kq,kqa->", fb.weights, np.abs(fb.tangential(Ex - uh)) ** 2)
        E[2] += np.einsum("kq,kqa->", fb.weights, np.abs(fb.tangential(Ex)) ** 2)
    return e, E


def _safe_ratio(a, b):
    return a / b if b > 0 else (0.0 if a == 0 else math.inf)


def error_norms_from_coeffs(mesh: Mesh, dofmap: DofMap, case: ManufacturedCase, k: float,
                            coeffs: np.ndarray, quad_degree: int | None = None) -> ErrorReport:
    deg = error_degree(dofmap.degree) if quad_degree is None else quad_degree
    (l2, cu, bd), (El2, Ecu, Ebd) = _error_integrals(mesh, dofmap, case, k, coeffs, deg)
    ak = abs(k)
    abs_l2 = ak * math.sqrt(l2)
    curl = math.sqrt(cu)
    hcurlk = math.sqrt(cu + k * k * l2)
    imp = math.sqrt(cu + k * k * l2 + ak * bd)
    E_imp = math.sqrt(Ecu + k * k * El2 + ak * Ebd)
    E_fig = math.sqrt(Ecu) + ak * math.sqrt(El2)
    return ErrorReport(
        abs_l2=abs_l2,
        rel_l2=_safe_ratio(math.sqrt(l2), math.sqrt(El2)),
        curl=curl,
        hcurlk=hcurlk,
        imp=imp,
        rel_imp=_safe_ratio(imp, E_imp),
        paper_fig_norm=_safe_ratio(curl + abs_l2, E_fig),
    )


def error_norms(solution: Solution, case: ManufacturedCase, quad_degree: int | None = None) -> ErrorReport:
    return error_norms_from_coeffs(
        solution.mesh, solution.dofmap, case, solution.params.k, solution.coeffs, quad_degree
    )


def imp_functional(mesh: Mesh, dofmap: DofMap, case: ManufacturedCase, k: float,
                   quad_degree: int | None = None, curl_weight: float = 1.0,
                   mass_weight: complex | None = None, bnd_weight: complex | None = None):
    """``r_i = c (curl E, curl phi_i) + m (E, phi_i) + g (E_T, phi_i,T)_G``.

    Defaults give the imp-norm inner product (m = k^2, g = |k|).
    """
    deg = load_degree(dofmap.degree) if quad_degree is None else quad_degree
    m = k * k if mass_weight is None else mass_weight
    g = abs(k) if bnd_weight is None else bnd_weight
    r = np.zeros(dofmap.ndof, dtype=complex)
    for eb in element_batches(mesh, dofmap, deg, k):
        cE = case.exact_curl_E(eb.x) * curl_weight if curl_weight else None
        local = eb.project(m * case.exact_E(eb.x), cE)
        np.add.at(r, dofmap.dofs[eb.tets], local * dofmap.signs[eb.tets])
    for fb in face_batches(mesh, dofmap, deg, k=k):
        Et = fb.tangential(case.exact_E(fb.x))
        local = g * np.einsum("kq,kqa,kiqa->ki", fb.weights, Et, fb.tangential(fb.phi))
        np.add.at(r, dofmap.dofs[fb.tets], local * dofmap.signs[fb.tets])
    return r


def best_approximation(mesh: Mesh, params: WaveParams, case: ManufacturedCase,
                       blocks: SystemMatrices | None = None) -> tuple[np.ndarray, float]:
    """Minimizer of ``|E - w_h|_imp`` over the (PEC-constrained) space, and its error."""
    _check_geometry(mesh, case)
    dofmap = blocks.dofmap if blocks is not None else build_dof_map(mesh, params.p)
    if blocks is None:
        blocks = assemble_blocks(mesh, dofmap)
    N = system_matrix(blocks, params.k, Variant.IMP_GRAM)
    r = imp_functional(mesh, dofmap, case, params.k)
    system = apply_pec(N, r, dofmap, mesh)
    w, _ = solve_linear(mesh, dofmap, system)
    w = system.expand(w)
    best = error_norms_from_coeffs(mesh, dofmap, case, params.k, w).imp
    return w, best


def quasi_opt_ratio(err_imp: float, best_imp: float) -> float:
    if best_imp < 1e-14:
        return QUASI_EXACT
    return err_imp / best_imp


# --------------------------------------------------------------------------
# discrete stability and consistency


def discrete_inf_sup(mesh: Mesh, params: WaveParams, variant: Variant = Variant.STANDARD,
                     blocks: SystemMatrices | None = None, large_ok: bool = False) -> float:
    """``gamma_{k,h}`` of the chosen form measured in the imp norm."""
    dofmap = blocks.dofmap if blocks is not None else build_dof_map(mesh, params.p)
    if blocks is None:
        blocks = assemble_blocks(mesh, dofmap)
    A = system_matrix(blocks, params.k, variant)
    N = system_matrix(blocks, params.k, Variant.IMP_GRAM)
    sysA = apply_pec(A, np.zeros(dofmap.ndof), dofmap, mesh)
    Nr = sysA.restrict_matrix(N)
    linalg.check_dense_cap(Nr.shape[0], large_ok=large_ok)
    return linalg.min_generalized_singular(sysA.matrix, Nr)


def consistency_quotient(Q, N, e: np.ndarray) -> float:
    """``2 max_v |v^H Q e| / (|e|_N |v|_N)``; zero for ``e = 0``."""
    e = np.asarray(e, dtype=complex)
    if not np.any(e):
        return 0.0
    q = Q @ e
    en = math.sqrt(float(np.real(np.vdot(e, N @ e))))
    return 2.0 * math.sqrt(max(linalg.dual_norm_sq(q, N), 0.0)) / en


def consistency_indicator(blocks: SystemMatrices, k: float, e: np.ndarray,
                          free: np.ndarray | None = None) -> float:
    """Consistency term for a discrete error vector ``e`` (optionally on a reduced space)."""
    Q = system_matrix(blocks, k, Variant.PAIRING)
    N = system_matrix(blocks, k, Variant.IMP_GRAM)
    if free is not None:
        Q, N = Q[free][:, free], N[free][:, free]
    return consistency_quotient(Q, N, e)


def galerkin_consistency(solution: Solution, case: ManufacturedCase, err_imp: float) -> float:
    """Consistency term of the true error ``E - E_h``.

    The functional ``v -> ((E - E_h, v))_k`` is assembled from the exact field
    by quadrature; its dual norm in the imp norm is taken on the
    (PEC-constrained) discrete space.
    """
    if err_imp == 0:
        return 0.0
    k = solution.params.k
    qE = imp_functional(solution.mesh, solution.dofmap, case, k, curl_weight=0.0,
                        mass_weight=k * k, bnd_weight=1j * k)
    # ((u, phi_i)) = phi_i^H Q u = (Q u)_i for real phi_i
    Q = system_matrix(solution.blocks, k, Variant.PAIRING)
    q = solution.system.restrict(qE - Q @ solution.coeffs)
    N = solution.system.restrict_matrix(system_matrix(solution.blocks, k, Variant.IMP_GRAM))
    sysN = ConstrainedSystem(N, q, solution.system.free, solution.system.n_full)
    y, _ = solve_linear(solution.mesh, solution.dofmap, sysN)
    return 2.0 * math.sqrt(max(float(np.real(np.vdot(q, y))), 0.0)) / err_imp


def helmholtz_projection(blocks: SystemMatrices, k: float, v: np.ndarray, sign: int = 1,
                         G=None) -> np.ndarray:
    """Scalar potential ``phi`` with ``((grad phi - v, grad psi))_{sign k} = 0`` for all ``psi``.

    The constant mode is fixed by pinning the first vertex dof and shifting
    the vertex coefficients to zero mean.
    """
    if sign not in (1, -1):
        raise InvalidArgumentError("sign must be +1 or -1")
    if G is None:
        raise InvalidArgumentError("discrete gradient matrix G is required")
    G = sp.csr_array(G)
    Q = system_matrix(blocks, sign * k, Variant.PAIRING)
    K = sp.csr_array(G.T @ Q @ G)
    rhs = G.T @ (Q @ np.asarray(v, dtype=complex))
    n = K.shape[0]
    keep = np.arange(1, n)
    phi = np.zeros(n, dtype=complex)
    phi[keep], _ = linalg.lu_solve(sp.csr_array(K[keep][:, keep]), rhs[keep])
    nv = blocks.dofmap.n_vertices
    phi[:nv] -= phi[:nv].mean()
    return phi


def gradient_residual(solution: Solution, G) -> float:
    """``|G^H (b - A x)|`` restricted to gradients that vanish on PEC faces."""
    sysm = solution.system
    G = sp.csr_array(G)
    Gr = G[sysm.free]
    # scalar functions whose gradient touches eliminated dofs are not test functions
    touched = np.zeros(G.shape[1], dtype=bool)
    fixed = np.setdiff1d(np.arange(G.shape[0]), sysm.free)
    if len(fixed):
        touched[np.unique(G[fixed].indices)] = True
    Gr = Gr[:, np.flatnonzero(~touched)]
    r = sysm.load - sysm.matrix @ sysm.restrict(solution.coeffs)
    return float(np.linalg.norm(Gr.T @ r))


# --------------------------------------------------------------------------
# bookkeeping


def n_lambda(ndof: float, k: float, volume: float) -> float:
    if ndof <= 0 or volume <= 0 or k == 0:
        raise InvalidArgumentError("ndof, |k| and volume must be positive")
    return 2.0 * math.pi * ndof ** (1.0 / 3.0) / (abs(k) * volume ** (1.0 / 3.0))


def eoc(h, errors, ndof=None) -> EocTable:
    """Rates ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; ``nan`` where undefined."""
    if len(h) < 2 or len(h) != len(errors):
        raise InvalidArgumentError("need at least two levels with matching lengths")
    rates = []
    for i in range(len(h) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 <= 0 or e1 <= 0 or h[i] == h[i + 1]:
            rates.append(math.nan)
        else:
            rates.append(math.log(e0 / e1) / math.log(h[i] / h[i + 1]))
    return EocTable(list(h), list(ndof) if ndof is not None else [], list(errors), rates)


def with_diagnostics(report: ErrorReport, **kw) -> ErrorReport:
    return replace(report, **kw)


def discrete_gradient_for(solution: Solution):
    return discrete_gradient(solution.mesh, solution.params.p).matrix
