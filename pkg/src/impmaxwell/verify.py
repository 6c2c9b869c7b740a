"""Fast invariant suites run by ``impmaxwell verify`` and the test suite.

Each suite returns a `SuiteResult` with the worst observed defect and the
tolerance it was held to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .assembly import Variant, assemble_blocks, system_matrix
from .fespace import MAX_DEGREE, build_dof_map, discrete_gradient, piola_covariant, reference_nedelec_basis
from .mesh import affine_map_from_corners, build_cube_mesh
from .quadrature import tet_rule, tri_rule

QUAD_SWEEP_DEGREES = range(0, 15)


@dataclass
class SuiteResult:
    name: str
    worst: float
    tol: float
    cases: int

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst {self.worst:.3e} (tol {self.tol:.1e}, {self.cases} cases)"


def monomial_exponents(dim: int, degree: int):
    for exps in product(range(degree + 1), repeat=dim):
        if sum(exps) <= degree:
            yield exps


def simplex_monomial_integral(exps) -> float:
    """Integral of ``prod x_i^{a_i}`` over the unit simplex: ``prod a_i! / (sum a_i + d)!``."""
    num = math.prod(math.factorial(a) for a in exps)
    return num / math.factorial(sum(exps) + len(exps))


def quadrature_sweep(degrees=QUAD_SWEEP_DEGREES, rtol: float = 1e-13) -> SuiteResult:
    worst, cases = 0.0, 0
    for d in degrees:
        for rule, dim in ((tet_rule(d), 3), (tri_rule(d), 2)):
            for exps in monomial_exponents(dim, d):
                approx = float(rule.weights @ np.prod(rule.points ** np.array(exps), axis=1))
                exact = simplex_monomial_integral(exps)
                worst = max(worst, abs(approx - exact) / exact)
                cases += 1
    return SuiteResult("quadrature monomial exactness", worst, rtol, cases)


def random_tet(rng: np.random.Generator) -> np.ndarray:
    """Corners of a random, reasonably shaped, positively oriented tet."""
    while True:
        c = rng.uniform(-1.0, 1.0, size=(4, 3))
        B = (c[1:] - c[0]).T
        det = np.linalg.det(B)
        if abs(det) > 0.05:
            if det < 0:
                c[[1, 2]] = c[[2, 1]]
            return c


def piola_commutation(seed: int = 0, degrees=range(MAX_DEGREE + 1), trials: int = 3,
                      step: float = 1e-5, tol: float = 1e-6) -> SuiteResult:
    """Central-difference curl of the mapped field against the transformed reference curl."""
    rng = np.random.default_rng(seed)
    worst, cases = 0.0, 0
    for p in degrees:
        basis = reference_nedelec_basis(p)
        for _ in range(trials):
            amap = affine_map_from_corners(random_tet(rng))
            c = rng.standard_normal(len(basis))
            lam = rng.dirichlet(np.ones(4), size=5) * 0.8 + 0.05
            xhat = lam[:, 1:] / lam.sum(axis=1, keepdims=True)

            def field(x):
                xr = (x - amap.offset) @ amap.inverse_jacobian.T
                v = np.einsum("i,iqa->qa", c, basis.eval(xr))
                return piola_covariant(amap, v)[0]

            x = amap(xhat)
            grad = np.empty((len(x), 3, 3))  # grad[q, a, j] = d u_a / d x_j
            for j in range(3):
                e = np.zeros(3)
                e[j] = step
                grad[:, :, j] = (field(x + e) - field(x - e)) / (2 * step)
            fd_curl = np.stack(
                [grad[:, 2, 1] - grad[:, 1, 2], grad[:, 0, 2] - grad[:, 2, 0], grad[:, 1, 0] - grad[:, 0, 1]],
                axis=-1,
            )
            ref_c = np.einsum("i,iqa->qa", c, basis.curl_eval(xhat))
            ref_v = np.einsum("i,iqa->qa", c, basis.eval(xhat))
            mapped = piola_covariant(amap, ref_v, ref_c)[1]
            scale = max(1.0, np.abs(mapped).max())
            worst = max(worst, np.abs(fd_curl - mapped).max() / scale)
            cases += 1
    return SuiteResult("Piola curl commutation", worst, tol, cases)


def coercivity_rotation(seed: int = 0, sizes=(1, 2), degrees=(0, 1), ks=(1.0, 4.0, 16.0),
                        vectors: int = 100, tol: float = 1e-12) -> SuiteResult:
    """``Re(sigma v^H A+ v) = 2^{-1/2} v^H N v`` with ``sigma = exp(i pi/4)``."""
    rng = np.random.default_rng(seed)
    sigma = np.exp(0.25j * np.pi)
    worst, cases = 0.0, 0
    for n, p in product(sizes, degrees):
        mesh = build_cube_mesh(n)
        blocks = assemble_blocks(mesh, build_dof_map(mesh, p))
        for k in ks:
            Ap = system_matrix(blocks, k, Variant.GOOD_SIGN)
            N = system_matrix(blocks, k, Variant.IMP_GRAM)
            V = rng.standard_normal((vectors, Ap.shape[0])) + 1j * rng.standard_normal((vectors, Ap.shape[0]))
            for v in V:
                lhs = np.real(sigma * np.vdot(v, Ap @ v))
                nn = np.real(np.vdot(v, N @ v))
                worst = max(worst, abs(lhs - nn / math.sqrt(2.0)) / nn)
                cases += 1
    return SuiteResult("coercivity rotation", worst, tol, cases)


def exact_sequence(n: int = 2, degrees=range(MAX_DEGREE + 1), rtol: float = 1e-10) -> SuiteResult:
    """``|S G|_max / (|S|_max |G|_max)`` on a cube mesh."""
    mesh = build_cube_mesh(n)
    worst = 0.0
    for p in degrees:
        blocks = assemble_blocks(mesh, build_dof_map(mesh, p))
        G = discrete_gradient(mesh, p).matrix
        SG = blocks.S @ G
        ref = abs(blocks.S).max() * abs(G).max()
        worst = max(worst, (abs(SG).max() if SG.nnz else 0.0) / ref)
    return SuiteResult("exact sequence S G = 0", worst, rtol, len(list(degrees)))


SUITES = {
    "quadrature": quadrature_sweep,
    "piola": piola_commutation,
    "coercivity": coercivity_rotation,
    "exact-sequence": exact_sequence,
}


def run_all(seed: int = 0) -> list[SuiteResult]:
    out = []
    for name, fn in SUITES.items():
        out.append(fn(seed=seed) if name in ("piola", "coercivity") else fn())
    return out
