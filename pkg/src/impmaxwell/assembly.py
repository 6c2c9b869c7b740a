"""Global matrices and load vectors for the impedance Maxwell problem.

Matrix convention: for real basis functions ``phi_i`` and coefficient
vectors ``u``, ``v`` the sesquilinear form value is ``A(u, v) = v^H A u``.
All forms are then combinations of three real symmetric blocks::

    S   = (curl phi_j, curl phi_i)
    M   = (phi_j, phi_i)
    M_G = (phi_j,T, phi_i,T) on impedance faces
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .cases import ManufacturedCase
from .errors import InvalidArgumentError
from .fespace import (
    DofMap,
    boundary_entities,
    canonical_maps,
    reference_nedelec_basis,
)
from .mesh import LOCAL_FACES, BoundaryTag, Mesh, element_diameters
from .quadrature import QuadRule, subdivided_tet_rule, tet_rule, tri_rule

CHUNK = 8192
OSCILLATION_LIMIT = 3.0
_REF_VERTS = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


class Variant(enum.Enum):
    STANDARD = "standard"
    GOOD_SIGN = "good-sign"
    PAIRING = "pairing"
    IMP_GRAM = "imp-gram"


@dataclass(frozen=True)
class WaveParams:
    k: float
    p: int

    def __post_init__(self):
        if abs(self.k) < 1.0:
            raise InvalidArgumentError("|k| must be at least 1")

    @property
    def sigma(self) -> complex:
        return complex(np.exp(0.25j * np.pi * np.sign(self.k)))


@dataclass(frozen=True)
class SystemMatrices:
    S: sp.csr_array
    M: sp.csr_array
    M_gamma: sp.csr_array
    dofmap: DofMap

    def A_k(self, k):
        return system_matrix(self, k, Variant.STANDARD)

    def A_plus(self, k):
        return system_matrix(self, k, Variant.GOOD_SIGN)

    def Q_k(self, k):
        return system_matrix(self, k, Variant.PAIRING)

    def N_imp(self, k):
        return system_matrix(self, k, Variant.IMP_GRAM)


def system_matrix(blocks: SystemMatrices, k: float, variant: Variant) -> sp.csr_array:
    S, M, G = blocks.S, blocks.M, blocks.M_gamma
    if variant is Variant.STANDARD:
        A = S - (k * k) * M - (1j * k) * G
    elif variant is Variant.GOOD_SIGN:
        A = S + (k * k) * M - (1j * k) * G
    elif variant is Variant.PAIRING:
        A = (k * k) * M + (1j * k) * G
    elif variant is Variant.IMP_GRAM:
        A = (S + (k * k) * M + abs(k) * G).astype(complex)
    else:
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    return sp.csr_array(A)


# --------------------------------------------------------------------------
# element and face iteration


@lru_cache(maxsize=None)
def _tabulate(p: int, rule_key, points_bytes: bytes, shape):
    pts = np.frombuffer(points_bytes).reshape(shape)
    basis = reference_nedelec_basis(p)
    return basis.eval(pts), basis.curl_eval(pts)


def tabulate(p: int, points: np.ndarray):
    """Reference values and curls, each ``(nloc, npts, 3)``; cached by points."""
    pts = np.ascontiguousarray(points, dtype=float)
    return _tabulate(p, None, pts.tobytes(), pts.shape)


@dataclass
class ElementBatch:
    tets: np.ndarray
    x: np.ndarray  # physical quadrature points (nk, nq, 3)
    weights: np.ndarray  # reference weights (nq,)
    phi: np.ndarray  # reference values (nloc, nq, 3)
    curl_phi: np.ndarray
    B: np.ndarray
    Binv: np.ndarray
    det: np.ndarray

    def dx(self) -> np.ndarray:
        """Quadrature weights in physical measure, ``(nk, nq)``."""
        return np.abs(self.det)[:, None] * self.weights[None, :]

    def field(self, c: np.ndarray):
        """Value and curl of the local expansion with coefficients ``c`` (nk, nloc)."""
        ref_v = np.einsum("ki,iqa->kqa", c, self.phi)
        ref_c = np.einsum("ki,iqa->kqa", c, self.curl_phi)
        val = np.einsum("kqa,kab->kqb", ref_v, self.Binv)
        curl = np.einsum("kab,kqb->kqa", self.B, ref_c) / self.det[:, None, None]
        return val, curl

    def project(self, vec: np.ndarray, curl_vec: np.ndarray | None = None) -> np.ndarray:
        """``int vec . phi_i (+ curl_vec . curl phi_i)`` per element, ``(nk, nloc)``."""
        dx = self.dx()
        pulled = np.einsum("kab,kqb->kqa", self.Binv, vec)  # B^{-1} v
        out = np.einsum("kq,kqa,iqa->ki", dx, pulled, self.phi)
        if curl_vec is not None:
            pulled_c = np.einsum("kba,kqb->kqa", self.B, curl_vec) / self.det[:, None, None]
            out = out + np.einsum("kq,kqa,iqa->ki", dx, pulled_c, self.curl_phi)
        return out


def element_batches(mesh: Mesh, dofmap: DofMap, degree: int, k: float | None = None,
                    chunk: int = CHUNK):
    """Yield `ElementBatch` chunks; elements with ``|k| h_K > 3`` get a 2x-subdivided rule."""
    B, Binv, det, x0 = canonical_maps(mesh, dofmap)
    groups = [(np.arange(mesh.n_tets), tet_rule(degree))]
    if k is not None:
        fine = abs(k) * element_diameters(mesh) > OSCILLATION_LIMIT
        if fine.any():
            groups = [
                (np.flatnonzero(~fine), tet_rule(degree)),
                (np.flatnonzero(fine), subdivided_tet_rule(degree, 1)),
            ]
    for ids, rule in groups:
        phi, cphi = tabulate(dofmap.degree, rule.points)
        for s in range(0, len(ids), chunk):
            t = ids[s : s + chunk]
            x = x0[t, None, :] + np.einsum("kab,qb->kqa", B[t], rule.points)
            yield ElementBatch(t, x, rule.weights, phi, cphi, B[t], Binv[t], det[t])


@lru_cache(maxsize=None)
def subdivided_tri_rule(degree: int) -> QuadRule:
    base = tri_rule(degree)
    corners = [
        ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5)),
        ((0.5, 0.0), (1.0, 0.0), (0.5, 0.5)),
        ((0.0, 0.5), (0.5, 0.5), (0.0, 1.0)),
        ((0.5, 0.5), (0.0, 0.5), (0.5, 0.0)),
    ]
    pts, wts = [], []
    for c in corners:
        c = np.array(c)
        pts.append(c[0] + base.points @ (c[1:] - c[0]))
        wts.append(base.weights * 0.25)
    return QuadRule(np.vstack(pts), np.concatenate(wts), degree)


@dataclass
class FaceBatch:
    tets: np.ndarray
    x: np.ndarray  # (nf, nq, 3)
    weights: np.ndarray  # (nf, nq) physical measure
    normal: np.ndarray  # (nf, 3) unit
    phi: np.ndarray  # (nf, nloc, nq, 3) physical values
    curl_phi: np.ndarray

    def tangential(self, v: np.ndarray) -> np.ndarray:
        """``n x (v x n)`` for arrays whose last axis is the component."""
        n = self.normal.reshape((len(self.normal),) + (1,) * (v.ndim - 2) + (3,))
        return v - np.sum(v * n, axis=-1, keepdims=True) * n


def face_batches(mesh: Mesh, dofmap: DofMap, degree: int, tag=BoundaryTag.IMPEDANCE,
                 k: float | None = None):
    bf = mesh.boundary_faces_with_tag(tag)
    if len(bf) == 0:
        return
    B, Binv, det, x0 = canonical_maps(mesh, dofmap)
    r_all = dofmap.canonical_face(bf[:, 0], bf[:, 1])
    rule = tri_rule(degree)
    if k is not None and abs(k) * element_diameters(mesh).max() > OSCILLATION_LIMIT:
        rule = subdivided_tri_rule(degree)
    for r in range(4):
        t = bf[r_all == r, 0]
        if len(t) == 0:
            continue
        fc = _REF_VERTS[list(LOCAL_FACES[r])]
        ref_pts = fc[0] + rule.points @ (fc[1:] - fc[0])
        phi_r, cphi_r = tabulate(dofmap.degree, ref_pts)
        x = x0[t, None, :] + np.einsum("kab,qb->kqa", B[t], ref_pts)
        e1 = np.einsum("kab,b->ka", B[t], fc[1] - fc[0])
        e2 = np.einsum("kab,b->ka", B[t], fc[2] - fc[0])
        cr = np.cross(e1, e2)
        area2 = np.linalg.norm(cr, axis=1)
        normal = cr / area2[:, None]
        # outward: away from the vertex opposite the face
        inward = np.einsum("kab,b->ka", B[t], _REF_VERTS[r] - fc[0])
        normal *= -np.sign(np.sum(normal * inward, axis=1))[:, None]
        phys = np.einsum("iqa,kab->kiqb", phi_r, Binv[t])
        cphys = np.einsum("kab,iqb->kiqa", B[t], cphi_r) / det[t, None, None, None]
        yield FaceBatch(t, x, area2[:, None] * rule.weights[None, :], normal, phys, cphys)


# --------------------------------------------------------------------------
# assembly


def _scatter(dofmap: DofMap, tets: np.ndarray, local: np.ndarray, n: int) -> sp.csr_array:
    d = dofmap.dofs[tets]
    s = dofmap.signs[tets].astype(float)
    local = local * s[:, :, None] * s[:, None, :]
    rows = np.repeat(d, d.shape[1], axis=1).ravel()
    cols = np.tile(d, (1, d.shape[1])).ravel()
    A = sp.coo_array((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble_blocks(mesh: Mesh, dofmap: DofMap, quad_degree: int | None = None) -> SystemMatrices:
    p = dofmap.degree
    if quad_degree is None:
        quad_degree = 2 * p + 2
    if quad_degree < 2 * p:
        raise InvalidArgumentError("quadrature degree must be at least 2p")
    rule = tet_rule(quad_degree)
    phi, cphi = tabulate(p, rule.points)
    Tm = np.einsum("q,iqa,jqb->ijab", rule.weights, phi, phi)
    Tc = np.einsum("q,iqa,jqb->ijab", rule.weights, cphi, cphi)
    B, Binv, det, _ = canonical_maps(mesh, dofmap)
    n = dofmap.ndof

    M = sp.csr_array((n, n))
    S = sp.csr_array((n, n))
    for s in range(0, mesh.n_tets, CHUNK):
        t = np.arange(s, min(s + CHUNK, mesh.n_tets))
        Cm = np.einsum("kac,kbc->kab", Binv[t], Binv[t]) * np.abs(det[t])[:, None, None]
        Cs = np.einsum("kca,kcb->kab", B[t], B[t]) / np.abs(det[t])[:, None, None]
        M = M + _scatter(dofmap, t, np.einsum("ijab,kab->kij", Tm, Cm), n)
        S = S + _scatter(dofmap, t, np.einsum("ijab,kab->kij", Tc, Cs), n)

    G = sp.csr_array((n, n))
    for fb in face_batches(mesh, dofmap, quad_degree):
        pt = fb.tangential(fb.phi)
        local = np.einsum("kq,kiqa,kjqa->kij", fb.weights, pt, pt)
        G = G + _scatter(dofmap, fb.tets, local, n)
    M, S, G = (_symmetrize(X) for X in (M, S, G))
    return SystemMatrices(S, M, G, dofmap)


def _symmetrize(A: sp.csr_array) -> sp.csr_array:
    A = sp.csr_array(0.5 * (A + A.T))
    A.sort_indices()
    return A


def _check_geometry(mesh: Mesh, case: ManufacturedCase):
    if case.geometry is not None and case.geometry != mesh.geometry:
        raise InvalidArgumentError(
            f"case {case.name!r} needs geometry {case.geometry!r}, mesh is {mesh.geometry!r}"
        )


def load_degree(p: int) -> int:
    return 2 * p + 6


def assemble_load(mesh: Mesh, dofmap: DofMap, case: ManufacturedCase, k: float,
                  quad_degree: int | None = None) -> np.ndarray:
    """``b_i = (f, phi_i) + (g_T, phi_i,T)`` over impedance faces."""
    _check_geometry(mesh, case)
    deg = load_degree(dofmap.degree) if quad_degree is None else quad_degree
    b = np.zeros(dofmap.ndof, dtype=complex)
    for eb in element_batches(mesh, dofmap, deg, k):
        local = eb.project(case.source_f(eb.x))
        np.add.at(b, dofmap.dofs[eb.tets], local * dofmap.signs[eb.tets])
    for fb in face_batches(mesh, dofmap, deg, k=k):
        g = case.impedance_g_T(fb.x, fb.normal[:, None, :])
        local = np.einsum("kq,kqa,kiqa->ki", fb.weights, g, fb.tangential(fb.phi))
        np.add.at(b, dofmap.dofs[fb.tets], local * dofmap.signs[fb.tets])
    return b


@dataclass(frozen=True)
class ConstrainedSystem:
    matrix: sp.csr_array
    load: np.ndarray
    free: np.ndarray  # reduced index -> full index
    n_full: int

    def expand(self, x_reduced: np.ndarray) -> np.ndarray:
        x = np.zeros(self.n_full, dtype=np.result_type(x_reduced, complex))
        x[self.free] = x_reduced
        return x

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return v[self.free]

    def restrict_matrix(self, A):
        return sp.csr_array(A[self.free][:, self.free])


def pec_dofs(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    verts, edges, faces = boundary_entities(mesh, dofmap, BoundaryTag.PEC)
    return dofmap.entity_dofs(vertices=verts, edges=edges, faces=faces)


def apply_pec(matrix, load: np.ndarray, dofmap: DofMap, mesh: Mesh) -> ConstrainedSystem:
    """Eliminate dofs on PEC faces (homogeneous tangential trace)."""
    n = dofmap.ndof
    fixed = pec_dofs(mesh, dofmap)
    free = np.setdiff1d(np.arange(n), fixed)
    if len(fixed) == 0:
        return ConstrainedSystem(sp.csr_array(matrix), load, free, n)
    A = sp.csr_array(matrix)[free][:, free]
    return ConstrainedSystem(sp.csr_array(A), load[free], free, n)
