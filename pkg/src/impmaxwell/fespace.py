"""Nédélec type-I and H^1 hierarchic spaces on affine tetrahedral meshes.

Every tetrahedron is handled in its *canonical frame*: local vertices are
sorted by global index. Shape functions are written in barycentric
coordinates of the sorted vertices, so an edge or face function is the
same expression of the same barycentrics from either side of a shared
entity, and tangential continuity needs no sign or permutation tables.

H(curl) basis of index p (dimension (p+1)(p+3)(p+4)/2), ordered by entity:

* per edge ``(a, b)``: the Whitney function ``l_a grad l_b - l_b grad l_a``
  followed by the gradients of the ``p`` scalar edge bubbles;
* per face: gradients of the scalar face bubbles, then rotational face
  functions of the form ``l_c m w_ab``;
* interior: gradients of the scalar cell bubbles, then rotational
  functions ``l_c l_d m w_ab``.

Because the gradient of every scalar shape function of degree p+1 appears
in the H(curl) basis, the discrete gradient is an incidence-like matrix
and ``curl(G phi) = 0`` holds exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ._barypoly import BaryField, BaryPoly, monomials, product
from .errors import InvalidArgumentError, MeshIntegrityError
from .mesh import LOCAL_EDGES, LOCAL_FACES, AffineMap, BoundaryTag, Mesh
from .quadrature import subdivided_tet_rule, tet_barycentric

MAX_DEGREE = 3
REF_GRADS = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


class BasisKind(enum.Enum):
    NEDELEC_I = "nedelec-I"
    SCALAR = "scalar"


def nedelec_dim(p: int) -> int:
    return (p + 1) * (p + 3) * (p + 4) // 2


def scalar_dim(q: int) -> int:
    return (q + 1) * (q + 2) * (q + 3) // 6


def hcurl_entity_counts(p: int) -> tuple[int, int, int]:
    """Dofs per edge, per face and per cell for index ``p``."""
    return p + 1, p * (p + 1), (p - 1) * p * (p + 1) // 2


def scalar_entity_counts(q: int) -> tuple[int, int, int, int]:
    return 1, q - 1, (q - 1) * (q - 2) // 2, (q - 1) * (q - 2) * (q - 3) // 6


# --------------------------------------------------------------------------
# scalar bubbles, shared by the H^1 basis and the gradient block of H(curl)


def _lam(i):
    return BaryPoly.var(i)


def _edge_bubbles(a, b, q):
    base = _lam(a) * _lam(b)
    return [base * (_lam(b) - _lam(a)) ** j for j in range(q - 1)]


def _face_bubbles(a, b, c, q):
    base = product(_lam(a), _lam(b), _lam(c))
    out = []
    for r in range(q - 2):
        for i in range(r, -1, -1):
            out.append(base * _lam(a) ** i * _lam(b) ** (r - i))
    return out


def _cell_bubbles(q):
    base = product(*(_lam(i) for i in range(4)))
    out = []
    for r in range(q - 3):
        out.extend(base * m for m in monomials((0, 1, 2), r))
    return out


def _scalar_functions(q):
    blocks = [("vertex", v, [_lam(v)]) for v in range(4)]
    blocks += [("edge", e, _edge_bubbles(a, b, q)) for e, (a, b) in enumerate(LOCAL_EDGES)]
    blocks += [("face", f, _face_bubbles(*abc, q)) for f, abc in enumerate(_FACE_ORDER)]
    blocks.append(("cell", 0, _cell_bubbles(q)))
    return blocks


# faces enumerated by the vertex they omit, vertices ascending
_FACE_ORDER = LOCAL_FACES


# --------------------------------------------------------------------------
# greedy completion of the rotational blocks


@lru_cache(maxsize=None)
def _sample_points():
    rule = subdivided_tet_rule(6, 1)
    return tet_barycentric(rule.points)


def _volume_sampler(field):
    return field.values(_sample_points(), REF_GRADS).ravel()


def _face_sampler(a, b, c):
    """Tangential trace of a field on face ``(a, b, c)`` at fixed points."""
    (d,) = (v for v in range(4) if v not in (a, b, c))
    lam3 = _sample_points()[:, :3]
    lam3 = lam3 / lam3.sum(axis=1, keepdims=True)
    lam = np.zeros((len(lam3), 4))
    lam[:, [a, b, c]] = lam3
    n = REF_GRADS[d] / np.linalg.norm(REF_GRADS[d])

    def sample(field):
        v = field.values(lam, REF_GRADS)
        return (v - np.outer(v @ n, n)).ravel()

    return sample


def _complete(fixed, candidates, target, sample):
    """Extend ``fixed`` with candidates (in order) up to ``target`` independent samples."""
    Q = None
    chosen = []

    def try_add(field):
        nonlocal Q
        v = sample(field)
        r = v if Q is None else v - Q @ (Q.T @ v)
        if Q is not None:
            r = r - Q @ (Q.T @ r)
        if np.linalg.norm(r) > 1e-8 * np.linalg.norm(v):
            col = (r / np.linalg.norm(r))[:, None]
            Q = col if Q is None else np.hstack([Q, col])
            return True
        return False

    for f in fixed:
        if not try_add(f):
            raise AssertionError("gradient block is rank deficient")
    for c in candidates:
        if len(fixed) + len(chosen) == target:
            break
        if try_add(c):
            chosen.append(c)
    if len(fixed) + len(chosen) != target:
        raise AssertionError("rotational candidates do not span the bubble space")
    return list(fixed) + chosen


def _nedelec_functions(p):
    q = p + 1
    _, nf, ni = hcurl_entity_counts(p)
    blocks = []
    for e, (a, b) in enumerate(LOCAL_EDGES):
        fields = [BaryField.whitney(a, b)]
        fields += [BaryField.gradient(s) for s in _edge_bubbles(a, b, q)]
        blocks.append(("edge", e, fields))
    for f, (a, b, c) in enumerate(_FACE_ORDER):
        grads = [BaryField.gradient(s) for s in _face_bubbles(a, b, c, q)]
        ms = monomials((a, b, c), p - 1) if p >= 1 else []
        cands = [BaryField.whitney(a, b).scaled(_lam(c) * m) for m in ms]
        cands += [BaryField.whitney(b, c).scaled(_lam(a) * m) for m in ms]
        cands += [BaryField.whitney(a, c).scaled(_lam(b) * m) for m in ms]
        blocks.append(("face", f, _complete(grads, cands, nf, _face_sampler(a, b, c))))
    grads = [BaryField.gradient(s) for s in _cell_bubbles(q)]
    cands = []
    if p >= 2:
        for a, b in LOCAL_EDGES:
            c, d = (v for v in range(4) if v not in (a, b))
            cands += [
                BaryField.whitney(a, b).scaled(_lam(c) * _lam(d) * m)
                for m in monomials((0, 1, 2, 3), p - 2)
            ]
    blocks.append(("cell", 0, _complete(grads, cands, ni, _volume_sampler)))
    return blocks


# --------------------------------------------------------------------------
# reference bases


class ReferenceBasis:
    """Shape functions on the reference tetrahedron, grouped by entity.

    ``blocks`` is a list of ``(entity_kind, local_entity, slice)``.
    """

    def __init__(self, kind: BasisKind, degree: int, functions, blocks):
        self.kind = kind
        self.degree = degree
        self.functions = functions
        self.blocks = blocks

    def __len__(self) -> int:
        return len(self.functions)

    def _lam(self, points):
        return tet_barycentric(np.asarray(points, dtype=float))

    def eval(self, points: np.ndarray, grads: np.ndarray = REF_GRADS) -> np.ndarray:
        """Values at reference points: ``(nfunc, npts, 3)`` or ``(nfunc, npts)``."""
        lam = self._lam(points)
        if self.kind is BasisKind.SCALAR:
            return np.array([f(lam) for f in self.functions])
        return np.array([f.values(lam, grads) for f in self.functions])

    def curl_eval(self, points: np.ndarray, grads: np.ndarray = REF_GRADS) -> np.ndarray:
        lam = self._lam(points)
        if self.kind is BasisKind.SCALAR:
            return np.zeros((len(self), len(lam), 3))
        return np.array([f.curl(lam, grads) for f in self.functions])

    def grad_eval(self, points: np.ndarray, grads: np.ndarray = REF_GRADS) -> np.ndarray:
        if self.kind is not BasisKind.SCALAR:
            raise InvalidArgumentError("gradient map is defined for the scalar basis")
        lam = self._lam(points)
        return np.array([BaryField.gradient(f).values(lam, grads) for f in self.functions])


def _flatten(blocks):
    functions, index, start = [], [], 0
    for kind, ent, fs in blocks:
        functions += fs
        index.append((kind, ent, slice(start, start + len(fs))))
        start += len(fs)
    return functions, index


@lru_cache(maxsize=None)
def reference_nedelec_basis(p: int) -> ReferenceBasis:
    if not 0 <= p <= MAX_DEGREE:
        raise NotImplementedError(f"Nedelec index {p} not supported (0..{MAX_DEGREE})")
    functions, index = _flatten(_nedelec_functions(p))
    assert len(functions) == nedelec_dim(p)
    return ReferenceBasis(BasisKind.NEDELEC_I, p, functions, index)


@lru_cache(maxsize=None)
def reference_scalar_basis(degree: int) -> ReferenceBasis:
    if not 1 <= degree <= MAX_DEGREE + 1:
        raise NotImplementedError(f"scalar degree {degree} not supported (1..{MAX_DEGREE + 1})")
    functions, index = _flatten(_scalar_functions(degree))
    assert len(functions) == scalar_dim(degree)
    return ReferenceBasis(BasisKind.SCALAR, degree, functions, index)


# --------------------------------------------------------------------------
# Piola maps


def piola_covariant(amap: AffineMap, ref_value: np.ndarray, ref_curl: np.ndarray | None = None):
    """``B^{-T} u`` for values and ``B c / det B`` for curls (last axis = components)."""
    if amap.det == 0:
        raise MeshIntegrityError("singular element map")
    value = np.asarray(ref_value) @ amap.inverse_jacobian
    if ref_curl is None:
        return value, None
    curl = np.asarray(ref_curl) @ amap.jacobian.T / amap.det
    return value, curl


# --------------------------------------------------------------------------
# global numbering


@dataclass(frozen=True)
class DofMap:
    """Local-to-global map for one space on one mesh.

    ``perm[K]`` lists mesh-local vertex numbers in canonical (ascending
    global index) order; ``dofs[K]`` follows the reference basis order in
    that frame. ``signs`` are all +1 because orientation is carried by the
    canonical frame.
    """

    kind: BasisKind
    degree: int
    perm: np.ndarray
    canonical_tets: np.ndarray
    dofs: np.ndarray
    signs: np.ndarray
    n_vertices: int
    n_edges: int
    n_faces: int
    n_cells: int
    edges: np.ndarray
    faces: np.ndarray
    tet_edges: np.ndarray
    tet_faces: np.ndarray

    @property
    def ndof(self) -> int:
        return int(self.dofs.max()) + 1 if self.dofs.size else 0

    @property
    def ndof_hcurl(self) -> int:
        return self.ndof if self.kind is BasisKind.NEDELEC_I else 0

    @property
    def ndof_scalar(self) -> int:
        return self.ndof if self.kind is BasisKind.SCALAR else 0

    def canonical_face(self, tet: np.ndarray, local_face: np.ndarray) -> np.ndarray:
        """Canonical-frame face index for mesh-local faces (face opposite that vertex)."""
        tet = np.asarray(tet)
        return np.argmax(self.perm[tet] == np.asarray(local_face)[..., None], axis=-1)

    def entity_counts(self):
        if self.kind is BasisKind.SCALAR:
            return scalar_entity_counts(self.degree)
        return (0,) + hcurl_entity_counts(self.degree)

    def entity_dofs(self, vertices=(), edges=(), faces=()) -> np.ndarray:
        """Global dofs attached to the given vertex / edge / face entities."""
        nv, ne, nf, _ = self.entity_counts()
        out = []
        base_e = self.n_vertices * nv
        base_f = base_e + self.n_edges * ne
        for ids, base, cnt in ((vertices, 0, nv), (edges, base_e, ne), (faces, base_f, nf)):
            ids = np.asarray(ids, dtype=np.int64)
            if cnt and ids.size:
                out.append((base + ids[:, None] * cnt + np.arange(cnt)).ravel())
        return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)


def _canonical_entities(mesh: Mesh):
    perm = np.argsort(mesh.tets, axis=1, kind="stable")
    ctets = np.take_along_axis(mesh.tets, perm, axis=1)
    pairs = ctets[:, LOCAL_EDGES].reshape(-1, 2)
    edges, tet_edges = np.unique(pairs, axis=0, return_inverse=True)
    tri = ctets[:, _FACE_ORDER].reshape(-1, 3)
    faces, tet_faces, counts = np.unique(tri, axis=0, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        raise MeshIntegrityError("non-conforming mesh: face shared by more than two tets")
    return perm, ctets, edges, tet_edges.reshape(-1, 6), faces, tet_faces.reshape(-1, 4)


def build_dof_map(mesh: Mesh, p: int, kind: BasisKind = BasisKind.NEDELEC_I) -> DofMap:
    """Global numbering; for the scalar kind ``p`` is the polynomial degree."""
    if kind is BasisKind.NEDELEC_I:
        basis = reference_nedelec_basis(p)
        counts = (0,) + hcurl_entity_counts(p)
    else:
        basis = reference_scalar_basis(p)
        counts = scalar_entity_counts(p)
    perm, ctets, edges, tet_edges, faces, tet_faces = _canonical_entities(mesh)
    nv, ne, nf, nc = counts
    n_vert, n_edge, n_face, n_cell = mesh.n_vertices, len(edges), len(faces), mesh.n_tets
    base_e = n_vert * nv
    base_f = base_e + n_edge * ne
    base_c = base_f + n_face * nf
    dofs = np.empty((n_cell, len(basis)), dtype=np.int64)
    for ent, idx, sl in basis.blocks:
        j = np.arange(sl.stop - sl.start)
        if ent == "vertex":
            g = ctets[:, idx, None] * nv + j
        elif ent == "edge":
            g = base_e + tet_edges[:, idx, None] * ne + j
        elif ent == "face":
            g = base_f + tet_faces[:, idx, None] * nf + j
        else:
            g = base_c + np.arange(n_cell)[:, None] * nc + j
        dofs[:, sl] = g
    return DofMap(
        kind, p, perm, ctets, dofs, np.ones_like(dofs, dtype=np.int8),
        n_vert, n_edge, n_face, n_cell, edges, faces, tet_edges, tet_faces,
    )


def dof_coordinates(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    """A representative point per global dof: its entity's barycenter."""
    V = mesh.vertices
    nv, ne, nf, nc = dofmap.entity_counts()
    parts = [
        np.repeat(V, nv, axis=0),
        np.repeat(V[dofmap.edges].mean(axis=1), ne, axis=0),
        np.repeat(V[dofmap.faces].mean(axis=1), nf, axis=0),
        np.repeat(V[mesh.tets].mean(axis=1), nc, axis=0),
    ]
    return np.concatenate(parts)[: dofmap.ndof]


def canonical_maps(mesh: Mesh, dofmap: DofMap):
    """Jacobians ``B``, ``B^{-1}`` and ``det B`` in the canonical frame, batched."""
    c = mesh.vertices[dofmap.canonical_tets]
    B = np.transpose(c[:, 1:] - c[:, :1], (0, 2, 1))
    det = np.linalg.det(B)
    if np.any(np.abs(det) <= 1e-14 * np.abs(B).max(axis=(1, 2)) ** 3):
        raise MeshIntegrityError("degenerate tetrahedron")
    return B, np.linalg.inv(B), det, c[:, 0]


def boundary_entities(mesh: Mesh, dofmap: DofMap, tag: BoundaryTag):
    """Global vertex, edge and face ids lying on faces with the given tag."""
    bf = mesh.boundary_faces_with_tag(tag)
    if len(bf) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z
    r = dofmap.canonical_face(bf[:, 0], bf[:, 1])
    faces = dofmap.tet_faces[bf[:, 0], r]
    tri = dofmap.faces[faces]
    verts = np.unique(tri)
    pairs = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [0, 2]], tri[:, [1, 2]]]), axis=1)
    # edges are stored sorted lexicographically, so a search is exact
    key = dofmap.edges[:, 0] * (mesh.n_vertices + 1) + dofmap.edges[:, 1]
    pk = pairs[:, 0] * (mesh.n_vertices + 1) + pairs[:, 1]
    edges = np.unique(np.searchsorted(key, pk))
    return verts, edges, np.unique(faces)


# --------------------------------------------------------------------------
# discrete gradient


@dataclass(frozen=True)
class DiscreteGradient:
    matrix: sp.csr_array
    hcurl: DofMap
    scalar: DofMap


def discrete_gradient(mesh: Mesh, p: int, scalar_degree: int | None = None) -> DiscreteGradient:
    """Matrix expressing the gradient of S_{p+1} in N_p^I coefficients."""
    q = p + 1 if scalar_degree is None else scalar_degree
    if q != p + 1:
        raise InvalidArgumentError("scalar degree must be one more than the Nedelec index")
    hc = build_dof_map(mesh, p, BasisKind.NEDELEC_I)
    sc = build_dof_map(mesh, q, BasisKind.SCALAR)
    ne_h, nf_h, _ = hcurl_entity_counts(p)
    _, ne_s, nf_s, nc_s = scalar_entity_counts(q)
    n_edge, n_face, n_cell, n_vert = hc.n_edges, hc.n_faces, hc.n_cells, hc.n_vertices

    rows, cols, vals = [], [], []
    whitney = np.arange(n_edge) * ne_h
    rows += [whitney, whitney]
    cols += [hc.edges[:, 0], hc.edges[:, 1]]
    vals += [-np.ones(n_edge), np.ones(n_edge)]

    def block(n_ent, h_base, h_per, h_off, s_base, s_per):
        if s_per == 0:
            return
        ent = np.repeat(np.arange(n_ent), s_per)
        j = np.tile(np.arange(s_per), n_ent)
        rows.append(h_base + ent * h_per + h_off + j)
        cols.append(s_base + ent * s_per + j)
        vals.append(np.ones(len(j)))

    hb_f = n_edge * ne_h
    hb_c = hb_f + n_face * nf_h
    sb_e = n_vert
    sb_f = sb_e + n_edge * ne_s
    sb_c = sb_f + n_face * nf_s
    block(n_edge, 0, ne_h, 1, sb_e, ne_s)
    block(n_face, hb_f, nf_h, 0, sb_f, nf_s)
    block(n_cell, hb_c, hcurl_entity_counts(p)[2], 0, sb_c, nc_s)
    G = sp.csr_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(hc.ndof, sc.ndof),
    )
    return DiscreteGradient(G, hc, sc)


# --------------------------------------------------------------------------
# pointwise evaluation of finite element functions


def locate(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tet index and mesh-local barycentrics of each point (brute force)."""
    c = mesh.corners()
    B = np.transpose(c[:, 1:] - c[:, :1], (0, 2, 1))
    Binv = np.linalg.inv(B)
    tets = np.empty(len(points), dtype=np.int64)
    lams = np.empty((len(points), 4))
    for i, x in enumerate(np.atleast_2d(points)):
        ref = np.einsum("kij,kj->ki", Binv, x - c[:, 0])
        lam = np.column_stack([1 - ref.sum(axis=1), ref])
        K = int(np.argmax(lam.min(axis=1)))
        tets[i], lams[i] = K, lam[K]
    return tets, lams


def evaluate_field(mesh: Mesh, dofmap: DofMap, coeffs: np.ndarray, tets, ref_points):
    """Value (and curl) of an H(curl) function at canonical-frame reference points of given tets."""
    basis = reference_nedelec_basis(dofmap.degree)
    B, Binv, det, _ = canonical_maps(mesh, dofmap)
    vals, curls = [], []
    for K, xr in zip(np.atleast_1d(tets), np.atleast_2d(ref_points)):
        c = coeffs[dofmap.dofs[K]] * dofmap.signs[K]
        phi = basis.eval(xr[None])[:, 0]
        cphi = basis.curl_eval(xr[None])[:, 0]
        vals.append(Binv[K].T @ (c @ phi))
        curls.append(B[K] @ (c @ cphi) / det[K])
    return np.array(vals), np.array(curls)


def to_canonical_ref(mesh: Mesh, dofmap: DofMap, tets, lam_mesh_local) -> np.ndarray:
    """Convert mesh-local barycentrics to canonical-frame reference coordinates."""
    lam = np.take_along_axis(np.atleast_2d(lam_mesh_local), dofmap.perm[np.atleast_1d(tets)], axis=1)
    return lam[:, 1:]
