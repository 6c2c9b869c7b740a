"""Tetrahedral meshes of the two benchmark domains.

Both domains are unions of axis-aligned boxes and are meshed with a Kuhn
(Freudenthal) split of a tensor grid, so every element map is affine.
Local face ``f`` of a tetrahedron is the face opposite local vertex ``f``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, MeshIntegrityError

GEOM_TOL = 1e-10

# local edges and faces of a tetrahedron; face f omits vertex f
LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
LOCAL_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


class BoundaryTag(enum.IntEnum):
    IMPEDANCE = 0
    PEC = 1


@dataclass(frozen=True)
class Mesh:
    """Conforming tetrahedral mesh.

    ``boundary_faces`` rows are ``(tet, local_face, tag)``.
    ``volume`` is the exact volume of the meshed domain, used for audits
    and for the degrees-of-freedom-per-wavelength measure.
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray
    volume: float
    name: str = "mesh"
    geometry: str = "cube"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def corners(self) -> np.ndarray:
        """Vertex coordinates per tet, shape ``(n_tets, 4, 3)``."""
        return self.vertices[self.tets]

    def signed_volumes(self) -> np.ndarray:
        c = self.corners()
        return np.linalg.det(c[:, 1:] - c[:, :1]) / 6.0

    def boundary_faces_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        bf = self.boundary_faces
        return bf[bf[:, 2] == int(tag)][:, :2]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Global edges (sorted vertex pairs) and the tet-to-edge table."""
        if "edges" not in self._cache:
            pairs = np.sort(self.tets[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
            uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
            self._cache["edges"] = (uniq, inv.reshape(-1, 6))
        return self._cache["edges"]

    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Global faces (sorted vertex triples) and the tet-to-face table."""
        if "faces" not in self._cache:
            tri = np.sort(self.tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
            uniq, inv = np.unique(tri, axis=0, return_inverse=True)
            self._cache["faces"] = (uniq, inv.reshape(-1, 4))
        return self._cache["faces"]

    def dump(self, path: str | Path) -> None:
        """Write the plain-text ``v`` / ``t`` / ``bf`` line format."""
        lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        lines += ["t {} {} {} {}".format(*t) for t in self.tets.tolist()]
        lines += [
            f"bf {t} {f} {BoundaryTag(tag).name}"
            for t, f, tag in self.boundary_faces.tolist()
        ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class AffineMap:
    """``F(x) = jacobian @ x + offset`` from the reference tetrahedron."""

    jacobian: np.ndarray
    offset: np.ndarray
    det: float
    inverse_jacobian: np.ndarray

    def __call__(self, ref_points: np.ndarray) -> np.ndarray:
        return ref_points @ self.jacobian.T + self.offset


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    shape_regularity: float


def affine_map_from_corners(corners: np.ndarray) -> AffineMap:
    corners = np.asarray(corners, dtype=float)
    B = (corners[1:] - corners[0]).T
    det = float(np.linalg.det(B))
    scale = np.abs(B).max()
    if scale == 0.0 or abs(det) <= 1e-14 * scale**3:
        raise MeshIntegrityError("degenerate tetrahedron")
    return AffineMap(B, corners[0].copy(), det, np.linalg.inv(B))


def element_map(mesh: Mesh, K: int) -> AffineMap:
    if not 0 <= K < mesh.n_tets:
        raise InvalidArgumentError(f"tet index {K} out of range")
    return affine_map_from_corners(mesh.vertices[mesh.tets[K]])


def mesh_stats(mesh: Mesh) -> MeshStats:
    c = mesh.corners()
    diam = element_diameters(mesh)
    B = np.transpose(c[:, 1:] - c[:, :1], (0, 2, 1))
    sv = np.linalg.svd(B, compute_uv=False)
    gamma = sv[:, 0] / diam + diam / sv[:, -1]
    return MeshStats(float(diam.max()), float(gamma.max()))


def element_diameters(mesh: Mesh) -> np.ndarray:
    c = mesh.corners()
    a = [i for i, _ in LOCAL_EDGES]
    b = [j for _, j in LOCAL_EDGES]
    return np.linalg.norm(c[:, a] - c[:, b], axis=2).max(axis=1)


# --------------------------------------------------------------------------
# construction


def _orient(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    c = vertices[tets]
    det = np.linalg.det(c[:, 1:] - c[:, :1])
    tets = tets.copy()
    neg = det < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3], tets[neg, 2].copy()
    return tets


def _boundary_faces(tets: np.ndarray) -> np.ndarray:
    """``(tet, local_face)`` for faces seen once; audits face incidence."""
    tri = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    _, inv, counts = np.unique(tri, axis=0, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        raise MeshIntegrityError("face shared by more than two tetrahedra")
    once = np.flatnonzero(counts[inv] == 1)
    return np.column_stack([once // 4, once % 4])


def _tag_geometric(vertices: np.ndarray, tets: np.ndarray, bf: np.ndarray) -> np.ndarray:
    face_verts = np.array(LOCAL_FACES)[bf[:, 1]]
    pts = vertices[tets[bf[:, 0][:, None], face_verts]]  # (nb, 3, 3)
    tags = np.full(len(bf), -1, dtype=np.int64)
    for level, tag in ((1.0, BoundaryTag.IMPEDANCE), (0.5, BoundaryTag.PEC)):
        on_plane = np.any(
            np.all(np.abs(np.abs(pts) - level) < GEOM_TOL, axis=1)
            & (np.ptp(pts, axis=1) < GEOM_TOL),
            axis=1,
        )
        tags[on_plane & (tags < 0)] = int(tag)
    if np.any(tags < 0):
        raise MeshIntegrityError("boundary face not on a known boundary plane")
    return np.column_stack([bf, tags])


def _kuhn_grid(axis_coords, keep_cell, volume: float, name: str, geometry: str) -> Mesh:
    m = len(axis_coords) - 1
    X, Y, Z = np.meshgrid(axis_coords, axis_coords, axis_coords, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (m + 1) + j) * (m + 1) + k

    mids = 0.5 * (axis_coords[:-1] + axis_coords[1:])
    cells = [
        (i, j, k)
        for i, j, k in itertools.product(range(m), repeat=3)
        if keep_cell(mids[i], mids[j], mids[k])
    ]
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [np.zeros(3, dtype=np.int64)]
        for d in perm:
            step = path[-1].copy()
            step[d] = 1
            path.append(step)
        tets.append(np.column_stack([vid(*(cells + p).T) for p in path]))
    tets = np.stack(tets, axis=1).reshape(-1, 4)

    used, tets = np.unique(tets, return_inverse=True)
    tets = tets.reshape(-1, 4)
    vertices = vertices[used]
    tets = _orient(vertices, tets)
    bf = _tag_geometric(vertices, tets, _boundary_faces(tets))
    return Mesh(vertices, tets, bf, volume, name, geometry)


def build_cube_mesh(n: int) -> Mesh:
    """Kuhn mesh of ``(-1, 1)^3`` with ``n`` cells per axis; all faces impedance."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    coords = np.linspace(-1.0, 1.0, int(n) + 1)
    return _kuhn_grid(coords, lambda x, y, z: True, 8.0, f"cube-{n}", "cube")


def build_cube_with_hole_mesh(n: int) -> Mesh:
    """Kuhn mesh of ``(-1,1)^3 minus [-1/2,1/2]^3``.

    The 26 blocks cut by the planes -1, -1/2, 1/2, 1 are each split into
    ``n^3`` cells. The outer boundary is impedance, the inner one PEC.
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    n = int(n)
    coords = np.concatenate(
        [
            np.linspace(-1.0, -0.5, n + 1),
            np.linspace(-0.5, 0.5, n + 1)[1:],
            np.linspace(0.5, 1.0, n + 1)[1:],
        ]
    )

    def outside_hole(x, y, z):
        return max(abs(x), abs(y), abs(z)) > 0.5

    return _kuhn_grid(coords, outside_hole, 7.0, f"cube-hole-{n}", "cube-hole")


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every tet is split into eight.

    The inner octahedron is cut along its shortest diagonal; ties go to the
    first candidate in the order (01|23), (02|13), (03|12).
    """
    edges, tet_edges = mesh.edges()
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    m = nv + tet_edges  # midpoint ids indexed by local edge number
    v = mesh.tets
    # local edge numbers: 01 02 03 12 13 23 -> 0..5
    m01, m02, m03, m12, m13, m23 = (m[:, i] for i in range(6))
    children = [
        np.column_stack([v[:, 0], m01, m02, m03]),
        np.column_stack([m01, v[:, 1], m12, m13]),
        np.column_stack([m02, m12, v[:, 2], m23]),
        np.column_stack([m03, m13, m23, v[:, 3]]),
    ]
    pairs = [(m01, m23), (m02, m13), (m03, m12)]
    lengths = np.stack(
        [np.linalg.norm(vertices[a] - vertices[b], axis=1) for a, b in pairs], axis=1
    )
    shortest = lengths.min(axis=1, keepdims=True)
    choice = np.argmax(lengths <= shortest * (1 + 1e-12), axis=1)
    octa = np.empty((len(v), 4, 4), dtype=np.int64)
    for c in range(3):
        a, b = pairs[c]
        (p, p2), (q, q2) = [pairs[j] for j in range(3) if j != c]
        ring = [p, q, p2, q2]
        sel = choice == c
        for r in range(4):
            octa[sel, r] = np.column_stack(
                [a[sel], b[sel], ring[r][sel], ring[(r + 1) % 4][sel]]
            )
    tets = np.concatenate(
        [np.stack(children, axis=1), octa], axis=1
    ).reshape(-1, 4)
    tets = _orient(vertices, tets)

    parent_tags = {}
    for t, f, tag in mesh.boundary_faces.tolist():
        a, b, c = (int(v[t, i]) for i in LOCAL_FACES[f])
        ev = {frozenset(e): int(m[t, i]) for i, e in enumerate(LOCAL_EDGES)}
        la, lb, lc = LOCAL_FACES[f]
        mab, mbc, mac = ev[frozenset((la, lb))], ev[frozenset((lb, lc))], ev[frozenset((la, lc))]
        for tri in ((a, mab, mac), (mab, b, mbc), (mac, mbc, c), (mab, mbc, mac)):
            parent_tags[tuple(sorted(tri))] = tag
    bf = _boundary_faces(tets)
    tri = np.sort(tets[bf[:, 0][:, None], np.array(LOCAL_FACES)[bf[:, 1]]], axis=1)
    try:
        tags = [parent_tags[tuple(t)] for t in tri.tolist()]
    except KeyError as exc:
        raise MeshIntegrityError("refined boundary face without parent face") from exc
    bf = np.column_stack([bf, np.array(tags, dtype=np.int64)])
    return Mesh(vertices, tets, bf, mesh.volume, mesh.name + "+r", mesh.geometry)


def audit_mesh(mesh: Mesh, rtol: float = 1e-12) -> None:
    """Raise `MeshIntegrityError` unless orientation, incidence and volume are sound."""
    vol = mesh.signed_volumes()
    if np.any(vol <= 0):
        raise MeshIntegrityError("non-positive tet volume")
    bf = _boundary_faces(mesh.tets)
    if len(bf) != len(mesh.boundary_faces):
        raise MeshIntegrityError("boundary face list out of date")
    if abs(vol.sum() - mesh.volume) > rtol * mesh.volume:
        raise MeshIntegrityError("tet volumes do not add up to the domain volume")
