"""Quadrature on the reference tetrahedron and triangle.

Reference tetrahedron: vertices 0, e1, e2, e3 (volume 1/6).
Reference triangle: vertices 0, e1, e2 (area 1/2).

Degrees 1 and 2 use the classical symmetric rules; higher degrees use
conical (collapsed Gauss-Jacobi) product rules, which have positive
weights, interior points and arbitrary exactness.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import InvalidArgumentError

MAX_TABULATED_DEGREE = 14


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self) -> int:
        return len(self.weights)


def _gauss_jacobi_01(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight ``(1 - u)**alpha``."""
    t, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (1.0 + t), w * 0.5 ** (alpha + 1)


@lru_cache(maxsize=None)
def _conical_tet(degree: int) -> QuadRule:
    n = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi_01(n, 2.0)
    v, wv = _gauss_jacobi_01(n, 1.0)
    s, ws = _gauss_jacobi_01(n, 0.0)
    U, V, S = np.meshgrid(u, v, s, indexing="ij")
    W = np.einsum("i,j,k->ijk", wu, wv, ws)
    z = U
    y = V * (1.0 - U)
    x = S * (1.0 - U) * (1.0 - V)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return QuadRule(pts, W.ravel(), degree)


@lru_cache(maxsize=None)
def _conical_tri(degree: int) -> QuadRule:
    n = max(1, (degree + 2) // 2)
    v, wv = _gauss_jacobi_01(n, 1.0)
    s, ws = _gauss_jacobi_01(n, 0.0)
    V, S = np.meshgrid(v, s, indexing="ij")
    W = np.outer(wv, ws)
    pts = np.column_stack([(S * (1.0 - V)).ravel(), V.ravel()])
    return QuadRule(pts, W.ravel(), degree)


def _tet_degree2() -> QuadRule:
    a, b = 0.1381966011250105, 0.5854101966249685
    pts = np.array([[a, a, a], [b, a, a], [a, b, a], [a, a, b]])
    return QuadRule(pts, np.full(4, 1.0 / 24.0), 2)


def _tri_degree2() -> QuadRule:
    pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
    return QuadRule(pts, np.full(3, 1.0 / 6.0), 2)


def tet_rule(degree: int) -> QuadRule:
    """Rule integrating all polynomials of total degree <= ``degree`` exactly."""
    if degree < 0:
        raise InvalidArgumentError("quadrature degree must be non-negative")
    if degree <= 1:
        return QuadRule(np.full((1, 3), 0.25), np.array([1.0 / 6.0]), 1)
    if degree == 2:
        return _tet_degree2()
    return _conical_tet(int(degree))


def tri_rule(degree: int) -> QuadRule:
    if degree < 0:
        raise InvalidArgumentError("quadrature degree must be non-negative")
    if degree <= 1:
        return QuadRule(np.full((1, 2), 1.0 / 3.0), np.array([0.5]), 1)
    if degree == 2:
        return _tri_degree2()
    return _conical_tri(int(degree))


# red-refinement children of the reference tet, as corner lists
_REF_CORNERS = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


def _red_children(corners: np.ndarray) -> list[np.ndarray]:
    m = {(i, j): 0.5 * (corners[i] + corners[j]) for i in range(4) for j in range(i + 1, 4)}
    c = corners
    return [
        np.array([c[0], m[0, 1], m[0, 2], m[0, 3]]),
        np.array([m[0, 1], c[1], m[1, 2], m[1, 3]]),
        np.array([m[0, 2], m[1, 2], c[2], m[2, 3]]),
        np.array([m[0, 3], m[1, 3], m[2, 3], c[3]]),
        np.array([m[0, 2], m[1, 3], m[0, 1], m[0, 3]]),
        np.array([m[0, 2], m[1, 3], m[0, 3], m[2, 3]]),
        np.array([m[0, 2], m[1, 3], m[2, 3], m[1, 2]]),
        np.array([m[0, 2], m[1, 3], m[1, 2], m[0, 1]]),
    ]


@lru_cache(maxsize=None)
def subdivided_tet_rule(degree: int, levels: int = 1) -> QuadRule:
    """Composite rule over ``8**levels`` red-refined copies of the reference tet."""
    base = tet_rule(degree)
    cells = [_REF_CORNERS]
    for _ in range(levels):
        cells = [child for c in cells for child in _red_children(c)]
    pts, wts = [], []
    for c in cells:
        B = (c[1:] - c[0]).T
        pts.append(base.points @ B.T + c[0])
        wts.append(base.weights * abs(np.linalg.det(B)))
    return QuadRule(np.vstack(pts), np.concatenate(wts), degree)


def tet_barycentric(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return np.column_stack([1.0 - points.sum(axis=1), points])


def integrate(rule: QuadRule, amap, f) -> complex:
    """``|det B| * sum_i w_i f(F(x_i))`` for a tet map, or the surface analogue.

    ``amap`` is an `AffineMap` for volume rules. For triangle rules pass the
    three physical corners as a ``(3, 3)`` array instead; the Gram factor is
    twice the physical face area.
    """
    if rule.points.shape[1] == 3:
        x = amap(rule.points)
        scale = abs(amap.det)
    else:
        c = np.asarray(amap, dtype=float)
        x = c[0] + rule.points @ (c[1:] - c[0])
        scale = np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0]))
    vals = np.asarray(f(x))
    return scale * np.tensordot(rule.weights, vals, axes=(0, 0))
