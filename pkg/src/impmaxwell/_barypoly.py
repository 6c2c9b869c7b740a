"""Polynomials in the four barycentric coordinates of a tetrahedron.

Vector fields are written as ``sum_i q_i * grad(lambda_i)``, which makes
them covariant by construction: on any affine element the physical field
uses the physical barycentric gradients.
"""

from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np


class BaryPoly:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def var(cls, i: int) -> "BaryPoly":
        e = [0, 0, 0, 0]
        e[i] = 1
        return cls({tuple(e): 1.0})

    @classmethod
    def const(cls, c: float) -> "BaryPoly":
        return cls({(0, 0, 0, 0): float(c)})

    def __add__(self, other):
        out = defaultdict(float, self.terms)
        for k, v in other.terms.items():
            out[k] += v
        return BaryPoly(out)

    def __neg__(self):
        return BaryPoly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, BaryPoly):
            return BaryPoly({k: v * other for k, v in self.terms.items()})
        out = defaultdict(float)
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                out[tuple(a + b for a, b in zip(k1, k2))] += v1 * v2
        return BaryPoly(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = BaryPoly.const(1.0)
        for _ in range(n):
            out = out * self
        return out

    def diff(self, i: int) -> "BaryPoly":
        out = {}
        for k, v in self.terms.items():
            if k[i]:
                e = list(k)
                e[i] -= 1
                out[tuple(e)] = v * k[i]
        return BaryPoly(out)

    def __call__(self, lam: np.ndarray) -> np.ndarray:
        """Evaluate at barycentric points ``lam`` of shape ``(npts, 4)``."""
        out = np.zeros(len(lam))
        for k, v in self.terms.items():
            out += v * np.prod(lam ** np.array(k), axis=1)
        return out


def product(*factors):
    out = BaryPoly.const(1.0)
    for f in factors:
        out = out * f
    return out


def monomials(variables, degree):
    """All monomials of exactly ``degree`` in the given barycentric indices."""
    return [
        product(*[BaryPoly.var(i) for i in combo])
        for combo in itertools.combinations_with_replacement(variables, degree)
    ]


class BaryField:
    """Vector field ``sum_i coef[i] * grad(lambda_i)``."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        self.coef = list(coef)

    @classmethod
    def gradient(cls, q: BaryPoly) -> "BaryField":
        return cls([q.diff(i) for i in range(4)])

    @classmethod
    def whitney(cls, a: int, b: int) -> "BaryField":
        coef = [BaryPoly() for _ in range(4)]
        coef[b] = coef[b] + BaryPoly.var(a)
        coef[a] = coef[a] - BaryPoly.var(b)
        return cls(coef)

    def scaled(self, q: BaryPoly) -> "BaryField":
        return BaryField([c * q for c in self.coef])

    def values(self, lam: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """Field values, shape ``(npts, 3)``; ``grads`` rows are grad(lambda_i)."""
        return sum(np.outer(c(lam), grads[i]) for i, c in enumerate(self.coef))

    def curl(self, lam: np.ndarray, grads: np.ndarray) -> np.ndarray:
        out = np.zeros((len(lam), 3))
        for i, c in enumerate(self.coef):
            for j in range(4):
                d = c.diff(j)
                if d.terms:
                    out += np.outer(d(lam), np.cross(grads[j], grads[i]))
        return out
