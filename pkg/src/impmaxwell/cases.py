"""Manufactured solutions with closed-form curls and sources.

All callables take points of shape ``(..., 3)`` and return complex arrays
of the same shape. ``impedance_g_T(x, n)`` is the trace
``curl E x n - i k E_T`` for the outward unit normal ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

Field = Callable[[np.ndarray], np.ndarray]

CASE_NAMES = ("cube-smooth", "cube-hole", "const-field")
_DIRECTION = np.array([0.0, -1.0, 1.0])


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    k: float
    exact_E: Field
    exact_curl_E: Field
    source_f: Field
    geometry: str | None  # None: valid on any geometry
    pec_inner: bool = False

    def impedance_g_T(self, x: np.ndarray, n: np.ndarray) -> np.ndarray:
        E = self.exact_E(x)
        n = np.broadcast_to(n, E.shape)
        E_t = E - np.sum(E * n, axis=-1, keepdims=True) * n
        return np.cross(self.exact_curl_E(x), n) - 1j * self.k * E_t


def _scalar_times_direction(psi: np.ndarray) -> np.ndarray:
    return psi[..., None] * _DIRECTION


def _cube_smooth(k: float) -> ManufacturedCase:
    # E = curl(sin(k x1) (1,1,1)) = k cos(k x1) (0,-1,1)
    def E(x):
        return _scalar_times_direction(k * np.cos(k * x[..., 0])).astype(complex)

    def curl_E(x):
        s = k * k * np.sin(k * x[..., 0])
        return np.stack([np.zeros_like(s), s, s], axis=-1).astype(complex)

    def f(x):
        return np.zeros(x.shape, dtype=complex)

    return ManufacturedCase("cube-smooth", k, E, curl_E, f, "cube")


def _cube_hole(k: float) -> ManufacturedCase:
    # E = psi (0,-1,1) with psi = F1(x1) F2(x2) F3(x3),
    # F1 = k cos(k x1) (x1^2 - 1/4), F2 = x2^2 - 1/4, F3 = x3^2 - 1/4
    def factors(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        c, s = np.cos(k * x1), np.sin(k * x1)
        q1 = x1 * x1 - 0.25
        F1 = k * c * q1
        dF1 = k * (2.0 * x1 * c - k * s * q1)
        d2F1 = k * (2.0 * c - 4.0 * k * x1 * s - k * k * c * q1)
        F2, dF2 = x2 * x2 - 0.25, 2.0 * x2
        F3, dF3 = x3 * x3 - 0.25, 2.0 * x3
        return (F1, dF1, d2F1), (F2, dF2, 2.0), (F3, dF3, 2.0)

    def E(x):
        (F1, _, _), (F2, _, _), (F3, _, _) = factors(x)
        return _scalar_times_direction(F1 * F2 * F3).astype(complex)

    def grad_psi(x):
        (F1, dF1, _), (F2, dF2, _), (F3, dF3, _) = factors(x)
        return np.stack([dF1 * F2 * F3, F1 * dF2 * F3, F1 * F2 * dF3], axis=-1)

    def curl_E(x):
        return np.cross(grad_psi(x), _DIRECTION).astype(complex)

    def f(x):
        (F1, dF1, d2F1), (F2, dF2, d2F2), (F3, dF3, d2F3) = factors(x)
        H11, H22, H33 = d2F1 * F2 * F3, F1 * d2F2 * F3, F1 * F2 * d2F3
        H12, H13, H23 = dF1 * dF2 * F3, dF1 * F2 * dF3, F1 * dF2 * dF3
        # grad(div E) = H d with d = (0,-1,1)
        grad_div = np.stack([-H12 + H13, -H22 + H23, -H23 + H33], axis=-1)
        lap_plus = H11 + H22 + H33 + k * k * F1 * F2 * F3
        return (grad_div - _scalar_times_direction(lap_plus)).astype(complex)

    return ManufacturedCase("cube-hole", k, E, curl_E, f, "cube-hole", pec_inner=True)


def _const_field(k: float) -> ManufacturedCase:
    e1 = np.array([1.0, 0.0, 0.0])

    def E(x):
        return np.broadcast_to(e1, x.shape).astype(complex)

    def curl_E(x):
        return np.zeros(x.shape, dtype=complex)

    def f(x):
        return -k * k * E(x)

    return ManufacturedCase("const-field", k, E, curl_E, f, None)


def manufactured_case(name: str, k: float) -> ManufacturedCase:
    builders = {"cube-smooth": _cube_smooth, "cube-hole": _cube_hole, "const-field": _const_field}
    if name not in builders:
        raise InvalidArgumentError(f"unknown case {name!r}; choose from {CASE_NAMES}")
    return builders[name](float(k))


def zero_case(k: float, geometry: str | None = None) -> ManufacturedCase:
    """Homogeneous data; the exact solution is zero."""

    def zero(x):
        return np.zeros(x.shape, dtype=complex)

    return ManufacturedCase("zero", float(k), zero, zero, zero, geometry)
