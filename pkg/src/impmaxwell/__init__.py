"""Nedelec (type I) finite elements for time-harmonic Maxwell with impedance boundary conditions."""

from .assembly import Variant, WaveParams
from .cases import manufactured_case
from .mesh import build_cube_mesh, build_cube_with_hole_mesh

__all__ = [
    "Variant",
    "WaveParams",
    "build_cube_mesh",
    "build_cube_with_hole_mesh",
    "manufactured_case",
]
__version__ = "0.1.0"
