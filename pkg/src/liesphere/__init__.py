"""Numerical toolkit for Ribaucour transforms of Legendre maps.

Subpackages:

- pseudo: signature-exact linear algebra in R^{p,q} and the exterior-square
  machinery of 4-dimensional (2,2)-spaces.
- grids: discretized domains, finite differences, isometric transport steps,
  plaquette holonomy, parallel frames.
- ribaucour: Legendre fields, sphere congruences, the quotient-bundle
  flatness verdict, the rank-4 bundle of two transforms, Demoulin families.
- cube: the eight-vertex permutability construction with its sign cocycle.
- spaceform: sphere immersions, the enveloping endomorphism field, shape
  operators, the Legendre lift, and the descent of families to point maps.
- dupin: the worked example (a sphere with two circle transforms) in closed
  form, with verification, family census, and meridian export.
- cli: the command-line front end.
"""

from .pseudo import MetricSpace, Subspace, span
from .grids import Axis, Grid, SectionField, SubbundleField

__all__ = [
    "MetricSpace",
    "Subspace",
    "span",
    "Axis",
    "Grid",
    "SectionField",
    "SubbundleField",
]

__version__ = "0.1.0"
