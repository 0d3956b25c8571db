"""Lattices of Bäcklund transforms of isothermic surfaces.

Builds the associated family of flat connections of a smooth isothermic
surface in the light-cone model, runs Darboux/Bäcklund transforms and their
Bianchi permutability to fill a lattice of surfaces, samples the lattice at
a point, and certifies that the sampled net is a discrete special isothermic
surface of the expected type.
"""

__version__ = "0.1.0"

from .pseudo import (
    CONFORMAL_3D,
    Bivector,
    NullLine,
    PseudoVector,
    Signature,
    cross_ratio,
    circle_span,
    inner,
    lorentz_boost,
    wedge_apply,
)

__all__ = [
    "CONFORMAL_3D",
    "Bivector",
    "NullLine",
    "PseudoVector",
    "Signature",
    "cross_ratio",
    "circle_span",
    "inner",
    "lorentz_boost",
    "wedge_apply",
    "__version__",
]
