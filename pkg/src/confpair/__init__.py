"""Numerical engine for conformal and isometric pairs of immersions.

Implements the Lorentzian light-cone dictionary between conformal and
isometric submanifold geometry, the fiberwise construction of shared normal
subbundles and common rulings for pairs of immersions, ruled extensions,
conformal nullity searches, and the associated rigidity criteria, all on
sampled chart grids at desk scale.
"""

__version__ = "0.1.0"
