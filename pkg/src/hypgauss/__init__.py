"""Volume-preserving Gauss curvature (K^alpha) flow of convex bodies in H^{n+1}, n = 1, 2."""

from .errors import (ConfigError, ConvexityLossError, DegenerateSurfaceError,
                     GridConfigError, HypGaussError, OutOfModelError, RecenterError,
                     StiffnessError, VolumeCorrectionError, WindowError)
from .spheregrid import ScalarField, SphereGrid, make_grid

__all__ = [
    "ConfigError", "ConvexityLossError", "DegenerateSurfaceError", "GridConfigError",
    "HypGaussError", "OutOfModelError", "RecenterError", "ScalarField", "SphereGrid",
    "StiffnessError", "VolumeCorrectionError", "WindowError", "make_grid",
]
