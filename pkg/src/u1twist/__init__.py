"""Finite-volume checks of twist-based correlation decay bounds for U(1)-symmetric
spin and fermion models on graph lattices."""

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    Lattice,
    build_chain,
    build_sierpinski,
    build_square,
    certify_dimension,
    distances_from,
    estimate_dimension,
    sphere,
)
from .spectral import SpectralData, ground_projector, ground_sector  # noqa: E402

__all__ = [
    "__version__",
    "Lattice",
    "build_chain",
    "build_sierpinski",
    "build_square",
    "certify_dimension",
    "distances_from",
    "estimate_dimension",
    "sphere",
    "SpectralData",
    "ground_projector",
    "ground_sector",
]
