"""Numerical laboratory for the half-space beta random walk in random environment."""

import os

# The bundled TBB is too old for numba; prefer OpenMP unless the user chose.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from betarwre.core_model import (
    Environment,
    FullParams,
    HalfLatticePoint,
    ModelParams,
    Window,
    sample_environment,
)

__version__ = "0.1.0"

__all__ = [
    "Environment",
    "FullParams",
    "HalfLatticePoint",
    "ModelParams",
    "Window",
    "sample_environment",
    "__version__",
]
