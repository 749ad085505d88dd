"""relightkit: single-image intrinsic decomposition and relighting.

Decomposes images into albedo, surface normals and second-order
spherical-harmonic lighting under a Lambertian model, and re-renders them
under new lightings. Ships a differentiable renderer, a closed-form light
solver, a synthetic multi-lit data generator, a direct per-pair fitter, a
compact trainable decomposer, evaluation metrics, a CLI and an HTTP service.
"""

from .errors import (DataFormatError, InsufficientDataError, InvalidInputError,
                     InvalidStateError, OptimizationFailedError, RelightError)
from .image import ImagePlane, Mask, NormalMap
from .losses import LossWeights, PairEstimate
from .sh import ShLighting

__version__ = "0.1.0"

__all__ = [
    "ImagePlane", "Mask", "NormalMap", "ShLighting", "LossWeights", "PairEstimate",
    "RelightError", "InvalidInputError", "InsufficientDataError", "InvalidStateError",
    "OptimizationFailedError", "DataFormatError", "__version__",
]
