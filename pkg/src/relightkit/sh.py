"""Second-order real spherical harmonics for diffuse irradiance.

The nine basis functions use the irradiance environment-map convention: the
Lambertian cosine-lobe attenuation is folded into the constants, so the
shading of a surface point is a plain dot product between the 9-vector basis
evaluated at its normal and a column of lighting coefficients.

Basis ordering (fixed, also used by the 27-float wire format):
    0: 1    1: y    2: z    3: x    4: xy    5: yz    6: 3z^2-1    7: xz    8: x^2-y^2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

C1 = 0.429043
C2 = 0.511664
C3 = 0.743125
C4 = 0.886227
C5 = 0.247708

#: Tolerance on the norm of normals fed to basis evaluation.
UNIT_TOL = 1e-4

BASIS_NAMES = ("1", "y", "z", "x", "xy", "yz", "3z2-1", "xz", "x2-y2")


@dataclass(frozen=True)
class ShLighting:
    """9 x 3 lighting coefficients: rows follow the basis order, columns are RGB."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (9, 3):
            raise InvalidInputError(f"lighting coefficients must be 9x3, got {c.shape}")
        if not np.isfinite(c).all():
            raise InvalidInputError("lighting coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def to_flat(self) -> list[float]:
        """Row-major 27-element list (basis-major, RGB-minor); the wire format."""
        return [float(v) for v in self.coeffs.reshape(-1)]

    @classmethod
    def from_flat(cls, values) -> "ShLighting":
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (27,):
            raise InvalidInputError(f"flat lighting must have 27 entries, got {arr.shape}")
        return cls(arr.reshape(9, 3))

    @classmethod
    def uniform(cls, rgb=(1.0, 1.0, 1.0)) -> "ShLighting":
        """DC-only light producing flat shading equal to ``rgb``."""
        coeffs = np.zeros((9, 3))
        coeffs[0] = np.asarray(rgb, dtype=np.float64) / C4
        return cls(coeffs)


def _check_unit(n: np.ndarray) -> None:
    norms = np.linalg.norm(n, axis=-1)
    if np.abs(norms - 1.0).max() > UNIT_TOL:
        worst = float(np.abs(norms - 1.0).max())
        raise InvalidInputError(f"normals must be unit length, worst |norm-1| = {worst:.3g}")


def sh_basis_values(n: np.ndarray) -> np.ndarray:
    """Evaluate the basis at (..., 3) direction vectors, returning (..., 9).

    No unit check; polynomial evaluation at whatever vectors are given.
    """
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    h = np.empty(n.shape[:-1] + (9,), dtype=n.dtype)
    h[..., 0] = C4
    h[..., 1] = 2.0 * C2 * y
    h[..., 2] = 2.0 * C2 * z
    h[..., 3] = 2.0 * C2 * x
    h[..., 4] = 2.0 * C1 * x * y
    h[..., 5] = 2.0 * C1 * y * z
    h[..., 6] = C3 * z * z - C5
    h[..., 7] = 2.0 * C1 * x * z
    h[..., 8] = C1 * (x * x - y * y)
    return h


def sh_basis(n) -> np.ndarray:
    """Evaluate the 9 basis functions at a unit direction."""
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (3,):
        raise InvalidInputError(f"direction must be a 3-vector, got shape {n.shape}")
    _check_unit(n)
    return sh_basis_values(n)


def sh_basis_jacobian(n) -> np.ndarray:
    """Exact 9x3 Jacobian d h / d n of the closed-form basis.

    Derivatives of the raw polynomials; the chain rule for any unit-norm
    reprojection of the argument belongs to the caller (the renderer).
    """
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (3,):
        raise InvalidInputError(f"direction must be a 3-vector, got shape {n.shape}")
    _check_unit(n)
    x, y, z = n
    j = np.zeros((9, 3))
    j[1, 1] = 2.0 * C2
    j[2, 2] = 2.0 * C2
    j[3, 0] = 2.0 * C2
    j[4] = (2.0 * C1 * y, 2.0 * C1 * x, 0.0)
    j[5] = (0.0, 2.0 * C1 * z, 2.0 * C1 * y)
    j[6, 2] = 2.0 * C3 * z
    j[7] = (2.0 * C1 * z, 0.0, 2.0 * C1 * x)
    j[8] = (2.0 * C1 * x, -2.0 * C1 * y, 0.0)
    return j


def sh_basis_vjp(n: np.ndarray, grad_h: np.ndarray) -> np.ndarray:
    """Contract (..., 9) basis gradients to (..., 3) direction gradients.

    Vectorized equivalent of ``grad_h @ sh_basis_jacobian(n)`` per pixel.
    """
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    g1, g2, g3 = grad_h[..., 1], grad_h[..., 2], grad_h[..., 3]
    g4, g5, g6 = grad_h[..., 4], grad_h[..., 5], grad_h[..., 6]
    g7, g8 = grad_h[..., 7], grad_h[..., 8]
    out = np.empty_like(n)
    out[..., 0] = 2.0 * C2 * g3 + 2.0 * C1 * (y * g4 + z * g7 + x * g8)
    out[..., 1] = 2.0 * C2 * g1 + 2.0 * C1 * (x * g4 + z * g5 - y * g8)
    out[..., 2] = 2.0 * C2 * g2 + 2.0 * C1 * (y * g5 + x * g7) + 2.0 * C3 * z * g6
    return out
