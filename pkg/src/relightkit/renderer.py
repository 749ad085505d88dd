"""Differentiable Lambertian forward model.

A pixel's color is the elementwise product of its albedo with the shading
obtained by projecting its normal onto the spherical-harmonic lighting:
I(p) = A(p) * (L^T h(n(p))). Nothing in the differentiable path clamps, so
shading and renders may leave [0, 1]; clamping happens only when preparing
losses or exporting for display.

Off-mask pixels are zero in every output, forward and backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sh
from .errors import InvalidInputError
from .image import ImagePlane, Mask, NormalMap, check_same_grid


@dataclass(frozen=True)
class RenderGradients:
    """Reverse-mode derivatives of a render.

    ``d_normals_raw`` is the gradient with respect to free (unnormalized)
    normal parameters: the tangent-space projection (I - n n^T) is applied,
    which is the full normalize-on-use chain rule at unit norm. Callers that
    keep raw parameters of non-unit length scale by 1 / ||u|| per pixel.
    """

    d_albedo: np.ndarray       # (H, W, 3)
    d_normals_raw: np.ndarray  # (H, W, 3)
    d_lighting: np.ndarray     # (9, 3)


def _check_normals_on_mask(normals: NormalMap, mask: Mask) -> None:
    fg = mask.bits
    if not fg.any():
        return
    norms = np.linalg.norm(normals.data[fg], axis=-1)
    if np.abs(norms - 1.0).max() > sh.UNIT_TOL:
        worst = float(np.abs(norms - 1.0).max())
        raise InvalidInputError(f"normals not unit on mask, worst |norm-1| = {worst:.3g}")


def shading_values(normals: np.ndarray, coeffs: np.ndarray,
                   mask_bits: np.ndarray | None = None) -> np.ndarray:
    """Shading (..., 3) from normals (..., 3) and 9x3 coefficients."""
    s = sh.sh_basis_values(normals) @ coeffs.astype(normals.dtype)
    if mask_bits is not None:
        s = s * mask_bits[..., None]
    return s


def shading(normals: NormalMap, light: sh.ShLighting, mask: Mask) -> ImagePlane:
    """Per-pixel irradiance under ``light``; may be negative or exceed 1."""
    check_same_grid(normals, mask)
    _check_normals_on_mask(normals, mask)
    return ImagePlane(shading_values(normals.data, light.coeffs, mask.bits), "linear-rgb")


def render(albedo: ImagePlane, normals: NormalMap, light: sh.ShLighting,
           mask: Mask) -> ImagePlane:
    """Forward model: albedo times shading, zero off-mask."""
    albedo.require_space("linear-rgb")
    check_same_grid(albedo, normals, mask)
    if albedo.channels != 3:
        raise InvalidInputError("albedo must have 3 channels")
    if albedo.data.min() < 0.0 or albedo.data.max() > 1.0:
        raise InvalidInputError("albedo values must lie in [0, 1]")
    _check_normals_on_mask(normals, mask)
    s = shading_values(normals.data, light.coeffs, mask.bits)
    return ImagePlane(albedo.data * s, "linear-rgb")


def render_values(albedo: np.ndarray, normals: np.ndarray, coeffs: np.ndarray,
                  mask_bits: np.ndarray) -> np.ndarray:
    """Unchecked array-level render used by hot loops."""
    return albedo * shading_values(normals, coeffs, mask_bits)


def render_vjp(grad_out: np.ndarray, albedo: np.ndarray, normals: np.ndarray,
               coeffs: np.ndarray, mask_bits: np.ndarray):
    """Array-level reverse pass.

    Returns (d_albedo, d_normals, d_lighting) where d_normals is the gradient
    with respect to the normal vectors as given, without any unit-norm
    projection. Off-mask pixels contribute nothing and receive zeros.
    """
    g = grad_out * mask_bits[..., None]
    h = sh.sh_basis_values(normals)          # (..., 9)
    s = h @ coeffs.astype(normals.dtype)     # (..., 3)
    d_albedo = g * s
    ds = g * albedo                          # upstream into shading
    # d_lighting[k, c] = sum_p h_k(p) ds_c(p)
    d_lighting = h.reshape(-1, 9).T @ ds.reshape(-1, 3)
    # pull shading gradient back through the basis to the normals
    dh = ds @ coeffs.T.astype(normals.dtype)  # (..., 9)
    d_normals = sh.sh_basis_vjp(normals, dh) * mask_bits[..., None]
    return d_albedo, d_normals, d_lighting


def project_tangent(normals: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Apply the normalize-on-use chain rule (I - n n^T) at unit norm."""
    dot = (grad * normals).sum(axis=-1, keepdims=True)
    return grad - dot * normals


def render_backward(grad_out: ImagePlane, albedo: ImagePlane, normals: NormalMap,
                    light: sh.ShLighting, mask: Mask) -> RenderGradients:
    """Exact reverse-mode derivatives of :func:`render` for all three inputs."""
    check_same_grid(grad_out, albedo, normals, mask)
    if grad_out.channels != 3:
        raise InvalidInputError("grad_out must have 3 channels")
    d_albedo, d_normals, d_lighting = render_vjp(
        grad_out.data, albedo.data, normals.data, light.coeffs, mask.bits)
    d_normals_raw = project_tangent(normals.data, d_normals) * mask.bits[..., None]
    return RenderGradients(d_albedo=d_albedo, d_normals_raw=d_normals_raw,
                           d_lighting=d_lighting)


def relight(albedo: ImagePlane, normals: NormalMap, target_light: sh.ShLighting,
            mask: Mask) -> ImagePlane:
    """Re-render the scene under a different lighting.

    Same linear-space output as :func:`render`; use
    :func:`relightkit.color.to_display_srgb` when exporting for display.
    """
    return render(albedo, normals, target_light, mask)
