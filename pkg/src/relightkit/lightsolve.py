"""Closed-form spherical-harmonic lighting estimation.

Given an image, albedo and normals, the lighting that best explains the
image under the Lambertian model is the solution of an ordinary linear
least-squares problem, solved per color channel through the 9x9 normal
equations with an optional Tikhonov term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import sh
from .errors import InsufficientDataError, InvalidInputError
from .image import ImagePlane, Mask, NormalMap, check_same_grid

#: Scale-free default ridge: 1e-8 * trace(Gram) / 9 per channel.
DEFAULT_RIDGE_FRACTION = 1e-8


@dataclass(frozen=True)
class LightSolveResult:
    lighting: sh.ShLighting
    rms_residual: float


@dataclass(frozen=True)
class ConditionReport:
    """Conditioning of the per-channel 9x9 Gram matrices.

    ``rank`` is the most pessimistic channel, ``condition`` the worst ratio
    of largest to smallest eigenvalue (inf when effectively singular).
    """

    rank: int
    condition: float
    channel_rank: tuple[int, int, int]
    channel_condition: tuple[float, float, float]


def _design(image: ImagePlane, albedo: ImagePlane, normals: NormalMap, mask: Mask):
    image.require_space("linear-rgb")
    albedo.require_space("linear-rgb")
    check_same_grid(image, albedo, normals, mask)
    fg = mask.bits
    n_fg = int(fg.sum())
    if n_fg < 9:
        raise InsufficientDataError(f"need at least 9 foreground pixels, got {n_fg}")
    if not (np.isfinite(image.data).all() and np.isfinite(albedo.data).all()):
        raise InvalidInputError("non-finite image or albedo values")
    h = sh.sh_basis_values(normals.data[fg])  # (n_fg, 9)
    return h, albedo.data[fg], image.data[fg]


def estimate_light(image: ImagePlane, albedo: ImagePlane, normals: NormalMap,
                   mask: Mask, ridge: float | None = None) -> LightSolveResult:
    """Per-channel ridge least squares for the 9x3 lighting coefficients.

    ``ridge=None`` selects the scale-free default; pass 0.0 for the exact
    unregularized solve (requires a well-conditioned Gram matrix).
    """
    if ridge is not None and ridge < 0:
        raise InvalidInputError(f"ridge must be nonnegative, got {ridge}")
    h, alb, img = _design(image, albedo, normals, mask)
    coeffs = np.zeros((9, 3))
    for c in range(3):
        w = alb[:, c]
        hw = h * w[:, None]
        gram = hw.T @ hw
        rhs = hw.T @ img[:, c]
        lam = ridge if ridge is not None else DEFAULT_RIDGE_FRACTION * np.trace(gram) / 9.0
        try:
            cho = scipy.linalg.cho_factor(gram + lam * np.eye(9))
            coeffs[:, c] = scipy.linalg.cho_solve(cho, rhs)
        except scipy.linalg.LinAlgError as exc:
            raise InsufficientDataError(
                "singular lighting system; geometry/albedo underdetermine the light "
                "(try a positive ridge)") from exc
    lighting = sh.ShLighting(coeffs)
    residual = img - alb * (h @ coeffs)
    rms = float(np.sqrt(np.mean(residual ** 2)))
    return LightSolveResult(lighting=lighting, rms_residual=rms)


def condition_report(normals: NormalMap, albedo: ImagePlane, mask: Mask) -> ConditionReport:
    """Eigenvalue diagnosis of the per-channel Gram matrix sum A^2 h h^T."""
    albedo.require_space("linear-rgb")
    check_same_grid(albedo, normals, mask)
    fg = mask.bits
    if int(fg.sum()) == 0:
        raise InsufficientDataError("empty mask")
    h = sh.sh_basis_values(normals.data[fg])
    alb = albedo.data[fg]
    ranks, conds = [], []
    for c in range(3):
        hw = h * alb[:, c][:, None]
        gram = hw.T @ hw
        eig = scipy.linalg.eigvalsh(gram)
        top = eig[-1]
        if top <= 0.0:
            ranks.append(0)
            conds.append(float("inf"))
            continue
        tol = top * 1e-10
        ranks.append(int((eig > tol).sum()))
        smallest = eig[0]
        conds.append(float(top / smallest) if smallest > tol else float("inf"))
    return ConditionReport(rank=min(ranks), condition=max(conds),
                           channel_rank=tuple(ranks), channel_condition=tuple(conds))
