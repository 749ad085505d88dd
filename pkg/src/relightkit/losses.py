"""Training objective: supervised terms, reconstruction and cross-relighting.

The self-supervised terms compare renders against observed images with an L1
distance in CIE L*a*b* space. Given a pair of images of one scene under two
lightings, the reconstruction term re-renders each member with its own
estimated lighting, while the cross-relighting term swaps the estimated
lightings between the members and compares against the sibling image.

All image-space losses are means over foreground pixels and channels, so
values are comparable across masks of different sizes. The lighting
supervision term is a plain squared L2 over all 27 coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import renderer, sh
from .color import lab_backward_values, linear_rgb_to_lab_values
from .errors import InsufficientDataError, InvalidInputError
from .image import ImagePlane, Mask, NormalMap, check_same_grid


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights for the five loss terms.

    The lighting weight is deliberately high: under light-only supervision
    the whole decomposition hinges on the estimated lighting tracking the
    annotation closely, and the squared-L2 term starts two orders of
    magnitude below the LAB reconstruction terms.
    """

    lambda_albedo: float = 1.0
    lambda_normal: float = 1.0
    lambda_light: float = 4.0
    lambda_rec: float = 1.0
    lambda_relit: float = 1.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not np.isfinite(v) or v < 0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")

    def light_only(self) -> "LossWeights":
        """The limited-supervision variant: no albedo/normal ground truth."""
        return LossWeights(lambda_albedo=0.0, lambda_normal=0.0,
                           lambda_light=self.lambda_light,
                           lambda_rec=self.lambda_rec,
                           lambda_relit=self.lambda_relit)


@dataclass(frozen=True)
class PairEstimate:
    """Estimated components for both members of a multi-lit pair."""

    albedo_1: ImagePlane
    normals_1: NormalMap
    light_1: sh.ShLighting
    albedo_2: ImagePlane
    normals_2: NormalMap
    light_2: sh.ShLighting


@dataclass
class TotalLoss:
    total: float
    terms: dict = field(default_factory=dict)


def _fg_count(mask: Mask) -> int:
    n = mask.count
    if n == 0:
        raise InsufficientDataError("empty mask")
    return n


def distance_lab(x: ImagePlane, y: ImagePlane, mask: Mask) -> float:
    """Mean absolute L*a*b* difference over foreground pixels and channels.

    Inputs are linear RGB and are clamped into gamut before conversion.
    """
    x.require_space("linear-rgb")
    y.require_space("linear-rgb")
    check_same_grid(x, y, mask)
    n = _fg_count(mask)
    diff = linear_rgb_to_lab_values(x.data) - linear_rgb_to_lab_values(y.data)
    return float(np.abs(diff[mask.bits]).sum() / (3 * n))


def distance_lab_grad(x: np.ndarray, y: np.ndarray, mask_bits: np.ndarray):
    """Array-level distance plus its gradient with respect to ``x``.

    The gradient composes the L1 sign, the LAB Jacobian and the gamut
    clamp's zero-gradient region; off-mask pixels get zeros.
    """
    n = int(mask_bits.sum())
    if n == 0:
        raise InsufficientDataError("empty mask")
    diff = linear_rgb_to_lab_values(x) - linear_rgb_to_lab_values(y)
    fg = mask_bits[..., None]
    value = float(np.abs(diff * fg).sum() / (3 * n))
    dlab = np.sign(diff) * fg / (3.0 * n)
    return value, lab_backward_values(x, dlab.astype(x.dtype))


def loss_rec(est: PairEstimate, i1: ImagePlane, i2: ImagePlane, mask: Mask) -> float:
    """Reconstruction: each member re-rendered with its own lighting."""
    r1 = renderer.render(est.albedo_1, est.normals_1, est.light_1, mask)
    r2 = renderer.render(est.albedo_2, est.normals_2, est.light_2, mask)
    return distance_lab(r1, i1, mask) + distance_lab(r2, i2, mask)


def loss_relit(est: PairEstimate, i1: ImagePlane, i2: ImagePlane, mask: Mask) -> float:
    """Cross-relighting: swap the estimated lightings between the members."""
    r12 = renderer.render(est.albedo_1, est.normals_1, est.light_2, mask)
    r21 = renderer.render(est.albedo_2, est.normals_2, est.light_1, mask)
    return distance_lab(r12, i2, mask) + distance_lab(r21, i1, mask)


def _mean_l1(a: np.ndarray, b: np.ndarray, mask_bits: np.ndarray) -> float:
    n = int(mask_bits.sum())
    return float(np.abs((a - b)[mask_bits]).sum() / (a.shape[-1] * n))


def loss_supervised(est: PairEstimate, gt_albedo: ImagePlane, gt_normals: NormalMap,
                    gt_lights, mask: Mask, weights: LossWeights) -> float:
    """Ground-truth supervision, summed over both pair members.

    ``gt_lights`` is the (light_1, light_2) pair. Terms with zero weight are
    skipped entirely, so light-only supervision never touches albedo/normal
    ground truth.
    """
    _fg_count(mask)
    total = 0.0
    if weights.lambda_albedo > 0:
        total += weights.lambda_albedo * (
            _mean_l1(est.albedo_1.data, gt_albedo.data, mask.bits)
            + _mean_l1(est.albedo_2.data, gt_albedo.data, mask.bits))
    if weights.lambda_normal > 0:
        total += weights.lambda_normal * (
            _mean_l1(est.normals_1.data, gt_normals.data, mask.bits)
            + _mean_l1(est.normals_2.data, gt_normals.data, mask.bits))
    if weights.lambda_light > 0:
        l1, l2 = gt_lights
        total += weights.lambda_light * (
            float(((est.light_1.coeffs - l1.coeffs) ** 2).sum())
            + float(((est.light_2.coeffs - l2.coeffs) ** 2).sum()))
    return total


def total_loss(est: PairEstimate, i1: ImagePlane, i2: ImagePlane, mask: Mask,
               weights: LossWeights, gt_albedo: ImagePlane | None = None,
               gt_normals: NormalMap | None = None, gt_lights=None) -> TotalLoss:
    """Weighted sum of all terms with a per-term breakdown for logging.

    Breakdown values are the unweighted terms; supervised terms require
    their ground truth only when the matching weight is positive.
    """
    terms = {}
    terms["rec"] = loss_rec(est, i1, i2, mask) if weights.lambda_rec > 0 else 0.0
    terms["relit"] = loss_relit(est, i1, i2, mask) if weights.lambda_relit > 0 else 0.0
    terms["albedo"] = terms["normal"] = terms["light"] = 0.0
    if weights.lambda_albedo > 0:
        if gt_albedo is None:
            raise InvalidInputError("lambda_albedo > 0 requires gt_albedo")
        terms["albedo"] = (_mean_l1(est.albedo_1.data, gt_albedo.data, mask.bits)
                           + _mean_l1(est.albedo_2.data, gt_albedo.data, mask.bits))
    if weights.lambda_normal > 0:
        if gt_normals is None:
            raise InvalidInputError("lambda_normal > 0 requires gt_normals")
        terms["normal"] = (_mean_l1(est.normals_1.data, gt_normals.data, mask.bits)
                           + _mean_l1(est.normals_2.data, gt_normals.data, mask.bits))
    if weights.lambda_light > 0:
        if gt_lights is None:
            raise InvalidInputError("lambda_light > 0 requires gt_lights")
        l1, l2 = gt_lights
        terms["light"] = (float(((est.light_1.coeffs - l1.coeffs) ** 2).sum())
                          + float(((est.light_2.coeffs - l2.coeffs) ** 2).sum()))
    total = (weights.lambda_rec * terms["rec"]
             + weights.lambda_relit * terms["relit"]
             + weights.lambda_albedo * terms["albedo"]
             + weights.lambda_normal * terms["normal"]
             + weights.lambda_light * terms["light"])
    return TotalLoss(total=float(total), terms=terms)


@dataclass
class PairGrads:
    """Gradients of the weighted objective for both members.

    Normal gradients are with respect to the unit normals as free vectors;
    callers chain them through their own parameterization (tangent
    projection and 1/||u|| for normalize-on-use parameters).
    """

    d_albedo_1: np.ndarray
    d_normals_1: np.ndarray
    d_light_1: np.ndarray
    d_albedo_2: np.ndarray
    d_normals_2: np.ndarray
    d_light_2: np.ndarray


def pair_objective(a1, n1, l1, a2, n2, l2, i1, i2, mask_bits, weights: LossWeights,
                   gt_albedo=None, gt_normals=None, gt_lights=None,
                   want_grads: bool = True):
    """Array-level weighted objective and its gradients for one pair.

    All arguments are raw arrays: albedos/images (H, W, 3), normals (H, W, 3)
    unit, lightings (9, 3). Returns ``(TotalLoss, PairGrads | None)``. This is
    the single code path the direct fitter and the network trainer share.
    """
    nfg = int(mask_bits.sum())
    if nfg == 0:
        raise InsufficientDataError("empty mask")
    terms = {"rec": 0.0, "relit": 0.0, "albedo": 0.0, "normal": 0.0, "light": 0.0}
    z = np.zeros_like
    g = PairGrads(z(a1), z(n1), np.zeros_like(l1), z(a2), z(n2), np.zeros_like(l2)) \
        if want_grads else None

    def add_render_term(key, weight, alb, nrm, coeffs, target, which_a, which_l):
        if weight == 0:
            return
        out = renderer.render_values(alb, nrm, coeffs, mask_bits)
        val, dout = distance_lab_grad(out, target, mask_bits)
        terms[key] += val
        if g is None:
            return
        da, dn, dl = renderer.render_vjp(weight * dout, alb, nrm, coeffs, mask_bits)
        if which_a == 1:
            g.d_albedo_1 += da
            g.d_normals_1 += dn
        else:
            g.d_albedo_2 += da
            g.d_normals_2 += dn
        if which_l == 1:
            g.d_light_1 += dl
        else:
            g.d_light_2 += dl

    add_render_term("rec", weights.lambda_rec, a1, n1, l1, i1, 1, 1)
    add_render_term("rec", weights.lambda_rec, a2, n2, l2, i2, 2, 2)
    add_render_term("relit", weights.lambda_relit, a1, n1, l2, i2, 1, 2)
    add_render_term("relit", weights.lambda_relit, a2, n2, l1, i1, 2, 1)

    fg = mask_bits[..., None]
    if weights.lambda_albedo > 0:
        for idx, a in ((1, a1), (2, a2)):
            diff = (a - gt_albedo) * fg
            terms["albedo"] += float(np.abs(diff).sum() / (3 * nfg))
            if g is not None:
                da = weights.lambda_albedo * np.sign(diff) / (3.0 * nfg)
                if idx == 1:
                    g.d_albedo_1 += da.astype(a1.dtype)
                else:
                    g.d_albedo_2 += da.astype(a2.dtype)
    if weights.lambda_normal > 0:
        for idx, n in ((1, n1), (2, n2)):
            diff = (n - gt_normals) * fg
            terms["normal"] += float(np.abs(diff).sum() / (3 * nfg))
            if g is not None:
                dn = weights.lambda_normal * np.sign(diff) / (3.0 * nfg)
                if idx == 1:
                    g.d_normals_1 += dn.astype(n1.dtype)
                else:
                    g.d_normals_2 += dn.astype(n2.dtype)
    if weights.lambda_light > 0:
        gl1, gl2 = gt_lights
        for idx, (l, gt) in ((1, (l1, gl1)), (2, (l2, gl2))):
            diff = l - gt
            terms["light"] += float((diff ** 2).sum())
            if g is not None:
                dl = weights.lambda_light * 2.0 * diff
                if idx == 1:
                    g.d_light_1 += dl
                else:
                    g.d_light_2 += dl

    total = (weights.lambda_rec * terms["rec"] + weights.lambda_relit * terms["relit"]
             + weights.lambda_albedo * terms["albedo"]
             + weights.lambda_normal * terms["normal"]
             + weights.lambda_light * terms["light"])
    return TotalLoss(total=float(total), terms=terms), g
