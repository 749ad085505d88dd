"""Color-space conversions: sRGB <-> linear RGB <-> CIE L*a*b*.

Conventions: sRGB primaries, D65 white. The reference white is taken as the
row sums of the RGB->XYZ matrix so neutral grays map to a* = b* = 0 exactly,
not just to within the precision of a published white point.

Conversions preserve the input dtype (float32 stays float32); tests exercise
them at float64 reference precision.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .image import ImagePlane

# IEC 61966-2-1 transfer function breakpoints.
_SRGB_LINEAR_KNEE = 0.04045
_LINEAR_SRGB_KNEE = 0.0031308

# linear sRGB -> XYZ, D65 (rows X, Y, Z).
RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])

#: Reference white: XYZ of linear RGB (1, 1, 1) under the matrix above.
WHITE_POINT = RGB_TO_XYZ.sum(axis=1)

_LAB_DELTA = 6.0 / 29.0
_LAB_T0 = _LAB_DELTA ** 3           # cube-root / linear branch threshold
_LAB_SLOPE = 1.0 / (3.0 * _LAB_DELTA ** 2)
_LAB_OFFSET = 4.0 / 29.0


def srgb_to_linear_values(v: np.ndarray) -> np.ndarray:
    """Apply the IEC 61966-2-1 decoding transfer to raw values in [0, 1]."""
    v = np.asarray(v)
    return np.where(v <= _SRGB_LINEAR_KNEE, v / 12.92,
                    ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb_values(v: np.ndarray) -> np.ndarray:
    """Apply the IEC 61966-2-1 encoding transfer to linear values in [0, 1]."""
    v = np.asarray(v)
    return np.where(v <= _LINEAR_SRGB_KNEE, v * 12.92,
                    1.055 * np.power(v, 1.0 / 2.4, where=v > 0, out=np.zeros_like(v)) - 0.055)


def srgb_to_linear(img: ImagePlane) -> ImagePlane:
    """Decode an sRGB image to linear RGB."""
    img.require_space("srgb")
    return ImagePlane(srgb_to_linear_values(img.data), "linear-rgb")


def linear_to_srgb(img: ImagePlane) -> ImagePlane:
    """Encode a linear RGB image (values in [0, 1]) to sRGB."""
    img.require_space("linear-rgb")
    data = img.data
    if data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
        raise InvalidInputError("linear values outside [0, 1]; clamp before encoding")
    return ImagePlane(np.clip(linear_to_srgb_values(data), 0.0, 1.0), "srgb")


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _LAB_T0, np.cbrt(t), _LAB_SLOPE * t + _LAB_OFFSET)


def linear_rgb_to_lab_values(rgb: np.ndarray) -> np.ndarray:
    """Linear RGB (..., 3) in [0, 1] to CIE L*a*b* (..., 3).

    Inputs are clamped to the [0, 1] gamut first; L*a*b* is only defined
    relative to the reference white, and renders can leave the gamut.
    """
    rgb = np.clip(rgb, 0.0, 1.0)
    xyz = rgb @ RGB_TO_XYZ.T.astype(rgb.dtype)
    f = _lab_f(xyz / WHITE_POINT.astype(rgb.dtype))
    out = np.empty_like(f)
    out[..., 0] = 116.0 * f[..., 1] - 16.0
    out[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    out[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return out


def lab_backward_values(rgb: np.ndarray, grad_lab: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. L*a*b* back to linear RGB.

    Composes the transpose Jacobian of ``linear_rgb_to_lab_values`` including
    the gamut clamp: coordinates strictly outside [0, 1] get zero gradient.
    """
    inside = (rgb >= 0.0) & (rgb <= 1.0)
    rgb_c = np.clip(rgb, 0.0, 1.0)
    m = RGB_TO_XYZ.astype(rgb.dtype)
    t = (rgb_c @ m.T) / WHITE_POINT.astype(rgb.dtype)
    # f'(t), branch-matched to _lab_f
    fp = np.full_like(t, _LAB_SLOPE)
    big = t > _LAB_T0
    fp[big] = np.cbrt(t[big]) ** -2.0 / 3.0
    # grad w.r.t. f-vector: dL = 116 f_y; da = 500 (f_x - f_y); db = 200 (f_y - f_z)
    gl, ga, gb = grad_lab[..., 0], grad_lab[..., 1], grad_lab[..., 2]
    gf = np.stack([500.0 * ga,
                   116.0 * gl - 500.0 * ga + 200.0 * gb,
                   -200.0 * gb], axis=-1)
    gxyz = gf * fp / WHITE_POINT.astype(rgb.dtype)
    return (gxyz @ m) * inside


def linear_rgb_to_lab(img: ImagePlane) -> ImagePlane:
    """Convert a linear RGB image to CIE L*a*b* (D65, sRGB primaries)."""
    img.require_space("linear-rgb")
    if img.channels != 3:
        raise InvalidInputError("lab conversion needs a 3-channel image")
    return ImagePlane(linear_rgb_to_lab_values(img.data), "lab")


def to_display_srgb(img: ImagePlane) -> ImagePlane:
    """Clamp a linear render into gamut and encode as sRGB for export."""
    img.require_space("linear-rgb")
    return ImagePlane(np.clip(linear_to_srgb_values(np.clip(img.data, 0.0, 1.0)), 0.0, 1.0),
                      "srgb")
