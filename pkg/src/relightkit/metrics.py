"""Evaluation metrics: normal angular error, pixel L1/L2, SSIM.

Pixel errors follow the display convention: values are clamped, sRGB-encoded
and scaled to 0..255 before differencing, so numbers are comparable across
models regardless of internal working space. L2 is reported as an RMS.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.ndimage

from .color import linear_to_srgb_values
from .errors import InsufficientDataError, InvalidInputError
from .image import ImagePlane, Mask, NormalMap, check_same_grid

#: Angular-error report thresholds, in degrees.
ANGLE_THRESHOLDS = (20.0, 25.0, 30.0)


@dataclass(frozen=True)
class NormalErrorReport:
    mean: float
    std: float
    pct_below_20: float
    pct_below_25: float
    pct_below_30: float

    def as_dict(self) -> dict:
        return asdict(self)


def angular_error(n_hat: NormalMap, n_gt: NormalMap, mask: Mask) -> NormalErrorReport:
    """Per-pixel angle between estimated and true normals, in degrees.

    Threshold percentages use a strict ``<`` comparison.
    """
    check_same_grid(n_hat, n_gt, mask)
    fg = mask.bits
    if not fg.any():
        raise InsufficientDataError("empty mask")

    def _unit(v):
        # tolerate codec-level norm error (16-bit decoded normals)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    dots = np.clip((_unit(n_hat.data[fg]) * _unit(n_gt.data[fg])).sum(axis=-1),
                   -1.0, 1.0)
    theta = np.degrees(np.arccos(dots))
    pct = [float((theta < t).mean() * 100.0) for t in ANGLE_THRESHOLDS]
    return NormalErrorReport(mean=float(theta.mean()), std=float(theta.std()),
                             pct_below_20=pct[0], pct_below_25=pct[1], pct_below_30=pct[2])


def _display_255(img: ImagePlane) -> np.ndarray:
    """Clamped sRGB-encoded values on a 0..255 scale (kept continuous)."""
    if img.space == "srgb":
        return np.clip(img.data, 0.0, 1.0) * 255.0
    if img.space == "linear-rgb":
        return linear_to_srgb_values(np.clip(img.data, 0.0, 1.0)) * 255.0
    raise InvalidInputError(f"pixel metrics expect srgb or linear-rgb, got {img.space}")


def pixel_error(x: ImagePlane, y: ImagePlane, mask: Mask, norm: str = "L1") -> float:
    """Mean absolute (L1) or root-mean-square (L2) error on the 0..255 scale."""
    check_same_grid(x, y, mask)
    fg = mask.bits
    if not fg.any():
        raise InsufficientDataError("empty mask")
    diff = _display_255(x)[fg] - _display_255(y)[fg]
    if norm == "L1":
        return float(np.abs(diff).mean())
    if norm == "L2":
        return float(np.sqrt((diff ** 2).mean()))
    raise InvalidInputError(f"norm must be L1 or L2, got {norm!r}")


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03

# ITU-R BT.601 luma weights, applied to sRGB-encoded values.
_LUMA = np.array([0.299, 0.587, 0.114])


def _gaussian_kernel():
    r = _SSIM_WINDOW // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    return k / k.sum()


def _win_filter(img: np.ndarray) -> np.ndarray:
    k = _gaussian_kernel()
    out = scipy.ndimage.correlate1d(img, k, axis=0, mode="constant")
    return scipy.ndimage.correlate1d(out, k, axis=1, mode="constant")


def ssim(x: ImagePlane, y: ImagePlane, mask: Mask) -> float:
    """Single-scale SSIM on the luma channel, dynamic range 1.0.

    11x11 Gaussian window (sigma 1.5); the mean is taken over windows that
    lie fully inside the mask.
    """
    check_same_grid(x, y, mask)
    if x.height < _SSIM_WINDOW or x.width < _SSIM_WINDOW:
        raise InvalidInputError(
            f"image smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window")
    lx = _display_255(x) @ _LUMA / 255.0
    ly = _display_255(y) @ _LUMA / 255.0

    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    mu_x = _win_filter(lx)
    mu_y = _win_filter(ly)
    var_x = _win_filter(lx * lx) - mu_x ** 2
    var_y = _win_filter(ly * ly) - mu_y ** 2
    cov = _win_filter(lx * ly) - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)
                / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))

    r = _SSIM_WINDOW // 2
    inside = scipy.ndimage.binary_erosion(mask.bits, structure=np.ones((2 * r + 1, 2 * r + 1)),
                                          border_value=0)
    if not inside.any():
        raise InsufficientDataError("no window fits fully inside the mask")
    return float(ssim_map[inside].mean())


@dataclass
class RelightReport:
    """Reconstruction and relighting quality aggregated over a dataset."""

    l1_recon: float
    l1_relit: float
    l2_recon: float
    l2_relit: float
    ssim_recon: float
    ssim_relit: float
    n_pairs: int

    def as_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump({"version": "v1", "metrics": self.as_dict()}, f, indent=2, sort_keys=True)
            f.write("\n")

    def write_csv(self, path, model: str = "model") -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["model", "metric", "value"])
            for key, value in self.as_dict().items():
                w.writerow([model, key, value])


def evaluate_relight(decompose_fn, samples, pair_mode: str = "anchored",
                     angular: bool = True):
    """Score a decomposer on reconstruction and cross-relighting.

    ``decompose_fn(image, mask) -> (albedo, normals, light)`` is called once
    per image; for each pair (i1, i2) the reconstruction metrics compare
    ``render(a1, n1, l1)`` with i1 and the relighting metrics compare
    ``render(a1, n1, l2)`` with i2, using the *estimated* sibling lighting.
    Returns ``(RelightReport, NormalErrorReport | None)``.
    """
    from . import renderer
    from .synthgen import enumerate_pairs

    acc = {k: [] for k in ("l1_recon", "l1_relit", "l2_recon", "l2_relit",
                           "ssim_recon", "ssim_relit")}
    angle_reports = []
    n_pairs = 0
    for sample in samples:
        mask = sample.mask
        estimates = [decompose_fn(img, mask) for img in sample.images]
        if angular:
            for alb, nrm, light in estimates:
                angle_reports.append(angular_error(nrm, sample.normals, mask))
        for i1, i2 in enumerate_pairs(sample, mode=pair_mode):
            a1, n1, l1 = estimates[i1]
            _, _, l2 = estimates[i2]
            img1, img2 = sample.images[i1], sample.images[i2]
            recon = renderer.render(a1, n1, l1, mask)
            relit = renderer.render(a1, n1, l2, mask)
            acc["l1_recon"].append(pixel_error(recon, img1, mask, "L1"))
            acc["l2_recon"].append(pixel_error(recon, img1, mask, "L2"))
            acc["l1_relit"].append(pixel_error(relit, img2, mask, "L1"))
            acc["l2_relit"].append(pixel_error(relit, img2, mask, "L2"))
            try:
                acc["ssim_recon"].append(ssim(recon, img1, mask))
                acc["ssim_relit"].append(ssim(relit, img2, mask))
            except (InvalidInputError, InsufficientDataError):
                # mask too small for the SSIM window; leave SSIM out
                pass
            n_pairs += 1
    report = RelightReport(n_pairs=n_pairs,
                           **{k: float(np.mean(v)) if v else float("nan")
                              for k, v in acc.items()})
    angle = None
    if angle_reports:
        angle = NormalErrorReport(
            mean=float(np.mean([a.mean for a in angle_reports])),
            std=float(np.mean([a.std for a in angle_reports])),
            pct_below_20=float(np.mean([a.pct_below_20 for a in angle_reports])),
            pct_below_25=float(np.mean([a.pct_below_25 for a in angle_reports])),
            pct_below_30=float(np.mean([a.pct_below_30 for a in angle_reports])))
    return report, angle
