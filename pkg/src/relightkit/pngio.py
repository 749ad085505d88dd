"""8-bit and 16-bit PNG input/output.

Quantization helpers are exposed separately because the synthetic data
generator bakes them into its pipeline: albedos and normals are snapped
through the 16-bit codec *before* rendering, so re-rendering a stored scene
reproduces the stored images up to image quantization alone.

Normals use the fixed encoding n in [-1, 1] -> round((n + 1) / 2 * 65535).
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from .errors import InvalidInputError
from .image import ImagePlane, Mask, NormalMap


def quantize_unit(values: np.ndarray, bits: int = 16) -> np.ndarray:
    """Round unit-range floats to the uint grid. Input is clipped to [0, 1]."""
    scale = (1 << bits) - 1
    q = np.rint(np.clip(values, 0.0, 1.0) * scale)
    return q.astype(np.uint16 if bits == 16 else np.uint8)


def dequantize_unit(raw: np.ndarray) -> np.ndarray:
    """Map uint8/uint16 samples back to float64 in [0, 1]."""
    if raw.dtype == np.uint8:
        return raw.astype(np.float64) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float64) / 65535.0
    raise InvalidInputError(f"unsupported sample dtype {raw.dtype}")


def snap_unit(values: np.ndarray, bits: int = 16) -> np.ndarray:
    """Round-trip floats through the uint grid (the exact values a reader sees)."""
    return dequantize_unit(quantize_unit(values, bits))


def _write(path: str, raw: np.ndarray) -> None:
    if raw.ndim == 3 and raw.shape[2] == 3:
        raw = raw[:, :, ::-1]  # RGB -> BGR for OpenCV
    elif raw.ndim == 3 and raw.shape[2] == 1:
        raw = raw[:, :, 0]
    if not cv2.imwrite(path, raw):
        raise OSError(f"failed to write PNG: {path}")


def _read(path: str) -> np.ndarray:
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"failed to read PNG: {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = raw[:, :, ::-1]  # BGR -> RGB
    return raw


def write_png(path: str | os.PathLike, img: ImagePlane, bits: int = 8) -> None:
    """Write an image plane with unit-range values as an 8- or 16-bit PNG."""
    if bits not in (8, 16):
        raise InvalidInputError(f"bit depth must be 8 or 16, got {bits}")
    data = img.data
    if data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
        raise InvalidInputError("pixel values outside [0, 1]; clamp or encode first")
    _write(str(path), quantize_unit(data, bits))


def read_png(path: str | os.PathLike, space: str) -> ImagePlane:
    """Read a PNG into a float64 image plane with unit-range values."""
    raw = _read(str(path))
    values = dequantize_unit(raw)
    if values.ndim == 2:
        values = values[:, :, None]
    return ImagePlane(values, space)


def write_normals_png(path: str | os.PathLike, normals: NormalMap) -> None:
    """Store normals as 16-bit PNG via n -> (n + 1) / 2."""
    d = normals.data
    if d.min() < -1.0 or d.max() > 1.0:
        raise InvalidInputError("normal components outside [-1, 1]")
    _write(str(path), quantize_unit((d + 1.0) / 2.0, 16))


def read_normals_png(path: str | os.PathLike) -> NormalMap:
    """Read normals stored by :func:`write_normals_png`.

    No renormalization is applied; decoded vectors are unit to within the
    16-bit quantization step, which the renderer tolerates.
    """
    raw = _read(str(path))
    if raw.ndim != 3 or raw.shape[2] != 3 or raw.dtype != np.uint16:
        raise InvalidInputError(f"{path}: expected a 16-bit RGB normal PNG")
    return NormalMap(dequantize_unit(raw) * 2.0 - 1.0)


def snap_normals(normals: NormalMap) -> NormalMap:
    """Round-trip normals through the 16-bit encoding without touching disk."""
    d = (normals.data + 1.0) / 2.0
    return NormalMap(snap_unit(d, 16) * 2.0 - 1.0)


def write_mask_png(path: str | os.PathLike, mask: Mask) -> None:
    _write(str(path), np.where(mask.bits, 255, 0).astype(np.uint8))


def read_mask_png(path: str | os.PathLike) -> Mask:
    raw = _read(str(path))
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    return Mask(raw > (np.iinfo(raw.dtype).max // 2))
