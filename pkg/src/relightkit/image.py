"""Pixel containers: tagged image planes, masks and normal maps.

All rasters are numpy arrays in row-major (H, W, C) layout. Containers are
frozen dataclasses and treated as immutable after construction, so they are
safe to share across workers without copying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

#: Valid color-space tags for an ImagePlane.
SPACES = ("linear-rgb", "srgb", "lab", "normal-xyz", "scalar")

# sRGB range checks tolerate a hair of float32 round-off from conversions.
_SRGB_SLACK = 1e-6


@dataclass(frozen=True)
class ImagePlane:
    """An H x W x C float raster tagged with the space its values live in.

    Invariants enforced at construction:
      * data is a floating (H, W, C) array with C in {1, 3}
      * linear-rgb / srgb values are finite, srgb additionally in [0, 1]

    For planes tagged ``lab`` the usual ranges (L* in [0, 100], a*/b* in
    [-128, 128]) hold for anything derived from in-gamut sRGB but are not
    enforced here.
    """

    data: np.ndarray
    space: str

    def __post_init__(self):
        data = self.data
        if not isinstance(data, np.ndarray) or data.ndim != 3:
            raise InvalidInputError("image data must be an (H, W, C) array")
        if data.shape[2] not in (1, 3):
            raise InvalidInputError(f"channel count must be 1 or 3, got {data.shape[2]}")
        if not np.issubdtype(data.dtype, np.floating):
            raise InvalidInputError(f"image data must be floating point, got {data.dtype}")
        if self.space not in SPACES:
            raise InvalidInputError(f"unknown color space {self.space!r}")
        if self.space in ("linear-rgb", "srgb"):
            if not np.isfinite(data).all():
                raise InvalidInputError(f"{self.space} image contains non-finite values")
        if self.space == "srgb":
            lo, hi = float(data.min(initial=0.0)), float(data.max(initial=0.0))
            if lo < -_SRGB_SLACK or hi > 1.0 + _SRGB_SLACK:
                raise InvalidInputError(f"srgb values outside [0, 1]: range [{lo}, {hi}]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def require_space(self, space: str) -> "ImagePlane":
        if self.space != space:
            raise InvalidInputError(f"expected a {space} image, got {self.space}")
        return self

    @classmethod
    def zeros(cls, height: int, width: int, channels: int = 3,
              space: str = "linear-rgb", dtype=np.float64) -> "ImagePlane":
        return cls(np.zeros((height, width, channels), dtype=dtype), space)


@dataclass(frozen=True)
class Mask:
    """Per-pixel boolean foreground mask; True marks the decomposition domain."""

    bits: np.ndarray

    def __post_init__(self):
        if not isinstance(self.bits, np.ndarray) or self.bits.ndim != 2:
            raise InvalidInputError("mask must be an (H, W) array")
        if self.bits.dtype != np.bool_:
            raise InvalidInputError(f"mask must be boolean, got {self.bits.dtype}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        """Number of foreground pixels."""
        return int(self.bits.sum())

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class NormalMap:
    """H x W x 3 field of surface normals.

    Consumers require unit vectors on their mask (renderer tolerance 1e-4);
    off-mask content is irrelevant and conventionally (0, 0, 1).
    """

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3 or d.shape[2] != 3:
            raise InvalidInputError("normal map must be an (H, W, 3) array")
        if not np.issubdtype(d.dtype, np.floating):
            raise InvalidInputError(f"normal map must be floating point, got {d.dtype}")
        if not np.isfinite(d).all():
            raise InvalidInputError("normal map contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def check_same_grid(*items) -> tuple[int, int]:
    """Check that every ImagePlane / Mask / NormalMap shares one (H, W) grid."""
    dims = None
    for item in items:
        hw = (item.height, item.width)
        if dims is None:
            dims = hw
        elif hw != dims:
            raise InvalidInputError(f"grid mismatch: {hw} vs {dims}")
    if dims is None:
        raise InvalidInputError("no operands given")
    return dims
