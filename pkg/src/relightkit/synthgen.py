"""Synthetic multi-lit dataset generation with exact ground truth.

Each scene is a procedurally built Lambertian surface (sphere, ellipsoid or
noise heightfield) with a procedural albedo, rendered under K sampled
lightings that share the scene's albedo and normals.

Exactness contract: albedo and normals are snapped through the 16-bit PNG
codec *before* rendering, and each lighting is adjusted (DC lift + global
scale) until the render lies in [0, 1]. The stored image files then differ
from a re-render of the stored components by image quantization alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import pngio, renderer, sh
from .errors import DataFormatError, InvalidInputError
from .image import ImagePlane, Mask, NormalMap
from .noise import fractal_with_grad

GEOMETRIES = ("sphere", "ellipsoid", "heightfield")
ALBEDO_PATTERNS = ("flat", "two-tone", "smooth-gradient", "checker")

#: Albedo values are kept away from zero so lighting stays identifiable.
ALBEDO_RANGE = (0.05, 0.95)

MANIFEST_VERSION = "v1"

#: Headroom below 1.0 kept when rescaling lightings into gamut.
_GAMUT_CEILING = 0.98


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one procedural scene; fully deterministic given its seed."""

    geometry: str
    albedo: str
    size: int = 64
    seed: int = 0
    geometry_params: dict = field(default_factory=dict)
    albedo_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise InvalidInputError(f"unknown geometry {self.geometry!r}")
        if self.albedo not in ALBEDO_PATTERNS:
            raise InvalidInputError(f"unknown albedo pattern {self.albedo!r}")
        if self.size < 8:
            raise InvalidInputError(f"image size must be >= 8, got {self.size}")

    def to_dict(self) -> dict:
        return {"geometry": self.geometry, "albedo": self.albedo, "size": self.size,
                "seed": self.seed, "geometry_params": dict(self.geometry_params),
                "albedo_params": dict(self.albedo_params)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(geometry=d["geometry"], albedo=d["albedo"], size=int(d["size"]),
                   seed=int(d["seed"]), geometry_params=dict(d.get("geometry_params", {})),
                   albedo_params=dict(d.get("albedo_params", {})))


@dataclass(frozen=True)
class Scene:
    albedo: ImagePlane
    normals: NormalMap
    mask: Mask


@dataclass(frozen=True)
class MultiLitSample:
    """One scene with K >= 2 images sharing its albedo and normals."""

    albedo: ImagePlane
    normals: NormalMap
    mask: Mask
    lightings: list
    images: list
    scene_id: str = ""

    def __post_init__(self):
        if len(self.lightings) != len(self.images):
            raise InvalidInputError("lightings and images must pair up")
        if len(self.lightings) < 2:
            raise InvalidInputError("a multi-lit sample needs K >= 2 lightings")

    @property
    def k(self) -> int:
        return len(self.lightings)


def _pixel_grid(size: int):
    """Pixel offsets from the integer center, y pointing up."""
    cy, cx = size // 2, size // 2
    r, c = np.mgrid[0:size, 0:size]
    return (c - cx).astype(np.float64), (cy - r).astype(np.float64)


def _sphere(size: int, params: dict):
    radius = params.get("radius_frac", 0.9) * (size / 2.0)
    if radius <= 0:
        raise InvalidInputError("sphere radius must be positive")
    x, y = _pixel_grid(size)
    u, v = x / radius, y / radius
    rr = u * u + v * v
    mask = rr < 1.0
    z = np.sqrt(np.clip(1.0 - rr, 0.0, None))
    normals = np.stack([u, v, z], axis=-1)
    normals[~mask] = (0.0, 0.0, 1.0)
    return normals, mask


def _ellipsoid(size: int, params: dict):
    ax = params.get("ax", 0.9)
    ay = params.get("ay", 0.65)
    az = params.get("az", 0.5)
    if min(ax, ay, az) <= 0:
        raise InvalidInputError("ellipsoid semi-axes must be positive")
    h = size / 2.0
    a, b, c = ax * h, ay * h, az * h
    x, y = _pixel_grid(size)
    u, v = x / a, y / b
    rr = u * u + v * v
    mask = rr < 1.0
    z = c * np.sqrt(np.clip(1.0 - rr, 0.0, None))
    # gradient of the implicit surface (x/a)^2 + (y/b)^2 + (z/c)^2 = 1
    normals = np.stack([x / a ** 2, y / b ** 2, z / c ** 2], axis=-1)
    norms = np.linalg.norm(normals, axis=-1, keepdims=True)
    normals = np.divide(normals, norms, out=np.zeros_like(normals), where=norms > 0)
    normals[~mask] = (0.0, 0.0, 1.0)
    return normals, mask


def _heightfield(size: int, params: dict, rng: np.random.Generator):
    octaves = int(params.get("octaves", 3))
    amplitude = params.get("amplitude", 0.15)
    base_freq = params.get("base_freq", 2.5)
    r, c = np.mgrid[0:size, 0:size]
    wx = (c + 0.5) / size
    wy = (size - 1 - r + 0.5) / size
    _, dx, dy = fractal_with_grad(wx, wy, rng, octaves=octaves, base_freq=base_freq)
    zx, zy = amplitude * dx, amplitude * dy
    normals = np.stack([-zx, -zy, np.ones_like(zx)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return normals, np.ones((size, size), dtype=bool)


def _rand_color(rng) -> np.ndarray:
    return rng.uniform(0.1, 0.9, size=3)


def _albedo_pattern(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.size
    p = spec.albedo_params
    x, y = _pixel_grid(size)
    if spec.albedo == "flat":
        rgb = np.asarray(p.get("rgb", _rand_color(rng)), dtype=np.float64)
        values = np.broadcast_to(rgb, (size, size, 3)).copy()
    elif spec.albedo == "two-tone":
        c0 = np.asarray(p.get("color_a", _rand_color(rng)), dtype=np.float64)
        c1 = np.asarray(p.get("color_b", _rand_color(rng)), dtype=np.float64)
        angle = p.get("angle", rng.uniform(0.0, np.pi))
        side = (x * np.cos(angle) + y * np.sin(angle)) > 0
        values = np.where(side[..., None], c0, c1)
    elif spec.albedo == "smooth-gradient":
        c0 = np.asarray(p.get("color_a", _rand_color(rng)), dtype=np.float64)
        c1 = np.asarray(p.get("color_b", _rand_color(rng)), dtype=np.float64)
        angle = p.get("angle", rng.uniform(0.0, np.pi))
        t = (x * np.cos(angle) + y * np.sin(angle)) / size + 0.5
        values = c0 + np.clip(t, 0.0, 1.0)[..., None] * (c1 - c0)
    else:  # checker
        scale = int(p.get("scale", max(2, size // 4)))
        if scale < 1:
            raise InvalidInputError("checker scale must be >= 1")
        c0 = np.asarray(p.get("color_a", _rand_color(rng)), dtype=np.float64)
        c1 = np.asarray(p.get("color_b", _rand_color(rng)), dtype=np.float64)
        r, c = np.mgrid[0:size, 0:size]
        cell = ((r // scale) + (c // scale)) % 2
        values = np.where(cell[..., None] == 0, c0, c1)
    return np.clip(values, *ALBEDO_RANGE)


def make_scene(spec: SceneSpec) -> Scene:
    """Build a scene deterministically from its spec.

    Normals come from the analytic surface description (implicit-surface
    gradients for quadrics, exact noise derivatives for heightfields) and
    are unit to float precision on the mask.
    """
    rng = np.random.default_rng(spec.seed)
    albedo = _albedo_pattern(spec, rng)
    if spec.geometry == "sphere":
        normals, mask = _sphere(spec.size, spec.geometry_params)
    elif spec.geometry == "ellipsoid":
        normals, mask = _ellipsoid(spec.size, spec.geometry_params)
    else:
        normals, mask = _heightfield(spec.size, spec.geometry_params, rng)
    return Scene(albedo=ImagePlane(albedo, "linear-rgb"),
                 normals=NormalMap(normals), mask=Mask(mask))


_REJECTION_SPHERE: tuple | None = None


def _rejection_sphere():
    global _REJECTION_SPHERE
    if _REJECTION_SPHERE is None:
        normals, mask = _sphere(32, {"radius_frac": 1.0})
        _REJECTION_SPHERE = (normals[mask], int(mask.sum()))
    return _REJECTION_SPHERE


def sample_lighting(rng: np.random.Generator,
                    intensity_range: tuple = (0.6, 1.1),
                    tilt_max_deg: float = 60.0,
                    direction_strength: tuple = (0.2, 0.7),
                    quad_strength: float = 0.1,
                    color_jitter: float = 0.1,
                    min_nonneg_fraction: float = 0.95) -> sh.ShLighting:
    """Draw a random plausible lighting.

    ``intensity_range`` is in flat-shading units: a DC-only draw of 1.0
    shades a unit albedo to exactly 1.0. Direction (degree-1) coefficients
    point toward a random upper-hemisphere direction with tilt from +z at
    most ``tilt_max_deg``; degree-2 coefficients are small and uniform. All
    rows share a base draw per channel with +-``color_jitter`` relative
    jitter. Samples whose unit-sphere shading is negative on more than
    1 - ``min_nonneg_fraction`` of pixels are rejected and redrawn.
    """
    sphere_normals, n_sphere = _rejection_sphere()
    for _ in range(1000):
        base_dc = rng.uniform(*intensity_range) / sh.C4
        jitter = 1.0 + rng.uniform(-color_jitter, color_jitter, size=3)
        coeffs = np.zeros((9, 3))
        coeffs[0] = base_dc * jitter

        cos_min = np.cos(np.deg2rad(tilt_max_deg))
        cos_t = rng.uniform(cos_min, 1.0)
        sin_t = np.sqrt(1.0 - cos_t * cos_t)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
        strength = rng.uniform(*direction_strength) * base_dc
        dir_jitter = 1.0 + rng.uniform(-color_jitter, color_jitter, size=3)
        # basis rows 1..3 are ordered y, z, x
        coeffs[1] = strength * direction[1] * dir_jitter
        coeffs[2] = strength * direction[2] * dir_jitter
        coeffs[3] = strength * direction[0] * dir_jitter

        quad = rng.uniform(-quad_strength, quad_strength, size=5) * base_dc
        quad_jitter = 1.0 + rng.uniform(-color_jitter, color_jitter, size=(5, 3))
        coeffs[4:9] = quad[:, None] * quad_jitter

        shading = sh.sh_basis_values(sphere_normals) @ coeffs
        ok = (shading.min(axis=-1) >= 0.0).sum() / n_sphere
        if ok >= min_nonneg_fraction:
            return sh.ShLighting(coeffs)
    raise RuntimeError("lighting rejection sampling failed to converge")


def fit_lighting_to_gamut(lighting: sh.ShLighting, albedo: np.ndarray,
                          normals: np.ndarray, mask_bits: np.ndarray) -> sh.ShLighting:
    """Adjust a lighting so the scene's render lies in [0, 1].

    Negative shading is removed by lifting the DC row (constant basis), then
    the whole lighting is scaled down if the render peaks above the gamut
    ceiling. Linearity makes both fixes exact.
    """
    coeffs = lighting.coeffs.copy()
    shading = renderer.shading_values(normals, coeffs)[mask_bits]
    lows = shading.min(axis=0)
    for c in range(3):
        if lows[c] < 0.0:
            coeffs[0, c] += -lows[c] / sh.C4
    peak = (albedo[mask_bits] * (renderer.shading_values(normals, coeffs)[mask_bits])).max()
    if peak > _GAMUT_CEILING:
        coeffs *= _GAMUT_CEILING / peak
    return sh.ShLighting(coeffs)


def default_spec_fn(index: int, rng: np.random.Generator, size: int) -> SceneSpec:
    """Round-robin over geometries and albedo patterns."""
    geometry = GEOMETRIES[index % len(GEOMETRIES)]
    albedo = ALBEDO_PATTERNS[index % len(ALBEDO_PATTERNS)]
    return SceneSpec(geometry=geometry, albedo=albedo, size=size,
                     seed=int(rng.integers(0, 2 ** 63)))


def build_sample(spec: SceneSpec, k: int, rng: np.random.Generator,
                 scene_id: str = "", lighting_params: dict | None = None) -> MultiLitSample:
    """Build one multi-lit sample with codec-snapped components.

    ``lighting_params`` are forwarded to :func:`sample_lighting`; experiments
    that need stronger directional light (more observable normals) pass e.g.
    ``{"direction_strength": (0.35, 0.85), "tilt_max_deg": 70.0}``.
    """
    scene = make_scene(spec)
    albedo = ImagePlane(pngio.snap_unit(scene.albedo.data, 16), "linear-rgb")
    normals = pngio.snap_normals(scene.normals)
    mask = scene.mask
    lightings, images = [], []
    for _ in range(k):
        light = sample_lighting(rng, **(lighting_params or {}))
        light = fit_lighting_to_gamut(light, albedo.data, normals.data, mask.bits)
        img = renderer.render_values(albedo.data, normals.data, light.coeffs, mask.bits)
        lightings.append(light)
        images.append(ImagePlane(img, "linear-rgb"))
    return MultiLitSample(albedo=albedo, normals=normals, mask=mask,
                          lightings=lightings, images=images, scene_id=scene_id)


def generate_dataset(n_scenes: int, k: int, out_dir: str | os.PathLike,
                     seed: int = 0, size: int = 64, spec_fn=None,
                     lighting_params: dict | None = None) -> dict:
    """Write a dataset directory with a versioned manifest.

    Layout: ``<out>/manifest.json`` plus one directory per scene holding
    ``albedo.png`` / ``normals.png`` (16-bit), ``mask.png`` and 16-bit
    ``img_<k>.png`` files with linear-light values. Lightings live in the
    manifest as 27-float rows. Per-scene RNG streams are derived from
    (seed, scene index), so output is reproducible and order-independent.
    """
    if k < 2:
        raise InvalidInputError(f"need at least 2 lightings per scene, got k={k}")
    if n_scenes < 1:
        raise InvalidInputError("n_scenes must be >= 1")
    spec_fn = spec_fn or default_spec_fn
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    scenes = []
    for i in range(n_scenes):
        rng = np.random.default_rng([seed, i])
        spec = spec_fn(i, rng, size)
        scene_id = f"scene_{i:04d}"
        sample = build_sample(spec, k, rng, scene_id=scene_id,
                              lighting_params=lighting_params)
        scene_dir = os.path.join(out_dir, scene_id)
        os.makedirs(scene_dir, exist_ok=True)
        pngio.write_png(os.path.join(scene_dir, "albedo.png"), sample.albedo, bits=16)
        pngio.write_normals_png(os.path.join(scene_dir, "normals.png"), sample.normals)
        pngio.write_mask_png(os.path.join(scene_dir, "mask.png"), sample.mask)
        image_files = []
        for j, img in enumerate(sample.images):
            name = f"img_{j}.png"
            pngio.write_png(os.path.join(scene_dir, name), img, bits=16)
            image_files.append(f"{scene_id}/{name}")
        scenes.append({
            "id": scene_id,
            "spec": spec.to_dict(),
            "lightings": [l.to_flat() for l in sample.lightings],
            "files": {"albedo": f"{scene_id}/albedo.png",
                      "normals": f"{scene_id}/normals.png",
                      "mask": f"{scene_id}/mask.png",
                      "images": image_files},
        })
    manifest = {"version": MANIFEST_VERSION, "encoding": "linear16",
                "seed": seed, "k": k, "size": size, "scenes": scenes}
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_manifest(data_dir: str | os.PathLike) -> dict:
    path = os.path.join(str(data_dir), "manifest.json")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except FileNotFoundError as exc:
        raise OSError(f"no manifest.json under {data_dir}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise DataFormatError(
            f"{path}: unsupported manifest version {manifest.get('version')!r}")
    return manifest


def load_sample(data_dir: str, entry: dict) -> MultiLitSample:
    files = entry["files"]
    albedo = pngio.read_png(os.path.join(data_dir, files["albedo"]), "linear-rgb")
    normals = pngio.read_normals_png(os.path.join(data_dir, files["normals"]))
    mask = pngio.read_mask_png(os.path.join(data_dir, files["mask"]))
    lightings = [sh.ShLighting.from_flat(row) for row in entry["lightings"]]
    images = [pngio.read_png(os.path.join(data_dir, f), "linear-rgb")
              for f in files["images"]]
    return MultiLitSample(albedo=albedo, normals=normals, mask=mask,
                          lightings=lightings, images=images,
                          scene_id=entry.get("id", ""))


def load_dataset(data_dir: str | os.PathLike):
    """Read a generated dataset back into memory."""
    data_dir = str(data_dir)
    manifest = load_manifest(data_dir)
    samples = [load_sample(data_dir, entry) for entry in manifest["scenes"]]
    return samples, manifest


def enumerate_pairs(sample: MultiLitSample, mode: str = "all") -> list[tuple[int, int]]:
    """Index pairs of a sample's images for pair-based training.

    ``all`` yields every unordered pair (C(K, 2) of them); ``anchored``
    pins image 0 as the first member of each pair.
    """
    k = sample.k
    if k < 2:
        raise InvalidInputError("need K >= 2 images to form pairs")
    if mode == "all":
        return [(i, j) for i in range(k) for j in range(i + 1, k)]
    if mode == "anchored":
        return [(0, j) for j in range(1, k)]
    raise InvalidInputError(f"unknown pair mode {mode!r}")
