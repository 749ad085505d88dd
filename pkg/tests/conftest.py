import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from relightkit import synthgen
from relightkit.image import ImagePlane, Mask, NormalMap


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit_normals(rng, h, w):
    u = rng.normal(size=(h, w, 3))
    u[..., 2] = np.abs(u[..., 2]) + 0.2
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def random_scene(rng, size=8):
    """Small random (albedo, normals, mask) triple for oracle comparisons."""
    albedo = ImagePlane(rng.uniform(0.1, 0.9, size=(size, size, 3)), "linear-rgb")
    normals = NormalMap(random_unit_normals(rng, size, size))
    bits = rng.random((size, size)) > 0.2
    bits[0, 0] = True  # keep at least one foreground pixel
    return albedo, normals, Mask(bits)


@pytest.fixture
def sphere_sample(rng):
    """A 32px sphere scene with two lightings, built in memory."""
    spec = synthgen.SceneSpec(geometry="sphere", albedo="two-tone", size=32, seed=21)
    return synthgen.build_sample(spec, 2, np.random.default_rng(9))
