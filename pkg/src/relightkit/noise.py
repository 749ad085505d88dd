"""Gradient (Perlin) noise with analytic spatial derivatives.

Heightfield scenes need exact surface normals, so the noise returns both its
value and its derivative with respect to the sample coordinates; normals are
then built from the analytic gradient instead of finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PerlinTable:
    perm: np.ndarray   # (512,) int permutation, tiled
    grads: np.ndarray  # (256, 2) unit gradient vectors


def make_table(rng: np.random.Generator) -> PerlinTable:
    perm = rng.permutation(256)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=256)
    grads = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return PerlinTable(perm=np.concatenate([perm, perm]), grads=grads)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _fade_deriv(t):
    return 30.0 * t * t * (t - 1.0) ** 2


def perlin_with_grad(x: np.ndarray, y: np.ndarray, table: PerlinTable):
    """Noise value and (d/dx, d/dy) at the given sample coordinates."""
    xi = np.floor(x).astype(np.int64)
    yi = np.floor(y).astype(np.int64)
    fx = x - xi
    fy = y - yi
    xi &= 255
    yi &= 255

    perm, grads = table.perm, table.grads
    g00 = grads[perm[perm[xi] + yi]]
    g10 = grads[perm[perm[xi + 1] + yi]]
    g01 = grads[perm[perm[xi] + yi + 1]]
    g11 = grads[perm[perm[xi + 1] + yi + 1]]

    d00 = g00[..., 0] * fx + g00[..., 1] * fy
    d10 = g10[..., 0] * (fx - 1.0) + g10[..., 1] * fy
    d01 = g01[..., 0] * fx + g01[..., 1] * (fy - 1.0)
    d11 = g11[..., 0] * (fx - 1.0) + g11[..., 1] * (fy - 1.0)

    u, v = _fade(fx), _fade(fy)
    du, dv = _fade_deriv(fx), _fade_deriv(fy)

    nx0 = d00 + u * (d10 - d00)
    nx1 = d01 + u * (d11 - d01)
    value = nx0 + v * (nx1 - nx0)

    dnx0_dx = (1.0 - u) * g00[..., 0] + u * g10[..., 0] + du * (d10 - d00)
    dnx1_dx = (1.0 - u) * g01[..., 0] + u * g11[..., 0] + du * (d11 - d01)
    d_dx = (1.0 - v) * dnx0_dx + v * dnx1_dx

    dnx0_dy = (1.0 - u) * g00[..., 1] + u * g10[..., 1]
    dnx1_dy = (1.0 - u) * g01[..., 1] + u * g11[..., 1]
    d_dy = (1.0 - v) * dnx0_dy + v * dnx1_dy + dv * (nx1 - nx0)

    return value, d_dx, d_dy


def fractal_with_grad(x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
                      octaves: int = 3, base_freq: float = 3.0,
                      persistence: float = 0.5, lacunarity: float = 2.0):
    """Multi-octave noise; each octave gets its own table and offset."""
    value = np.zeros_like(x)
    d_dx = np.zeros_like(x)
    d_dy = np.zeros_like(x)
    amp = 1.0
    freq = base_freq
    for _ in range(max(1, octaves)):
        table = make_table(rng)
        ox, oy = rng.uniform(0.0, 256.0, size=2)
        n, nx, ny = perlin_with_grad(x * freq + ox, y * freq + oy, table)
        value += amp * n
        d_dx += amp * freq * nx
        d_dy += amp * freq * ny
        amp *= persistence
        freq *= lacunarity
    return value, d_dx, d_dy
