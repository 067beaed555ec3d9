"""Procedural multi-octave value noise for ground surfaces and test imagery.

Deterministic in (seed, coordinate): lattice values come from an integer
hash, never from a stateful RNG, so any point can be evaluated in any order
or batch shape with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xC2B2AE3D27D4EB4F)
_M3 = np.uint64(0xBF58476D1CE4E5B9)
_M4 = np.uint64(0x94D049BB133111EB)


def _hash01(ix: np.ndarray, iy: np.ndarray, salt: int) -> np.ndarray:
    """Lattice corner hash to [0, 1); splitmix-style 64-bit finalizer."""
    z = (
        ix.astype(np.int64).astype(np.uint64) * _M1
        ^ iy.astype(np.int64).astype(np.uint64) * _M2
        ^ np.uint64(salt & 0xFFFFFFFFFFFFFFFF)
    )
    z = (z ^ (z >> np.uint64(30))) * _M3
    z = (z ^ (z >> np.uint64(27))) * _M4
    z = z ^ (z >> np.uint64(31))
    return z.astype(np.float64) / 2.0**64


def _value_noise(x: np.ndarray, y: np.ndarray, salt: int) -> np.ndarray:
    """Smoothstep-interpolated unit-wavelength value noise in [0, 1)."""
    x0 = np.floor(x)
    y0 = np.floor(y)
    tx = x - x0
    ty = y - y0
    sx = tx * tx * (3.0 - 2.0 * tx)
    sy = ty * ty * (3.0 - 2.0 * ty)
    v00 = _hash01(x0, y0, salt)
    v10 = _hash01(x0 + 1, y0, salt)
    v01 = _hash01(x0, y0 + 1, salt)
    v11 = _hash01(x0 + 1, y0 + 1, salt)
    top = v00 + sx * (v10 - v00)
    bot = v01 + sx * (v11 - v01)
    return top + sy * (bot - top)


@dataclass(frozen=True)
class GroundTexture:
    """Planar intensity function over ground coordinates (meters).

    Octave wavelengths halve from base_wavelength_m; with the default three
    octaves the finest detail is 0.75 m, comfortably above the pixel
    footprint of the default camera down to 2 m altitude, so rendered frames
    stay alias-free there.
    """

    seed: int = 0
    base_wavelength_m: float = 3.0
    octaves: int = 3
    persistence: float = 0.5
    lo: float = 0.15
    hi: float = 0.85

    def sample(self, x_m, y_m) -> np.ndarray:
        x = np.asarray(x_m, dtype=float)
        y = np.asarray(y_m, dtype=float)
        acc = np.zeros(np.broadcast(x, y).shape)
        total = 0.0
        for k in range(self.octaves):
            lam = self.base_wavelength_m / 2.0**k
            wgt = self.persistence**k
            acc = acc + wgt * _value_noise(x / lam, y / lam, (self.seed << 8) + k)
            total += wgt
        return self.lo + (self.hi - self.lo) * acc / total


def noise_image(
    height: int,
    width: int,
    seed: int,
    wavelengths_px=(32.0, 16.0, 8.0),
    weights=(1.0, 0.6, 0.35),
    shift=(0.0, 0.0),
) -> np.ndarray:
    """Test pattern evaluated directly in pixel space.

    shift=(dx, dy) moves the pattern by +dx right and +dy down with no
    resampling, so a pair of calls gives a frame pair whose true flow is
    exactly the shift.
    """
    yy, xx = np.meshgrid(
        np.arange(height, dtype=float), np.arange(width, dtype=float), indexing="ij"
    )
    x = xx - shift[0]
    y = yy - shift[1]
    acc = np.zeros((height, width))
    for k, (lam, wgt) in enumerate(zip(wavelengths_px, weights)):
        acc += wgt * _value_noise(x / lam, y / lam, (seed << 8) + k)
    return 0.1 + 0.8 * acc / sum(weights)
