"""Synthetic bi-temporal scenes for desk-scale runs and acceptance tests.

The base image is a grid of constant-valued blocks.  The second epoch
re-values a handful of axis-aligned rectangles (each value shifted by
half the dynamic range, wrapping, so every pixel inside genuinely
differs) and both epochs get independent Gaussian noise.  The reference
map marks exactly the re-valued rectangles.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .raster import Raster

_BLOCK_GRID = 4  # blocks per axis in the base image
_FIT_RETRIES = 200


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def synth_scene(
    height: int,
    width: int,
    n_changes: int,
    noise_sigma: float,
    seed: int = 0,
) -> tuple[Raster, Raster, Raster]:
    """Generate (t1, t2, reference) uint8 rasters.

    Args:
        height, width: Scene dimensions, both >= 32.
        n_changes: Number of changed rectangles, >= 1.
        noise_sigma: Gaussian noise level on the [0, 1] value scale.
        seed: Drives block values, rectangle placement and both noise draws.

    Raises ParameterError when the dimensions are too small or the
    requested rectangles cannot be placed without overlap.
    """
    if height < 32 or width < 32:
        raise ParameterError(f"dimensions must be >= 32, got {height}x{width}")
    if n_changes < 1:
        raise ParameterError(f"n_changes must be >= 1, got {n_changes}")
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")

    rng = np.random.default_rng(seed)
    by = (height + _BLOCK_GRID - 1) // _BLOCK_GRID
    bx = (width + _BLOCK_GRID - 1) // _BLOCK_GRID
    blocks = rng.uniform(0.1, 0.9, size=(_BLOCK_GRID, _BLOCK_GRID))
    base = np.repeat(np.repeat(blocks, by, axis=0), bx, axis=1)[:height, :width]

    occupied = np.zeros((height, width), dtype=bool)
    reference = np.zeros((height, width), dtype=bool)
    placed = 0
    for _ in range(_FIT_RETRIES):
        if placed == n_changes:
            break
        rect_h = int(rng.integers(height // 8, height // 4 + 1))
        rect_w = int(rng.integers(width // 8, width // 4 + 1))
        if rect_h > height or rect_w > width:
            continue
        y = int(rng.integers(0, height - rect_h + 1))
        x = int(rng.integers(0, width - rect_w + 1))
        if occupied[y : y + rect_h, x : x + rect_w].any():
            continue
        occupied[y : y + rect_h, x : x + rect_w] = True
        reference[y : y + rect_h, x : x + rect_w] = True
        placed += 1
    if placed < n_changes:
        raise ParameterError(
            f"could not fit {n_changes} non-overlapping change rectangles "
            f"in {height}x{width} after {_FIT_RETRIES} attempts"
        )

    base2 = base.copy()
    base2[reference] = (base2[reference] + 0.5) % 1.0  # wraps, so every pixel differs

    t1 = _quantize(base + noise_sigma * rng.standard_normal((height, width)))
    t2 = _quantize(base2 + noise_sigma * rng.standard_normal((height, width)))
    ref = np.where(reference, 255, 0).astype(np.uint8)

    return (
        Raster(height, width, 1, "uint8", t1[:, :, None]),
        Raster(height, width, 1, "uint8", t2[:, :, None]),
        Raster(height, width, 1, "uint8", ref[:, :, None]),
    )
