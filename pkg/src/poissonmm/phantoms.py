"""Synthetic piecewise-constant test images."""

from __future__ import annotations

import numpy as np

from .core import Raster


def disc_phantom(width: int, height: int, radius_frac: float = 0.35,
                 inside: float = 1.0, outside: float = 0.0) -> Raster:
    """Uniform disc centered on the grid."""
    cols = np.arange(width) - (width - 1) / 2.0
    rows = np.arange(height) - (height - 1) / 2.0
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    r = radius_frac * min(width, height)
    img = np.where(xx * xx + yy * yy <= r * r, inside, outside)
    return Raster.from_image(img)


def blocks_phantom(width: int, height: int, seed: int = 0,
                   background: float = 0.1, num_shapes: int = 6) -> Raster:
    """Seeded piecewise-constant phantom: rectangles and discs on a flat
    background, values in [background, 1]."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    img = np.full((height, width), float(background))
    cols = np.arange(width)[None, :]
    rows = np.arange(height)[:, None]
    for _ in range(num_shapes):
        value = float(rng.uniform(0.25, 1.0))
        if rng.random() < 0.5:
            x0 = int(rng.integers(0, width - 2))
            y0 = int(rng.integers(0, height - 2))
            x1 = int(rng.integers(x0 + 1, width))
            y1 = int(rng.integers(y0 + 1, height))
            img[y0:y1, x0:x1] = value
        else:
            cx = float(rng.uniform(0.2, 0.8)) * width
            cy = float(rng.uniform(0.2, 0.8)) * height
            r = float(rng.uniform(0.08, 0.25)) * min(width, height)
            mask = (cols - cx) ** 2 + (rows - cy) ** 2 <= r * r
            img[mask] = value
    return Raster.from_image(np.clip(img, 0.0, 1.0))
