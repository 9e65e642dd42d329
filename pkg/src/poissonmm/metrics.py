"""Image-quality metrics: PSNR, SSIM, MAE, NRMSE, CNR.

NRMSE normalizes by the L2 norm of the reference image. SSIM uses the
canonical 11x11 Gaussian window (sigma 1.5) with K1 = 0.01, K2 = 0.03 and
averages the local index over fully interior window positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import DimensionError, DomainError, Raster, UndefinedMetricError

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class RoiMask:
    """Boolean region of interest over a raster grid."""

    width: int
    height: int
    inside: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.inside, dtype=bool).reshape(-1)
        if arr.size != self.width * self.height:
            raise DimensionError(
                f"mask expects {self.width * self.height} pixels, got {arr.size}"
            )
        if not arr.any():
            raise DomainError(f"mask {self.label!r} selects no pixels")
        arr.flags.writeable = False
        object.__setattr__(self, "inside", arr)


def _check_shapes(a: Raster, b: Raster):
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionError(
            f"image shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def psnr(truth: Raster, estimate: Raster, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); +inf for an exact match."""
    _check_shapes(truth, estimate)
    if peak <= 0:
        raise DomainError("peak must be positive")
    mse = float(np.mean((truth.values - estimate.values) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window() -> np.ndarray:
    r = _SSIM_WINDOW // 2
    offs = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(offs**2) / (2.0 * _SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(truth: Raster, estimate: Raster, peak: float = 1.0) -> float:
    """Mean local structural similarity over interior window positions."""
    _check_shapes(truth, estimate)
    if peak <= 0:
        raise DomainError("peak must be positive")
    if truth.width < _SSIM_WINDOW or truth.height < _SSIM_WINDOW:
        raise DimensionError(
            f"ssim needs images of at least {_SSIM_WINDOW}x{_SSIM_WINDOW}"
        )
    x = truth.image
    y = estimate.image
    win = _gaussian_window()
    pad = _SSIM_WINDOW // 2

    def windowed(img):
        # interior rows/cols are exact windowed means regardless of boundary mode
        return ndimage.correlate(img, win, mode="nearest")[pad:-pad, pad:-pad]

    ux = windowed(x)
    uy = windowed(y)
    vx = windowed(x * x) - ux * ux
    vy = windowed(y * y) - uy * uy
    vxy = windowed(x * y) - ux * uy

    c1 = (_SSIM_K1 * peak) ** 2
    c2 = (_SSIM_K2 * peak) ** 2
    num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2)
    den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def mae(truth: Raster, estimate: Raster, scale: float = 1.0) -> float:
    """scale * mean(|truth - estimate|); scale maps normalized units to
    physical ones (e.g. 3000 for a [0,1] image spanning [-1000, 2000] HU)."""
    _check_shapes(truth, estimate)
    return scale * float(np.mean(np.abs(truth.values - estimate.values)))


def nrmse(truth: Raster, estimate: Raster) -> float:
    """||estimate - truth||_2 / ||truth||_2."""
    _check_shapes(truth, estimate)
    denom = float(np.linalg.norm(truth.values))
    if denom == 0.0:
        raise DomainError("nrmse undefined for an all-zero reference")
    return float(np.linalg.norm(estimate.values - truth.values)) / denom


def cnr(image: Raster, roi_a: RoiMask, roi_b: RoiMask) -> float:
    """(mean over roi_a - mean over roi_b) / population std over roi_b."""
    if (roi_a.width, roi_a.height) != (image.width, image.height) or (
        roi_b.width, roi_b.height) != (image.width, image.height):
        raise DimensionError("mask shape does not match image")
    if int(np.sum(roi_b.inside)) < 2:
        raise UndefinedMetricError("reference region needs at least 2 pixels")
    vals_a = image.values[roi_a.inside]
    vals_b = image.values[roi_b.inside]
    std_b = float(np.std(vals_b))
    if std_b == 0.0:
        raise UndefinedMetricError("reference region has zero variance")
    return (float(np.mean(vals_a)) - float(np.mean(vals_b))) / std_b
