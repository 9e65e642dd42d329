"""Concrete linear forward operators with exact adjoints.

Periodic 2-D convolution, a pixel-driven parallel-beam projector, the
identity, scalar rescaling, and interleaved subset splitting for
ordered-subsets solvers. All adjoints are exact algebraic transposes of
their forward maps, so `adjoint_consistency` holds to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    ConfigurationError,
    DegenerateOperatorError,
    DimensionError,
    LinearOperator,
    MeasurementVector,
    Raster,
)


@dataclass(frozen=True)
class Kernel:
    """Odd-sized nonnegative convolution kernel, row-major weights."""

    width: int
    height: int
    weights: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.width % 2 == 0 or self.height % 2 == 0:
            raise ConfigurationError(
                f"kernel dimensions must be odd and positive, got {self.width}x{self.height}"
            )
        arr = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        if arr.size != self.width * self.height:
            raise DimensionError(
                f"kernel expects {self.width * self.height} weights, got {arr.size}"
            )
        if np.any(arr < 0):
            raise ConfigurationError("kernel weights must be nonnegative")
        if arr is self.weights and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)

    @property
    def grid(self) -> np.ndarray:
        return self.weights.reshape(self.height, self.width)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def is_symmetric(self) -> bool:
        """Point symmetry w[-p] = w[p], i.e. the kernel equals its flip."""
        g = self.grid
        scale = max(float(np.max(g)), 1.0)
        return bool(np.max(np.abs(g - g[::-1, ::-1])) <= 1e-12 * scale)


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Normalized isotropic Gaussian kernel on an odd size x size grid."""
    if size % 2 == 0:
        raise ConfigurationError("gaussian kernel size must be odd")
    r = size // 2
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    gx = np.exp(-(offsets**2) / (2.0 * sigma**2))
    g = np.outer(gx, gx)
    return Kernel(size, size, g / g.sum())


def uniform_kernel(size: int) -> Kernel:
    if size % 2 == 0:
        raise ConfigurationError("uniform kernel size must be odd")
    return Kernel(size, size, np.full(size * size, 1.0 / (size * size)))


def delta_kernel(size: int = 1) -> Kernel:
    w = np.zeros(size * size)
    w[(size * size) // 2] = 1.0
    return Kernel(size, size, w)


class IdentityOperator(LinearOperator):
    def __init__(self, width: int, height: int):
        self.input_shape = (width, height)
        self.output_length = width * height

    def apply(self, x: Raster) -> MeasurementVector:
        self._check_input(x)
        return MeasurementVector(x.values)

    def adjoint(self, v: MeasurementVector) -> Raster:
        self._check_output(v)
        return Raster(self.input_shape[0], self.input_shape[1], v.bins)

    def output_blocks(self) -> tuple[int, int]:
        return (self.input_shape[1], self.input_shape[0])


class Convolution2D(LinearOperator):
    """Circular 2-D convolution; the adjoint is correlation with the same kernel.

    Periodic boundary keeps the sensitivity spatially constant (equal to the
    kernel mass) and the adjoint exact.
    """

    def __init__(self, kernel: Kernel, width: int, height: int):
        if kernel.width > width or kernel.height > height:
            raise DimensionError(
                f"{kernel.width}x{kernel.height} kernel does not fit a {width}x{height} image"
            )
        self.kernel = kernel
        self.input_shape = (width, height)
        self.output_length = width * height

    def apply(self, x: Raster) -> MeasurementVector:
        self._check_input(x)
        out = ndimage.convolve(x.image, self.kernel.grid, mode="wrap")
        return MeasurementVector(out.reshape(-1))

    def adjoint(self, v: MeasurementVector) -> Raster:
        self._check_output(v)
        w, h = self.input_shape
        out = ndimage.correlate(v.bins.reshape(h, w), self.kernel.grid, mode="wrap")
        return Raster(w, h, out.reshape(-1))

    def output_blocks(self) -> tuple[int, int]:
        return (self.input_shape[1], self.input_shape[0])


@dataclass(frozen=True)
class ProjectorGeometry:
    """Parallel-beam geometry: equally spaced view angles in [0, pi).

    The detector must cover the image diagonal
    (num_detector_bins >= diagonal / detector_spacing); this is validated
    against the actual raster when a projector is built.
    """

    num_angles: int
    num_detector_bins: int
    detector_spacing: float = 1.0

    def __post_init__(self):
        if self.num_angles <= 0:
            raise ConfigurationError("num_angles must be positive")
        if self.num_detector_bins < 2:
            raise ConfigurationError("num_detector_bins must be at least 2")
        if self.detector_spacing <= 0:
            raise ConfigurationError("detector_spacing must be positive")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.num_angles) * (math.pi / self.num_angles)

    @classmethod
    def for_image(cls, width: int, height: int, num_angles: int,
                  detector_spacing: float = 1.0) -> "ProjectorGeometry":
        diag = math.hypot(width, height)
        bins = int(math.ceil(diag / detector_spacing)) + 3
        return cls(num_angles, bins, detector_spacing)


class ParallelProjector(LinearOperator):
    """Pixel-driven parallel-beam projector with linear detector interpolation.

    Each pixel center is projected onto the detector axis of every view and
    its value split between the two nearest bins. Backprojection gathers
    with the identical weights, so the adjoint is exact by construction.
    Output is angle-major, detector-minor. Angle 0 projects along image
    rows; the detector center is aligned with the image center.
    """

    def __init__(self, geometry: ProjectorGeometry, width: int, height: int):
        self.geometry = geometry
        self.input_shape = (width, height)
        nb = geometry.num_detector_bins
        self.output_length = geometry.num_angles * nb

        cols = np.arange(width, dtype=np.float64) - (width - 1) / 2.0
        rows = np.arange(height, dtype=np.float64) - (height - 1) / 2.0
        yy, xx = np.meshgrid(rows, cols, indexing="ij")
        x = xx.reshape(-1)
        y = yy.reshape(-1)

        angles = geometry.angles
        # signed distance of each pixel center to the ray through the origin
        t = -np.outer(np.sin(angles), x) + np.outer(np.cos(angles), y)
        d = t / geometry.detector_spacing + (nb - 1) / 2.0
        if d.min() < 0.0 or d.max() > nb - 1:
            raise DimensionError(
                f"detector with {nb} bins does not cover a {width}x{height} image "
                f"at spacing {geometry.detector_spacing}"
            )
        i0 = np.clip(np.floor(d).astype(np.int64), 0, nb - 2)
        self._w1 = d - i0
        self._w0 = 1.0 - self._w1
        offsets = (np.arange(geometry.num_angles, dtype=np.int64) * nb)[:, None]
        self._idx0 = i0 + offsets
        self._idx1 = self._idx0 + 1

    def apply(self, x: Raster) -> MeasurementVector:
        self._check_input(x)
        vals = x.values
        out = np.bincount(
            self._idx0.reshape(-1),
            weights=(self._w0 * vals).reshape(-1),
            minlength=self.output_length,
        )
        out += np.bincount(
            self._idx1.reshape(-1),
            weights=(self._w1 * vals).reshape(-1),
            minlength=self.output_length,
        )
        return MeasurementVector(out)

    def adjoint(self, v: MeasurementVector) -> Raster:
        self._check_output(v)
        flat = v.bins
        acc = flat[self._idx0] * self._w0 + flat[self._idx1] * self._w1
        w, h = self.input_shape
        return Raster(w, h, acc.sum(axis=0))

    def output_blocks(self) -> tuple[int, int]:
        return (self.geometry.num_angles, self.geometry.num_detector_bins)


class ScaledOperator(LinearOperator):
    """factor * A for a positive scalar factor."""

    def __init__(self, base: LinearOperator, factor: float):
        if factor <= 0:
            raise ConfigurationError(f"scale factor must be positive, got {factor}")
        self.base = base
        self.factor = float(factor)
        self.input_shape = base.input_shape
        self.output_length = base.output_length

    def apply(self, x: Raster) -> MeasurementVector:
        return MeasurementVector(self.factor * self.base.apply(x).bins)

    def adjoint(self, v: MeasurementVector) -> Raster:
        w, h = self.input_shape
        return Raster(w, h, self.factor * self.base.adjoint(v).values)

    def output_blocks(self) -> tuple[int, int]:
        return self.base.output_blocks()


class BinSubsetOperator(LinearOperator):
    """Restriction of a parent operator to a fixed selection of output bins."""

    def __init__(self, parent: LinearOperator, indices: np.ndarray):
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise ConfigurationError("subset must select at least one bin")
        if idx.min() < 0 or idx.max() >= parent.output_length:
            raise DimensionError("subset indices out of range for parent operator")
        self.parent = parent
        self.indices = idx
        self.input_shape = parent.input_shape
        self.output_length = idx.size

    def apply(self, x: Raster) -> MeasurementVector:
        return MeasurementVector(self.parent.apply(x).bins[self.indices])

    def adjoint(self, v: MeasurementVector) -> Raster:
        self._check_output(v)
        full = np.zeros(self.parent.output_length)
        full[self.indices] = v.bins
        return self.parent.adjoint(MeasurementVector(full))


def sensitivity(op: LinearOperator) -> Raster:
    """Adjoint of the all-ones measurement: per-pixel total operator weight.

    Every entry must be strictly positive for multiplicative solvers to be
    well defined; a zero entry means the pixel is invisible to the operator.
    """
    s = op.adjoint(MeasurementVector(np.ones(op.output_length)))
    if np.any(s.values <= 0.0):
        raise DegenerateOperatorError(
            f"{int(np.sum(s.values <= 0.0))} pixel(s) have zero sensitivity"
        )
    return s


def split_subsets(op: LinearOperator, m: int) -> list[LinearOperator]:
    """Split into m sub-operators by stride-m selection along the natural axis.

    The natural axis is view angles for the projector and output rows for
    image-shaped outputs. m = 1 returns the original operator itself, so
    single-subset runs are bit-identical to unsplit ones.
    """
    if m <= 0:
        raise ConfigurationError("subset count must be positive")
    if m == 1:
        return [op]
    count, block = op.output_blocks()
    if count % m != 0:
        raise ConfigurationError(f"{m} subsets do not divide {count} output blocks")
    subsets = []
    for k in range(m):
        blocks = np.arange(k, count, m, dtype=np.int64)
        idx = (blocks[:, None] * block + np.arange(block, dtype=np.int64)).reshape(-1)
        subsets.append(BinSubsetOperator(op, idx))
    return subsets


def normalize_operator(op: LinearOperator) -> tuple[ScaledOperator, float]:
    """Rescale so the largest sensitivity entry is 1; returns (operator, factor)."""
    factor = 1.0 / float(np.max(sensitivity(op).values))
    return ScaledOperator(op, factor), factor
