"""Domain types, the linear-operator contract, and shared numeric utilities.

All arithmetic is 64-bit floating point. Rasters and measurement vectors
are immutable after construction (their backing arrays are marked
read-only), so they can be shared freely between concurrent solver runs.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Shape or length mismatch between rasters, measurements, or operators."""


class DomainError(ValueError):
    """Value outside the mathematical domain of an operation (e.g. negative intensities)."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateOperatorError(ValueError):
    """Operator has a zero sensitivity entry: some pixel is unseen by the forward model."""


class SingularAnchorError(ValueError):
    """Surrogate anchor projects to zero in a bin with a positive count."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. zero-variance reference region)."""


class FormatError(ValueError):
    """Malformed input file."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Raster:
    """Nonnegative-by-convention 2-D image stored as a flat row-major vector.

    The sign convention is not enforced here: intermediate quantities such
    as gradient steps may legitimately be negative. Solvers guarantee
    nonnegativity of their own iterates.
    """

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DimensionError(f"raster dimensions must be positive, got {self.width}x{self.height}")
        arr = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if arr.size != self.width * self.height:
            raise DimensionError(
                f"raster expects {self.width * self.height} values, got {arr.size}"
            )
        if arr is self.values and arr.flags.writeable:
            arr = arr.copy()
        object.__setattr__(self, "values", _readonly(arr))

    @property
    def image(self) -> np.ndarray:
        """Read-only (height, width) view."""
        return self.values.reshape(self.height, self.width)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.height)

    @classmethod
    def from_image(cls, image) -> "Raster":
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got ndim={image.ndim}")
        h, w = image.shape
        return cls(w, h, image.reshape(-1))

    @classmethod
    def full(cls, width: int, height: int, value: float) -> "Raster":
        return cls(width, height, np.full(width * height, float(value)))

    @classmethod
    def zeros(cls, width: int, height: int) -> "Raster":
        return cls.full(width, height, 0.0)

    @classmethod
    def ones(cls, width: int, height: int) -> "Raster":
        return cls.full(width, height, 1.0)


@dataclass(frozen=True)
class MeasurementVector:
    """Flat vector of observed (or predicted) measurement bins."""

    bins: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.bins, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise DimensionError("measurement vector must have at least one bin")
        if arr is self.bins and arr.flags.writeable:
            arr = arr.copy()
        object.__setattr__(self, "bins", _readonly(arr))

    @property
    def length(self) -> int:
        return self.bins.size


class LinearOperator(abc.ABC):
    """Contract for a linear forward model with nonnegative coefficients.

    Implementations provide a matched apply/adjoint pair; `adjoint` must be
    the exact algebraic transpose of `apply` (checked by
    :func:`adjoint_consistency`). Operators are immutable and reentrant.
    """

    #: (width, height) of admissible input rasters
    input_shape: tuple[int, int]
    #: number of measurement bins produced by apply()
    output_length: int

    @abc.abstractmethod
    def apply(self, x: Raster) -> MeasurementVector:
        raise NotImplementedError

    @abc.abstractmethod
    def adjoint(self, v: MeasurementVector) -> Raster:
        raise NotImplementedError

    def output_blocks(self) -> tuple[int, int]:
        """Natural subset axis as (block_count, block_size).

        Subset splitting selects interleaved blocks along this axis.
        """
        raise ConfigurationError(f"{type(self).__name__} has no natural subset axis")

    # -- validation helpers shared by implementations ---------------------

    def _check_input(self, x: Raster):
        if (x.width, x.height) != tuple(self.input_shape):
            raise DimensionError(
                f"operator expects {self.input_shape[0]}x{self.input_shape[1]} raster, "
                f"got {x.width}x{x.height}"
            )

    def _check_output(self, v: MeasurementVector):
        if v.length != self.output_length:
            raise DimensionError(
                f"operator expects {self.output_length} bins, got {v.length}"
            )


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, iteration counts, and noise-model parameters for a solver run.

    `lam` is the regularization weight; `data_tau`, when set, overrides the
    step size of the data-term proximal update only (the regularizer keeps
    `tau`) and disqualifies the run from convergence certification.
    """

    tau: float = 1.0
    lam: float = 0.0
    sigma_denoiser: float = 0.0
    iterations: int = 100
    subsets: int = 1
    background: float = 0.0
    lipschitz_bound: float | None = None
    seed: int = 0
    data_tau: float | None = None
    early_stop: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.lam < 0:
            raise ConfigurationError(f"lam must be nonnegative, got {self.lam}")
        if self.sigma_denoiser < 0:
            raise ConfigurationError("sigma_denoiser must be nonnegative")
        if self.iterations <= 0:
            raise ConfigurationError("iterations must be positive")
        if self.subsets <= 0:
            raise ConfigurationError("subsets must be positive")
        if self.background < 0:
            raise ConfigurationError("background must be nonnegative")
        if self.lipschitz_bound is not None and self.lipschitz_bound <= 0:
            raise ConfigurationError("lipschitz_bound must be positive")
        if self.data_tau is not None and self.data_tau <= 0:
            raise ConfigurationError("data_tau must be positive")


@dataclass(frozen=True)
class TraceRecord:
    """One row of a convergence trace. `residual_sq` is ||x_n - x_{n-1}||^2
    and is NaN on the initial row, which has no predecessor."""

    iteration: int
    f_value: float
    g_value: float
    h_value: float
    residual_sq: float
    psnr: float = math.nan


@dataclass
class ConvergenceTrace:
    """Per-iteration objective values of a solver run.

    Row 0 records the initial point, so a run of N iterations yields N + 1
    rows; the descent-rate bound needs h at the initial point.
    """

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])

    @property
    def g_values(self) -> np.ndarray:
        return np.array([r.g_value for r in self.records])

    @property
    def h_values(self) -> np.ndarray:
        return np.array([r.h_value for r in self.records])

    @property
    def residuals_sq(self) -> np.ndarray:
        return np.array([r.residual_sq for r in self.records])

    @property
    def psnr_values(self) -> np.ndarray:
        return np.array([r.psnr for r in self.records])


def dot(a, b) -> float:
    """Inner product of two flat real sequences."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise DimensionError(f"dot of length {a.size} against length {b.size}")
    return float(np.dot(a, b))


def adjoint_consistency(op: LinearOperator, trials: int = 20, seed: int = 0) -> float:
    """Worst relative defect of <Ax, v> = <x, A^T v> over seeded random pairs.

    Draws x and v uniform in [0, 1) (nonnegative, so the inner products do
    not cancel and the relative error is well scaled). A conforming
    operator scores around machine epsilon; a mismatched adjoint scores
    order one.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    w, h = op.input_shape
    rng = np.random.Generator(np.random.Philox(key=seed))
    floor = np.finfo(np.float64).tiny
    worst = 0.0
    for _ in range(trials):
        x = Raster(w, h, rng.random(w * h))
        v = MeasurementVector(rng.random(op.output_length))
        lhs = dot(op.apply(x).bins, v.bins)
        rhs = dot(x.values, op.adjoint(v).values)
        worst = max(worst, abs(lhs - rhs) / (abs(lhs) + floor))
    return worst
