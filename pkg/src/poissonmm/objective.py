"""Data fidelity, regularizers, and the composite objective.

The data term is the Poisson negative log-likelihood (a generalized
Kullback-Leibler divergence between counts and predicted bins, up to
constants), optionally shifted by a constant background for the
shifted-Poisson noise model. Regularizers follow the gradient-step
contract: an explicit penalty with an explicit Lipschitz-smooth gradient,
whose induced denoiser is one gradient step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    ConfigurationError,
    DimensionError,
    DomainError,
    LinearOperator,
    MeasurementVector,
    Raster,
)
from .operators import Convolution2D, Kernel


@dataclass(frozen=True)
class PoissonNLL:
    """Poisson negative log-likelihood of measurements y under operator op.

    `background` is the constant added to every predicted bin (the Gaussian
    variance under the shifted-Poisson model; zero for pure Poisson data).
    """

    y: MeasurementVector
    op: LinearOperator
    background: float = 0.0

    def __post_init__(self):
        if self.background < 0:
            raise DomainError("background must be nonnegative")
        if np.any(self.y.bins < 0):
            raise DomainError("counts must be nonnegative")
        if self.y.length != self.op.output_length:
            raise DimensionError(
                f"operator produces {self.op.output_length} bins, data has {self.y.length}"
            )


def nll_value_from_projection(y: np.ndarray, projection: np.ndarray) -> float:
    """sum_i [p_i - y_i log p_i] with the 0*log(0) := 0 convention.

    Returns +inf when some positive count meets a zero projection. The sum
    is exactly rounded (fsum) so per-iteration descent checks are not
    polluted by accumulation error.
    """
    pos = y > 0
    if np.any(pos & (projection <= 0)):
        return math.inf
    terms = projection.copy()
    terms[pos] -= y[pos] * np.log(projection[pos])
    return math.fsum(terms)


def nll_eval(nll: PoissonNLL, x: Raster) -> float:
    """Evaluate the (shifted) Poisson NLL at a nonnegative raster."""
    if np.any(x.values < 0):
        raise DomainError("NLL is only defined for nonnegative rasters")
    projection = nll.op.apply(x).bins + nll.background
    return nll_value_from_projection(nll.y.bins, projection)


@dataclass(frozen=True)
class GradStepRegularizer:
    """Explicit penalty g with gradient and a Lipschitz bound for it.

    The induced denoiser is the gradient step x - tau * grad(x); see
    :func:`gs_denoise`. `sigma` records the nominal noise level the
    instance was parameterized for.
    """

    eval_fn: Callable[[Raster], float]
    grad_fn: Callable[[Raster], Raster]
    sigma: float
    lipschitz_bound: float
    name: str = ""

    def eval(self, x: Raster) -> float:
        return self.eval_fn(x)

    def grad(self, x: Raster) -> Raster:
        return self.grad_fn(x)


def gs_denoise(reg: GradStepRegularizer, x: Raster, tau: float) -> Raster:
    """One explicit gradient step on the regularizer: x - tau * grad(x)."""
    if tau == 0.0:
        return x
    return Raster(x.width, x.height, x.values - tau * reg.grad(x).values)


def _smoother_symbol_bound(kernel: Kernel, width: int, height: int) -> float:
    """2 * max |1 - K(w)|^2 over the grid Fourier symbol of the kernel.

    Periodic convolution is circulant, so the singular values of I - B are
    exactly |1 - K| at the grid frequencies.
    """
    embedded = np.zeros((height, width))
    embedded[: kernel.height, : kernel.width] = kernel.grid
    embedded = np.roll(embedded, (-(kernel.height // 2), -(kernel.width // 2)), axis=(0, 1))
    symbol = np.fft.fft2(embedded)
    return 2.0 * float(np.max(np.abs(1.0 - symbol)) ** 2)


def linear_smoother_regularizer(kernel: Kernel, sigma: float,
                                width: int, height: int) -> GradStepRegularizer:
    """Penalty ||x - Bx||^2 for B the periodic convolution by `kernel`.

    The kernel must be mass-preserving (weights sum to 1) and point
    symmetric, so that B is a symmetric smoother that fixes constants. For
    this analytic stand-in, `sigma` is purely a label: callers map a noise
    level to a kernel width themselves (e.g. a Gaussian kernel of standard
    deviation sigma).
    """
    if abs(kernel.mass - 1.0) > 1e-12:
        raise ConfigurationError(
            f"smoother kernel must have unit mass, got {kernel.mass!r}"
        )
    if not kernel.is_symmetric:
        raise ConfigurationError("smoother kernel must be point symmetric")
    op = Convolution2D(kernel, width, height)
    bound = _smoother_symbol_bound(kernel, width, height)

    def eval_fn(x: Raster) -> float:
        r = x.values - op.apply(x).bins
        return float(np.dot(r, r))

    def grad_fn(x: Raster) -> Raster:
        r = x.values - op.apply(x).bins
        # 2 (I - B)^T (I - B) x, with B^T realized by the exact adjoint
        rr = r - op.adjoint(MeasurementVector(r)).values
        return Raster(x.width, x.height, 2.0 * rr)

    return GradStepRegularizer(eval_fn, grad_fn, sigma, bound, name="linear_smoother")


def smoothed_tv_regularizer(epsilon: float, sigma: float | None = None) -> GradStepRegularizer:
    """Smooth total-variation surrogate, forward differences, periodic boundary.

    g(x) = sum_p sqrt(dx_p^2 + dy_p^2 + eps^2) - eps. The -eps offset makes
    constant images score exactly zero. The gradient bound 8/eps is the
    standard one for this discretization. When no explicit `sigma` is
    given, the nominal noise level is taken equal to eps.
    """
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    eps2 = epsilon * epsilon

    def _diffs(img: np.ndarray):
        dx = np.roll(img, -1, axis=1) - img
        dy = np.roll(img, -1, axis=0) - img
        return dx, dy

    def eval_fn(x: Raster) -> float:
        dx, dy = _diffs(x.image)
        return math.fsum((np.sqrt(dx * dx + dy * dy + eps2) - epsilon).reshape(-1))

    def grad_fn(x: Raster) -> Raster:
        img = x.image
        dx, dy = _diffs(img)
        root = np.sqrt(dx * dx + dy * dy + eps2)
        gx = dx / root
        gy = dy / root
        g = -gx - gy + np.roll(gx, 1, axis=1) + np.roll(gy, 1, axis=0)
        return Raster(x.width, x.height, g.reshape(-1))

    return GradStepRegularizer(
        eval_fn, grad_fn, epsilon if sigma is None else sigma, 8.0 / epsilon,
        name="smoothed_tv",
    )


def composite_eval(nll: PoissonNLL, reg: GradStepRegularizer | None,
                   lam: float, x: Raster) -> float:
    """h(x) = f(x) + lam * g(x)."""
    if lam < 0:
        raise DomainError("lam must be nonnegative")
    f = nll_eval(nll, x)
    if reg is None or lam == 0.0:
        return f
    return f + lam * reg.eval(x)
