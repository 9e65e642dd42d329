"""The EM tangent majorant of the Poisson NLL and its closed-form minimizers.

The majorant is kept in separable reduced form: per-pixel linear weight s
(the sensitivity), per-pixel log weight t (the EM numerator), and an
anchor-dependent constant chosen so the surrogate touches the NLL exactly
at the anchor. Minimizing it gives the classical multiplicative update;
adding a proximity term gives a per-pixel quadratic whose nonnegative root
is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateOperatorError,
    DimensionError,
    DomainError,
    MeasurementVector,
    Raster,
    SingularAnchorError,
)
from .objective import PoissonNLL, nll_value_from_projection
from .operators import sensitivity as operator_sensitivity


@dataclass(frozen=True)
class SurrogateContext:
    """Separable form of the EM majorant anchored at one raster.

    anchor_projection holds (A anchor)_i + background; em_numerator holds
    t_k = anchor_k * (A^T (y / anchor_projection))_k with zero-count bins
    excluded from the ratio; constant makes the surrogate tangent.
    """

    anchor: Raster
    anchor_projection: MeasurementVector
    em_numerator: Raster
    sensitivity: Raster
    constant: float


def build_context(nll: PoissonNLL, anchor: Raster, *,
                  sensitivity: Raster | None = None,
                  projection: np.ndarray | None = None) -> SurrogateContext:
    """Assemble the majorant's separable data for a given anchor.

    `sensitivity` and `projection` may be passed in by iterative solvers
    that already hold them; they must equal op.adjoint(ones) and
    op.apply(anchor) + background respectively.
    """
    if np.any(anchor.values < 0):
        raise DomainError("surrogate anchor must be nonnegative")
    if (anchor.width, anchor.height) != tuple(nll.op.input_shape):
        raise DimensionError("anchor shape does not match operator input shape")
    if projection is None:
        projection = nll.op.apply(anchor).bins + nll.background
    y = nll.y.bins
    pos = y > 0
    if np.any(pos & (projection <= 0)):
        raise SingularAnchorError(
            "anchor projects to zero in a bin with a positive count"
        )
    ratio = np.zeros_like(projection)
    ratio[pos] = y[pos] / projection[pos]
    t = anchor.values * nll.op.adjoint(MeasurementVector(ratio)).values
    if sensitivity is None:
        sensitivity = operator_sensitivity(nll.op)

    f_anchor = nll_value_from_projection(y, projection)
    constant = f_anchor - _separable_sum(sensitivity.values, t, anchor.values)
    return SurrogateContext(
        anchor=anchor,
        anchor_projection=MeasurementVector(projection),
        em_numerator=Raster(anchor.width, anchor.height, t),
        sensitivity=sensitivity,
        constant=constant,
    )


def _separable_sum(s: np.ndarray, t: np.ndarray, x: np.ndarray) -> float:
    """sum_k [s_k x_k - t_k log x_k], with t_k = 0 terms contributing s_k x_k.

    Assumes t_k > 0 implies x_k > 0 (the caller screens the infinite case).
    """
    terms = s * x
    tpos = t > 0
    terms[tpos] -= t[tpos] * np.log(x[tpos])
    return math.fsum(terms)


def surrogate_eval(ctx: SurrogateContext, x: Raster) -> float:
    """Value of the majorant at x; +inf where a positive log weight meets zero."""
    if np.any(x.values < 0):
        raise DomainError("surrogate is only defined for nonnegative rasters")
    if x.values.size != ctx.anchor.values.size:
        raise DimensionError("raster shape does not match surrogate context")
    if np.any((ctx.em_numerator.values > 0) & (x.values == 0)):
        return math.inf
    return _separable_sum(ctx.sensitivity.values, ctx.em_numerator.values, x.values) + ctx.constant


def surrogate_argmin(ctx: SurrogateContext) -> Raster:
    """Exact minimizer t / s of the majorant: one multiplicative (MLEM) step."""
    s = ctx.sensitivity.values
    if np.any(s <= 0):
        raise DegenerateOperatorError("sensitivity must be strictly positive")
    a = ctx.anchor
    return Raster(a.width, a.height, ctx.em_numerator.values / s)


def surrogate_prox(ctx: SurrogateContext, u: Raster, tau: float) -> Raster:
    """Proximal map of the majorant: nonnegative root of the per-pixel quadratic.

    Solves x^2 - (u - tau s) x - tau t = 0 per pixel. The root is evaluated
    in the branch that avoids cancellation: directly when u - tau s >= 0,
    and as 2 tau t / (sqrt(disc) - (u - tau s)) otherwise, which also makes
    the result exactly nonnegative in floating point.
    """
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if u.values.size != ctx.anchor.values.size:
        raise DimensionError("raster shape does not match surrogate context")
    t = ctx.em_numerator.values
    d = u.values - tau * ctx.sensitivity.values
    disc = np.sqrt(d * d + 4.0 * tau * t)
    x = np.empty_like(d)
    pos = d >= 0
    x[pos] = 0.5 * (d[pos] + disc[pos])
    neg = ~pos
    num = 2.0 * tau * t[neg]
    den = disc[neg] - d[neg]
    x[neg] = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return Raster(u.width, u.height, x)
