"""Iterative solvers and runtime convergence diagnostics.

MLEM and OSEM are the classical multiplicative schemes; `mfb_run` is the
majorized forward-backward iteration (gradient step on the regularizer,
then the proximal map of the EM majorant anchored at the current point);
`pnp_mm_run` is the plug-and-play variant that anchors the majorant at the
denoised half-step, per its closed-form update. Certified runs (single
step size with tau * lam * L < 1) are entitled to the monotone-descent and
O(1/N) residual-rate checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .core import (
    ConfigurationError,
    DimensionError,
    DomainError,
    ConvergenceTrace,
    LinearOperator,
    MeasurementVector,
    Raster,
    SingularAnchorError,
    SolverConfig,
    TraceRecord,
)
from .majorize import build_context, surrogate_prox
from .metrics import psnr as _psnr
from .objective import (
    GradStepRegularizer,
    PoissonNLL,
    gs_denoise,
    nll_value_from_projection,
)
from .operators import sensitivity as operator_sensitivity, split_subsets

_EARLY_STOP_REL = 1e-14

IterateHook = Callable[[int, Raster], None]


@dataclass
class SolveResult:
    """Final reconstruction plus the trace and certification status of a run."""

    reconstruction: Raster
    trace: ConvergenceTrace
    certified: bool
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.reconstruction.values < 0):
            raise DomainError("solver produced a negative reconstruction entry")


def _trace_psnr(x: Raster, truth: Raster | None, peak: float) -> float:
    if truth is None:
        return math.nan
    return _psnr(truth, x, peak)


def _check_nonnegative(x: np.ndarray, what: str):
    if np.any(x < 0):
        raise DomainError(f"{what} produced a negative iterate entry")


def _base_metadata(solver: str, config: SolverConfig, **extra) -> dict:
    meta = {"solver": solver, "config": asdict(config)}
    meta.update(extra)
    return meta


def _em_step(x: np.ndarray, op: LinearOperator, y: np.ndarray,
             projection: np.ndarray, s: np.ndarray) -> np.ndarray:
    """One multiplicative update x <- (x / s) * A^T(y / projection)."""
    pos = y > 0
    if np.any(pos & (projection <= 0)):
        raise SingularAnchorError(
            "iterate projects to zero in a bin with a positive count"
        )
    ratio = np.zeros_like(projection)
    ratio[pos] = y[pos] / projection[pos]
    t = x * op.adjoint(MeasurementVector(ratio)).values
    return t / s


def mlem_run(nll: PoissonNLL, config: SolverConfig, *,
             truth: Raster | None = None, psnr_peak: float = 1.0,
             on_iterate: IterateHook | None = None) -> SolveResult:
    """Maximum-likelihood EM from a flat start; f is non-increasing (Lemma-style
    descent of the tangent majorant), so the run is always certified."""
    op = nll.op
    w, h = op.input_shape
    y = nll.y.bins
    s = operator_sensitivity(op).values

    x = np.ones(w * h)
    projection = op.apply(Raster(w, h, x)).bins + nll.background
    f = nll_value_from_projection(y, projection)
    trace = ConvergenceTrace()
    trace.append(TraceRecord(0, f, 0.0, f, math.nan,
                             _trace_psnr(Raster(w, h, x), truth, psnr_peak)))

    for n in range(1, config.iterations + 1):
        x_new = _em_step(x, op, y, projection, s)
        _check_nonnegative(x_new, "mlem")
        projection = op.apply(Raster(w, h, x_new)).bins + nll.background
        f = nll_value_from_projection(y, projection)
        res = float(np.sum((x_new - x) ** 2))
        raster = Raster(w, h, x_new)
        trace.append(TraceRecord(n, f, 0.0, f, res, _trace_psnr(raster, truth, psnr_peak)))
        if on_iterate is not None:
            on_iterate(n, raster)
        x = x_new
        if config.early_stop and res < _EARLY_STOP_REL * float(np.dot(x, x)):
            break

    return SolveResult(Raster(w, h, x), trace, certified=True,
                       metadata=_base_metadata("mlem", config))


def osem_run(nll: PoissonNLL, config: SolverConfig, *,
             truth: Raster | None = None, psnr_peak: float = 1.0,
             on_iterate: IterateHook | None = None) -> SolveResult:
    """Ordered-subsets EM: the multiplicative update cycled over interleaved
    subsets with their own sensitivities, in fixed ascending order. One
    trace record per full cycle. With a single subset this is exactly MLEM,
    and only then does the monotone-descent guarantee apply."""
    op = nll.op
    w, h = op.input_shape
    y = nll.y.bins

    subs = split_subsets(op, config.subsets)
    sub_ys = [y if sub is op else y[sub.indices] for sub in subs]
    sub_s = [operator_sensitivity(sub).values for sub in subs]

    x = np.ones(w * h)
    projection = op.apply(Raster(w, h, x)).bins + nll.background
    f = nll_value_from_projection(y, projection)
    trace = ConvergenceTrace()
    trace.append(TraceRecord(0, f, 0.0, f, math.nan,
                             _trace_psnr(Raster(w, h, x), truth, psnr_peak)))

    for cycle in range(1, config.iterations + 1):
        x_cycle_start = x
        for k, sub in enumerate(subs):
            sub_proj = sub.apply(Raster(w, h, x)).bins + nll.background
            x = _em_step(x, sub, sub_ys[k], sub_proj, sub_s[k])
            _check_nonnegative(x, "osem")
        projection = op.apply(Raster(w, h, x)).bins + nll.background
        f = nll_value_from_projection(y, projection)
        res = float(np.sum((x - x_cycle_start) ** 2))
        raster = Raster(w, h, x)
        trace.append(TraceRecord(cycle, f, 0.0, f, res,
                                 _trace_psnr(raster, truth, psnr_peak)))
        if on_iterate is not None:
            on_iterate(cycle, raster)
        if config.early_stop and res < _EARLY_STOP_REL * float(np.dot(x, x)):
            break

    return SolveResult(Raster(w, h, x), trace, certified=(config.subsets == 1),
                       metadata=_base_metadata("osem", config, subsets=config.subsets))


def _resolve_steps(config: SolverConfig, reg: GradStepRegularizer | None):
    """Effective Lipschitz bound, data-term step, and certification status."""
    lipschitz = config.lipschitz_bound
    if lipschitz is None and reg is not None:
        lipschitz = reg.lipschitz_bound
    data_tau = config.data_tau if config.data_tau is not None else config.tau
    step_ok = lipschitz is not None and config.tau * config.lam * lipschitz < 1.0
    if config.lam == 0.0:
        step_ok = True
    certified = step_ok and config.data_tau is None
    return lipschitz, data_tau, certified


def mfb_run(nll: PoissonNLL, reg: GradStepRegularizer, config: SolverConfig, *,
            truth: Raster | None = None, psnr_peak: float = 1.0,
            on_iterate: IterateHook | None = None) -> SolveResult:
    """Majorized forward-backward: x <- prox of the EM majorant anchored at
    the current point, evaluated at the regularizer gradient step."""
    op = nll.op
    w, h = op.input_shape
    y = nll.y.bins
    lam = config.lam
    s_raster = operator_sensitivity(op)

    lipschitz, data_tau, certified = _resolve_steps(config, reg)
    if not certified:
        warnings.warn(
            "step sizes violate tau * lam * L < 1 (or use a split data step); "
            "run proceeds without convergence certification",
            stacklevel=2,
        )

    x = Raster(w, h, np.ones(w * h))
    projection = op.apply(x).bins + nll.background
    trace = ConvergenceTrace()

    def record(n, raster, projection, res):
        f = nll_value_from_projection(y, projection)
        g = reg.eval(raster)
        trace.append(TraceRecord(n, f, g, f + lam * g, res,
                                 _trace_psnr(raster, truth, psnr_peak)))

    record(0, x, projection, math.nan)

    for n in range(1, config.iterations + 1):
        ctx = build_context(nll, x, sensitivity=s_raster, projection=projection)
        if lam == 0.0:
            u = x
        else:
            u = Raster(w, h, x.values - config.tau * lam * reg.grad(x).values)
        x_new = surrogate_prox(ctx, u, data_tau)
        _check_nonnegative(x_new.values, "mfb")
        projection = op.apply(x_new).bins + nll.background
        res = float(np.sum((x_new.values - x.values) ** 2))
        record(n, x_new, projection, res)
        if on_iterate is not None:
            on_iterate(n, x_new)
        x = x_new
        if config.early_stop and res < _EARLY_STOP_REL * float(np.dot(x.values, x.values)):
            break

    return SolveResult(x, trace, certified,
                       metadata=_base_metadata("mfb", config,
                                               lipschitz_bound=lipschitz))


def pnp_mm_run(nll: PoissonNLL, reg: GradStepRegularizer | None,
               config: SolverConfig, *,
               denoiser: Callable[[Raster], Raster] | None = None,
               truth: Raster | None = None, psnr_peak: float = 1.0,
               on_iterate: IterateHook | None = None) -> SolveResult:
    """Two-step plug-and-play iteration.

    Half step: convex combination lam*tau * D(x) + (1 - lam*tau) * x, with
    D the unit-step gradient denoiser of `reg` (so the half step is a
    gradient step of size lam*tau on the regularizer). Full step: the
    closed-form proximal update of the EM majorant anchored at the current
    iterate, evaluated at the half step. Anchoring at the current iterate
    (rather than at the half step) is what the descent guarantees cover;
    the half-step variant measurably breaks monotone descent.

    With background > 0 the returned reconstruction has the constant
    background subtracted and is clamped at zero (the iterates approximate
    the background-shifted intensity); the uncorrected image is kept in
    ``metadata["uncorrected_reconstruction"]``.

    An arbitrary external `denoiser` may be supplied instead of `reg`; the
    run is then never certified and the trace records h = f alone.
    """
    if (reg is None) == (denoiser is None):
        raise ConfigurationError("provide exactly one of reg and denoiser")
    op = nll.op
    w, h = op.input_shape
    y = nll.y.bins
    lam, tau = config.lam, config.tau
    lt = lam * tau
    s_raster = operator_sensitivity(op)

    if reg is not None:
        lipschitz, data_tau, certified = _resolve_steps(config, reg)
        denoise = lambda r: gs_denoise(reg, r, 1.0)
    else:
        lipschitz, data_tau, certified = None, (config.data_tau or config.tau), False
        denoise = denoiser
    if not certified:
        warnings.warn("run proceeds without convergence certification", stacklevel=2)

    x = Raster(w, h, np.ones(w * h))
    projection = op.apply(x).bins + nll.background
    trace = ConvergenceTrace()

    def record(n, raster, projection, res):
        f = nll_value_from_projection(y, projection)
        g = reg.eval(raster) if reg is not None else 0.0
        trace.append(TraceRecord(n, f, g, f + lam * g, res,
                                 _trace_psnr(raster, truth, psnr_peak)))

    record(0, x, projection, math.nan)

    for n in range(1, config.iterations + 1):
        x_half = Raster(w, h, lt * denoise(x).values + (1.0 - lt) * x.values)
        ctx = build_context(nll, x, sensitivity=s_raster, projection=projection)
        x_new = surrogate_prox(ctx, x_half, data_tau)
        _check_nonnegative(x_new.values, "pnp_mm")
        projection = op.apply(x_new).bins + nll.background
        res = float(np.sum((x_new.values - x.values) ** 2))
        record(n, x_new, projection, res)
        if on_iterate is not None:
            on_iterate(n, x_new)
        x = x_new
        if config.early_stop and res < _EARLY_STOP_REL * float(np.dot(x.values, x.values)):
            break

    metadata = _base_metadata("pnp_mm", config, lipschitz_bound=lipschitz,
                              external_denoiser=reg is None)
    reconstruction = x
    if nll.background > 0:
        metadata["uncorrected_reconstruction"] = x
        metadata["background_corrected"] = True
        reconstruction = Raster(w, h, np.maximum(x.values - nll.background, 0.0))
    return SolveResult(reconstruction, trace, certified, metadata=metadata)


def final_denoise(result: SolveResult, reg: GradStepRegularizer, tau: float) -> Raster:
    """One gradient-step denoise of the reconstruction, clamped at zero.

    Post-processing only: recorded in the result metadata, never part of
    the convergence trace.
    """
    out = gs_denoise(reg, result.reconstruction, tau)
    out = Raster(out.width, out.height, np.maximum(out.values, 0.0))
    result.metadata["final_denoise"] = {"tau": tau, "sigma": reg.sigma, "name": reg.name}
    return out


def monotonicity_check(trace: ConvergenceTrace, tol: float) -> bool:
    """True when h never rises by more than tol between consecutive records."""
    if len(trace) == 0:
        raise DimensionError("cannot check an empty trace")
    h = trace.h_values
    return bool(np.all(h[1:] <= h[:-1] + tol))


def rate_check(trace: ConvergenceTrace, config: SolverConfig) -> bool | None:
    """Verify the O(1/N) bound on the best squared step for every prefix N.

    For each N, min over the first N steps of ||x_(n+1) - x_n||^2 must not
    exceed (h_0 - h_min) / (N * (1/(2 tau) - lam * L / 2)), with the
    unknown limit value of h replaced by the trace minimum (which only
    loosens the bound). Returns None when the certification precondition
    does not hold (the bound constant is then meaningless).
    """
    if len(trace) == 0:
        raise DimensionError("cannot check an empty trace")
    if config.lipschitz_bound is None:
        raise ConfigurationError("rate_check needs lipschitz_bound in the config")
    lam_l = config.lam * config.lipschitz_bound
    if config.data_tau is not None or not (config.tau * lam_l < 1.0):
        return None
    slope = 1.0 / (2.0 * config.tau) - lam_l / 2.0
    h = trace.h_values
    res = trace.residuals_sq[1:]
    if res.size == 0:
        return True
    gap = float(h[0] - np.min(h))
    best = np.minimum.accumulate(res)
    n = np.arange(1, res.size + 1, dtype=np.float64)
    bounds = gap / (n * slope)
    return bool(np.all(best <= bounds + 1e-12 * (1.0 + np.abs(bounds))))
