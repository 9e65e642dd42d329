"""Seeded generation of Poisson and Poisson-Gaussian measurements.

Randomness comes from numpy's counter-based Philox generator, so a given
(mean, spec) pair always yields bit-identical output regardless of
platform. Poisson variates are drawn by exact CDF inversion for rates up
to 30 and by Hormann's PTRS transformed rejection above that, which keeps
the low-count regime exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import DomainError, ConfigurationError, MeasurementVector

_INVERSION_MAX_RATE = 30.0
# P(K > 400 | rate <= 30) is below 1e-200; the cap only guards against a
# uniform draw landing beyond the representable CDF plateau.
_INVERSION_MAX_STEPS = 400
_PTRS_MAX_ROUNDS = 1000


@dataclass(frozen=True)
class NoiseSpec:
    """Gain, electronic-noise level, and seed of a simulated acquisition."""

    zeta: float
    gauss_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.zeta <= 0:
            raise ConfigurationError(f"zeta must be positive, got {self.zeta}")
        if self.gauss_sigma < 0:
            raise ConfigurationError("gauss_sigma must be nonnegative")


def _poisson_inversion(rate: np.ndarray, rng) -> np.ndarray:
    """Exact sequential-search inversion, vectorized over bins."""
    u = rng.random(rate.size)
    p = np.exp(-rate)
    cdf = p.copy()
    k = np.zeros(rate.size)
    for i in range(1, _INVERSION_MAX_STEPS + 1):
        pending = u > cdf
        if not pending.any():
            break
        k[pending] += 1.0
        p *= rate / i
        cdf += p
    return k


def _poisson_ptrs(rate: np.ndarray, rng) -> np.ndarray:
    """Hormann's PTRS transformed-rejection sampler for large rates."""
    out = np.empty(rate.size)
    todo = np.arange(rate.size)
    b = 0.931 + 2.53 * np.sqrt(rate)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_rate = np.log(rate)
    for _ in range(_PTRS_MAX_ROUNDS):
        if todo.size == 0:
            break
        u = rng.random(todo.size) - 0.5
        v = rng.random(todo.size)
        us = 0.5 - np.abs(u)
        k = np.floor((2.0 * a[todo] / us + b[todo]) * u + rate[todo] + 0.43)

        accept = (us >= 0.07) & (v <= v_r[todo])
        usable = (k >= 0) & ((us >= 0.013) | (v <= us))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_accept = (
                np.log(v * inv_alpha[todo] / (a[todo] / (us * us) + b[todo]))
                <= k * log_rate[todo] - rate[todo] - gammaln(k + 1.0)
            )
        accept |= usable & log_accept

        out[todo[accept]] = k[accept]
        todo = todo[~accept]
    if todo.size:
        # astronomically unlikely; fall back to the exactly-capped inversion
        out[todo] = _poisson_inversion(rate[todo], rng)
    return out


def _poisson_counts(rate: np.ndarray, rng) -> np.ndarray:
    counts = np.zeros(rate.shape)
    small = rate <= _INVERSION_MAX_RATE
    if small.any():
        counts[small] = _poisson_inversion(rate[small], rng)
    if (~small).any():
        counts[~small] = _poisson_ptrs(rate[~small], rng)
    return counts


def _rng_for(spec: NoiseSpec):
    return np.random.Generator(np.random.Philox(key=spec.seed))


def sample_poisson(mean: MeasurementVector, spec: NoiseSpec,
                   scaled: bool = False) -> MeasurementVector:
    """Counts k with k_i ~ Poisson(zeta * mean_i), deterministic per seed.

    With ``scaled=True`` returns the gain-normalized observation k / zeta.
    """
    if np.any(mean.bins < 0):
        raise DomainError("Poisson mean must be nonnegative")
    counts = _poisson_counts(spec.zeta * mean.bins, _rng_for(spec))
    return MeasurementVector(counts / spec.zeta if scaled else counts)


def sample_poisson_gaussian(mean: MeasurementVector, spec: NoiseSpec) -> MeasurementVector:
    """z = k/zeta + eps with k Poisson and eps ~ N(0, gauss_sigma^2). May be negative."""
    if np.any(mean.bins < 0):
        raise DomainError("Poisson mean must be nonnegative")
    rng = _rng_for(spec)
    z = _poisson_counts(spec.zeta * mean.bins, rng) / spec.zeta
    if spec.gauss_sigma > 0:
        z = z + rng.normal(0.0, spec.gauss_sigma, mean.length)
    return MeasurementVector(z)


def shifted_poisson_preprocess(z: MeasurementVector, gauss_sigma: float) -> MeasurementVector:
    """Shift by the Gaussian variance and clamp negatives to zero."""
    return MeasurementVector(np.maximum(z.bins + gauss_sigma**2, 0.0))


def gauss_sigma_from_fraction(clean: MeasurementVector, fraction: float) -> float:
    """Electronic-noise level as a fraction of the global mean clean signal.

    Percent-of-signal noise specifications are resolved against the mean of
    the noiseless measurement, not per bin.
    """
    if fraction < 0:
        raise ConfigurationError("fraction must be nonnegative")
    return fraction * float(np.mean(clean.bins))
