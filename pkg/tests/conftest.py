import numpy as np
import pytest

from poissonmm import (
    Convolution2D,
    IdentityOperator,
    MeasurementVector,
    NoiseSpec,
    ParallelProjector,
    PoissonNLL,
    ProjectorGeometry,
    Raster,
    gaussian_kernel,
    sample_poisson,
)
from poissonmm.phantoms import blocks_phantom


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def make_operator(kind, width, height, angles=12):
    if kind == "identity":
        return IdentityOperator(width, height)
    if kind == "blur":
        return Convolution2D(gaussian_kernel(5, 1.0), width, height)
    if kind == "projector":
        return ParallelProjector(
            ProjectorGeometry.for_image(width, height, angles), width, height)
    raise ValueError(kind)


def make_poisson_problem(kind, size=16, seed=0, zeta=8.0, angles=12):
    """Seeded phantom + operator + Poisson counts, ready for a solver."""
    truth = blocks_phantom(size, size, seed=seed)
    op = make_operator(kind, size, size, angles)
    y = sample_poisson(op.apply(truth), NoiseSpec(zeta, 0.0, seed))
    return PoissonNLL(y, op), truth


def random_positive_raster(width, height, seed, lo=0.05, hi=2.0):
    rng = rng_for(seed)
    return Raster(width, height, rng.uniform(lo, hi, width * height))


@pytest.fixture
def rng():
    return rng_for(1234)
