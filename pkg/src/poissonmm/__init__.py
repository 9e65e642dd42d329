"""Solvers for linear inverse problems under Poisson and Poisson-Gaussian noise."""

from .core import (
    ConfigurationError,
    ConvergenceTrace,
    DegenerateOperatorError,
    DimensionError,
    DomainError,
    FormatError,
    LinearOperator,
    MeasurementVector,
    Raster,
    SingularAnchorError,
    SolverConfig,
    TraceRecord,
    UndefinedMetricError,
    adjoint_consistency,
    dot,
)
from .majorize import SurrogateContext, build_context, surrogate_argmin, surrogate_eval, surrogate_prox
from .metrics import RoiMask, cnr, mae, nrmse, psnr, ssim
from .objective import (
    GradStepRegularizer,
    PoissonNLL,
    composite_eval,
    gs_denoise,
    linear_smoother_regularizer,
    nll_eval,
    smoothed_tv_regularizer,
)
from .operators import (
    BinSubsetOperator,
    Convolution2D,
    IdentityOperator,
    Kernel,
    ParallelProjector,
    ProjectorGeometry,
    ScaledOperator,
    delta_kernel,
    gaussian_kernel,
    normalize_operator,
    sensitivity,
    split_subsets,
    uniform_kernel,
)
from .simulate import (
    NoiseSpec,
    gauss_sigma_from_fraction,
    sample_poisson,
    sample_poisson_gaussian,
    shifted_poisson_preprocess,
)
from .solve import (
    SolveResult,
    final_denoise,
    mfb_run,
    mlem_run,
    monotonicity_check,
    osem_run,
    pnp_mm_run,
    rate_check,
)

__version__ = "0.1.0"
