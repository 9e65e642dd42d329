"""Experiment command line: simulate degradations, run solvers, score results.

Subcommands: `simulate`, `solve`, `metrics`, `trace-check`. Every flag can
also be supplied through a JSON config file (`--config`), with explicit
command-line flags taking precedence. Outputs are byte-reproducible for a
fixed configuration and seed.

Exit codes: 0 success, 2 configuration error, 3 numeric/domain error,
4 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .core import (
    ConfigurationError,
    DegenerateOperatorError,
    DimensionError,
    DomainError,
    MeasurementVector,
    Raster,
    SingularAnchorError,
    SolverConfig,
    UndefinedMetricError,
)
from .formats import (
    FormatError,
    load_fras,
    load_kernel,
    load_raster,
    load_roi_mask,
    load_trace_csv,
    save_fras,
    save_raster,
    save_trace_csv,
)
from .objective import (
    PoissonNLL,
    linear_smoother_regularizer,
    smoothed_tv_regularizer,
)
from .operators import (
    Convolution2D,
    IdentityOperator,
    ParallelProjector,
    ProjectorGeometry,
    gaussian_kernel,
    normalize_operator,
)
from .simulate import (
    NoiseSpec,
    gauss_sigma_from_fraction,
    sample_poisson,
    sample_poisson_gaussian,
    shifted_poisson_preprocess,
)
from .solve import final_denoise, mfb_run, mlem_run, monotonicity_check, osem_run, pnp_mm_run, rate_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_PROBLEMS = ("deblur", "tomo", "identity")
_SOLVERS = ("mlem", "osem", "mfb", "pnp_mm")
_REGULARIZERS = ("none", "linear_smoother", "smoothed_tv")


@dataclass
class ExperimentConfig:
    """Flat mirror of every CLI flag."""

    problem: str = "identity"
    input: str | None = None
    truth: str | None = None
    measurements: str | None = None
    measurement_domain: str = "auto"  # auto | counts | scaled
    kernel: str | None = None
    num_angles: int = 12
    num_detector_bins: int | None = None
    detector_spacing: float = 1.0
    normalize_operator: bool = False
    zeta: float = 1.0
    gauss_sigma: float = 0.0
    gauss_sigma_fraction: float | None = None
    noiseless: bool = False
    seed: int = 0
    solver: str = "mlem"
    regularizer: str = "none"
    epsilon: float = 0.1
    smoother_kernel: str | None = None
    smoother_size: int = 5
    tau: float = 1.0
    lam: float = 0.0
    sigma_denoiser: float = 1.0
    iterations: int = 100
    subsets: int = 1
    background: float | None = None
    lipschitz_bound: float | None = None
    data_tau: float | None = None
    early_stop: bool = False
    final_denoise_tau: float = 0.0
    psnr_peak: float = 1.0
    output_dir: str = "."

    def validate(self):
        if self.problem not in _PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        if self.solver not in _SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.regularizer not in _REGULARIZERS:
            raise ConfigurationError(f"unknown regularizer {self.regularizer!r}")
        if self.solver in ("mlem", "osem") and self.regularizer != "none":
            raise ConfigurationError(f"{self.solver} takes no regularizer")
        if self.solver in ("mfb", "pnp_mm") and self.regularizer == "none":
            raise ConfigurationError(f"{self.solver} requires a regularizer")
        if self.input is None:
            raise ConfigurationError("an input raster is required (--input)")
        if self.problem == "deblur" and self.kernel is None:
            raise ConfigurationError("deblur requires a kernel file (--kernel)")
        for label, path in (("input", self.input), ("truth", self.truth),
                            ("kernel", self.kernel), ("measurements", self.measurements),
                            ("smoother_kernel", self.smoother_kernel)):
            if path is not None and not Path(path).exists():
                raise ConfigurationError(f"{label} file does not exist: {path}")


def _build_operator(cfg: ExperimentConfig, width: int, height: int):
    if cfg.problem == "identity":
        op = IdentityOperator(width, height)
    elif cfg.problem == "deblur":
        op = Convolution2D(load_kernel(cfg.kernel), width, height)
    else:
        if cfg.num_detector_bins is None:
            geom = ProjectorGeometry.for_image(width, height, cfg.num_angles,
                                               cfg.detector_spacing)
        else:
            geom = ProjectorGeometry(cfg.num_angles, cfg.num_detector_bins,
                                     cfg.detector_spacing)
        op = ParallelProjector(geom, width, height)
    factor = None
    if cfg.normalize_operator:
        op, factor = normalize_operator(op)
    return op, factor


def _build_regularizer(cfg: ExperimentConfig, width: int, height: int):
    if cfg.regularizer == "none":
        return None
    if cfg.regularizer == "smoothed_tv":
        return smoothed_tv_regularizer(cfg.epsilon, sigma=cfg.sigma_denoiser)
    if cfg.smoother_kernel is not None:
        kernel = load_kernel(cfg.smoother_kernel)
    else:
        kernel = gaussian_kernel(cfg.smoother_size, cfg.sigma_denoiser)
    return linear_smoother_regularizer(kernel, cfg.sigma_denoiser, width, height)


def _simulate(cfg: ExperimentConfig, op, truth: Raster):
    """Returns (data, gauss_sigma, domain). Poisson-only data lives in the
    counts domain; Poisson-Gaussian data is preprocessed to the scaled
    shifted-Poisson observation."""
    clean = op.apply(truth)
    if cfg.noiseless:
        return clean, 0.0, "scaled"
    sigma = cfg.gauss_sigma
    if cfg.gauss_sigma_fraction is not None:
        sigma = gauss_sigma_from_fraction(clean, cfg.gauss_sigma_fraction)
    spec = NoiseSpec(cfg.zeta, sigma, cfg.seed)
    if sigma > 0:
        z = sample_poisson_gaussian(clean, spec)
        return shifted_poisson_preprocess(z, sigma), sigma, "scaled"
    return sample_poisson(clean, spec), 0.0, "counts"


def _echo(path: Path, cfg: ExperimentConfig, resolved: dict):
    payload = {"flags": asdict(cfg), "resolved": resolved}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_metrics_csv(path: Path, rows: list[tuple[str, float]]):
    lines = ["metric,value"] + [f"{k},{v:.17g}" for k, v in rows]
    path.write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig) -> int:
    """Full pipeline: simulate (unless measurements are given), solve,
    write reconstruction, trace, metrics, and a config echo."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    truth = load_raster(cfg.input)
    truth_for_metrics = load_raster(cfg.truth) if cfg.truth else truth
    op, norm_factor = _build_operator(cfg, truth.width, truth.height)

    if cfg.measurements is not None:
        data = MeasurementVector(load_fras(cfg.measurements).values)
        domain = cfg.measurement_domain
        if domain == "auto":
            domain = "counts" if cfg.gauss_sigma == 0 and cfg.gauss_sigma_fraction is None else "scaled"
        sigma = cfg.gauss_sigma
    else:
        data, sigma, domain = _simulate(cfg, op, truth)

    background = cfg.background
    if background is None:
        background = sigma * sigma if sigma > 0 else 0.0
    nll = PoissonNLL(data, op, background)

    # counts-domain runs reconstruct zeta * x; scale back for reporting
    if domain == "counts":
        report_scale = 1.0 / cfg.zeta
        solver_truth = Raster(truth.width, truth.height, cfg.zeta * truth_for_metrics.values)
        solver_peak = cfg.zeta * cfg.psnr_peak
    else:
        report_scale = 1.0
        solver_truth = truth_for_metrics
        solver_peak = cfg.psnr_peak

    reg = _build_regularizer(cfg, truth.width, truth.height)
    solver_cfg = SolverConfig(
        tau=cfg.tau, lam=cfg.lam, sigma_denoiser=cfg.sigma_denoiser,
        iterations=cfg.iterations, subsets=cfg.subsets, background=background,
        lipschitz_bound=cfg.lipschitz_bound, seed=cfg.seed,
        data_tau=cfg.data_tau, early_stop=cfg.early_stop,
    )

    if cfg.solver == "mlem":
        result = mlem_run(nll, solver_cfg, truth=solver_truth, psnr_peak=solver_peak)
    elif cfg.solver == "osem":
        result = osem_run(nll, solver_cfg, truth=solver_truth, psnr_peak=solver_peak)
    elif cfg.solver == "mfb":
        result = mfb_run(nll, reg, solver_cfg, truth=solver_truth, psnr_peak=solver_peak)
    else:
        result = pnp_mm_run(nll, reg, solver_cfg, truth=solver_truth, psnr_peak=solver_peak)

    recon = result.reconstruction
    if cfg.final_denoise_tau > 0 and reg is not None:
        save_fras(out / "recon_pre_denoise.fras", recon)
        recon = final_denoise(result, reg, cfg.final_denoise_tau)

    reported = Raster(recon.width, recon.height, report_scale * recon.values)
    save_fras(out / "recon.fras", reported)
    save_raster(out / "recon.pgm", reported, peak=cfg.psnr_peak)
    save_trace_csv(out / "trace.csv", result.trace)

    rows = [("psnr", metrics_mod.psnr(truth_for_metrics, reported, cfg.psnr_peak)),
            ("nrmse", metrics_mod.nrmse(truth_for_metrics, reported)),
            ("mae", metrics_mod.mae(truth_for_metrics, reported))]
    if truth.width >= 11 and truth.height >= 11:
        rows.insert(1, ("ssim", metrics_mod.ssim(truth_for_metrics, reported, cfg.psnr_peak)))
    _write_metrics_csv(out / "metrics.csv", rows)

    _echo(out / "config.json", cfg, {
        "gauss_sigma": sigma if cfg.measurements is None else cfg.gauss_sigma,
        "background": background,
        "measurement_domain": domain,
        "normalize_factor": norm_factor,
        "certified": result.certified,
        "lipschitz_bound": result.metadata.get("lipschitz_bound"),
        "iterations_run": len(result.trace) - 1,
    })
    return EXIT_OK


def _cmd_simulate(cfg: ExperimentConfig) -> int:
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = load_raster(cfg.input)
    op, norm_factor = _build_operator(cfg, truth.width, truth.height)
    data, sigma, domain = _simulate(cfg, op, truth)
    save_fras(out / "measurements.fras", Raster(data.length, 1, data.bins))
    _echo(out / "config.json", cfg, {
        "gauss_sigma": sigma,
        "measurement_domain": domain,
        "suggested_background": sigma * sigma,
        "normalize_factor": norm_factor,
    })
    return EXIT_OK


def _cmd_metrics(args) -> int:
    truth = load_raster(args.truth)
    estimate = load_raster(args.estimate)
    rows = [("psnr", metrics_mod.psnr(truth, estimate, args.peak)),
            ("nrmse", metrics_mod.nrmse(truth, estimate)),
            ("mae", metrics_mod.mae(truth, estimate, args.scale))]
    if truth.width >= 11 and truth.height >= 11:
        rows.insert(1, ("ssim", metrics_mod.ssim(truth, estimate, args.peak)))
    if args.roi_a and args.roi_b:
        rows.append(("cnr", metrics_mod.cnr(
            estimate, load_roi_mask(args.roi_a, "a"), load_roi_mask(args.roi_b, "b"))))
    for name, value in rows:
        print(f"{name} = {value:.17g}")
    if args.output:
        _write_metrics_csv(Path(args.output), rows)
    return EXIT_OK


def _cmd_trace_check(args) -> int:
    trace = load_trace_csv(args.trace)
    ok = monotonicity_check(trace, args.tol)
    print(f"monotonicity({args.tol:g}): {'PASS' if ok else 'FAIL'}")
    failed = not ok
    if args.lipschitz_bound is not None:
        cfg = SolverConfig(tau=args.tau, lam=args.lam,
                           lipschitz_bound=args.lipschitz_bound)
        verdict = rate_check(trace, cfg)
        if verdict is None:
            print("rate: NOT APPLICABLE (steps are not certified)")
        else:
            print(f"rate: {'PASS' if verdict else 'FAIL'}")
            failed = failed or not verdict
    return EXIT_NUMERIC if failed else EXIT_OK


_UNSET = object()


def _add_experiment_flags(p: argparse.ArgumentParser):
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "lam":
            flag = "--lambda"
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, action="store_true", default=_UNSET)
        elif f.type in ("int", "int | None"):
            p.add_argument(flag, dest=f.name, type=int, default=_UNSET)
        elif f.type in ("float", "float | None"):
            p.add_argument(flag, dest=f.name, type=float, default=_UNSET)
        else:
            p.add_argument(flag, dest=f.name, type=str, default=_UNSET)
    p.add_argument("--config", type=str, default=None,
                   help="JSON file supplying any flag; command line wins")


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError(f"config file does not exist: {path}")
        try:
            overrides = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"malformed config file {path}: {exc}") from exc
        valid = {f.name for f in fields(ExperimentConfig)}
        for key, value in overrides.items():
            if key not in valid:
                raise ConfigurationError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, _UNSET)
        if value is not _UNSET:
            setattr(cfg, f.name, value)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poissonmm",
        description="Linear inverse problems under Poisson and Poisson-Gaussian noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a degraded acquisition")
    _add_experiment_flags(p_sim)
    p_sim.set_defaults(func=lambda a: _cmd_simulate(_config_from_args(a)))

    p_solve = sub.add_parser("solve", help="run a solver (simulating first unless "
                                           "measurements are supplied)")
    _add_experiment_flags(p_solve)
    p_solve.set_defaults(func=lambda a: run_experiment(_config_from_args(a)))

    p_met = sub.add_parser("metrics", help="score an estimate against a reference")
    p_met.add_argument("--truth", required=True)
    p_met.add_argument("--estimate", required=True)
    p_met.add_argument("--peak", type=float, default=1.0)
    p_met.add_argument("--scale", type=float, default=1.0)
    p_met.add_argument("--roi-a", dest="roi_a", default=None)
    p_met.add_argument("--roi-b", dest="roi_b", default=None)
    p_met.add_argument("--output", default=None)
    p_met.set_defaults(func=_cmd_metrics)

    p_chk = sub.add_parser("trace-check", help="verify descent properties of a trace CSV")
    p_chk.add_argument("--trace", required=True)
    p_chk.add_argument("--tol", type=float, default=1e-10)
    p_chk.add_argument("--tau", type=float, default=1.0)
    p_chk.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p_chk.add_argument("--lipschitz-bound", dest="lipschitz_bound", type=float, default=None)
    p_chk.set_defaults(func=_cmd_trace_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"poissonmm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, DimensionError, DegenerateOperatorError,
            SingularAnchorError, UndefinedMetricError) as exc:
        print(f"poissonmm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"poissonmm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
