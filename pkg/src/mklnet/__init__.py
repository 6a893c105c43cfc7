"""Elastic-net and L1 multiple kernel learning on spectral kernels.

The library fits additive models ``f = sum_m f_m`` with one RKHS per input
coordinate and ships the pieces needed to study their learning rates:
synthetic ground truths, hold-out selection, dependency diagnostics between
blocks and regularization schedules.
"""
__version__ = "0.1.0"

from .errors import InputError, MklError, NumericError, RepresentationError, SelectionError
from .kernels import SpectralKernel, GaussianKernel, GramMatrix, eval_kernel, gram, eigensystem
from .functions import (
    SpectralFunction,
    KernelExpansion,
    l2_norm,
    interp_norm,
    rkhs_norm,
    empirical_norm,
    sup_norm_estimate,
    power_operator,
    mixed_norm,
    sample_ball_hq,
)
from .data import TruthSpec, GroundTruth, NoiseSpec, Dataset, make_truth, sample_dataset, read_dataset, exact_l2_error
from .solver import RegParams, FitOptions, MklModel, fit, l1_fit, objective, solve_block, block_zero_test
from .selection import ParamGrid, ClipSpec, build_grid, select, split, clip
from .geometry import (
    GeometryReport,
    geometry_analytic_product,
    geometry_spectral_mc,
    theorem_constants,
    lemma2_diagnostic,
)
from .rates import ScheduleInputs, schedule, eta, xi, run_rate_sweep, d_sweep, phase_transition_scan, fit_loglog_slope
