"""Bayesian identification of sparse plus low-rank (S+L) predictor models."""

from .estimator import PredictorEstimate, posterior_mean_g, posterior_mean_sl, tikhonov_objective
from .hyperloop import extract_al, leading_singular_vectors, run_algorithm1
from .kernel import (
    KernelTilde,
    LowRankKernel,
    SparseKernel,
    build_lowrank_kernel,
    build_sparse_kernel,
    sample_prior,
    tc_kernel,
)
from .likelihood import HyperState, estimate_ktilde_hyper, marglik_gradient, neg_log_marglik
from .model import GroundTruthModel, TimeSeries, generate_sl_model, simulate, true_predictor
from .noise import estimate_sigma
from .optimize import sgp_minimize
from .regression import ThetaLayout, build_regressor, stack_outputs, unstack_theta

__version__ = "0.1.0"
