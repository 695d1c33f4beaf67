"""Distributed robust l1-penalized quantile regression."""

__version__ = "0.1.0"

from . import errors
from .baselines import (avg_dc, dependent_rel, pooled_lasso, pooled_rel,
                        shard_penalty)
from .data import Dataset
from .datagen import SimDesign, beta_star, generate, noise_mean
from .engine import (ClusterConfig, IterationRecord, IterationTrace,
                     default_init_penalty, run_distributed_rel,
                     start_workers)
from .evaluation import SupportMetrics, l2_error, support_metrics
from .harness import (ExperimentConfig, load_config, run_experiment,
                      select_c0, stable_seed)
from .kernels import aggregate_density, biweight, local_density_at_zero
from .prox import (QuadraticProblem, SolverSettings, kkt_residual,
                   solve_l1_quadratic)
from .qr import QrProblem, QrSettings, check_loss, solve_l1_qr
from .schedules import (ProblemScale, bandwidth_h, iteration_budget,
                        lambda_reg, rate_a)
from .summaries import (ShardSummary, assemble_linear_term,
                        pseudo_responses, shard_summary)

__all__ = [
    "__version__",
    "errors",
    "Dataset",
    "SimDesign", "beta_star", "generate", "noise_mean",
    "QuadraticProblem", "SolverSettings", "kkt_residual",
    "solve_l1_quadratic",
    "QrProblem", "QrSettings", "check_loss", "solve_l1_qr",
    "biweight", "local_density_at_zero", "aggregate_density",
    "ProblemScale", "rate_a", "bandwidth_h", "lambda_reg",
    "iteration_budget",
    "ShardSummary", "pseudo_responses", "shard_summary",
    "assemble_linear_term",
    "ClusterConfig", "IterationRecord", "IterationTrace",
    "default_init_penalty", "run_distributed_rel", "start_workers",
    "pooled_rel", "avg_dc", "pooled_lasso", "dependent_rel",
    "shard_penalty",
    "SupportMetrics", "l2_error", "support_metrics",
    "ExperimentConfig", "load_config", "run_experiment", "select_c0",
    "stable_seed",
]
