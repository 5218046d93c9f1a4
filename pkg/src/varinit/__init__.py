"""Variance-informed weight initialization for coordinate networks."""

from .activations import ActivationSpec, parse_activation
from .initialization import (
    DegenerateActivationError,
    InitPlan,
    LayerInit,
    NetworkShape,
    VarianceInformedInitializer,
    build_plan,
    gain,
)
from .nn import Mlp, backward, forward, initialize, load_checkpoint, save_checkpoint
from .solver import SigmaGrid, heatmap, match_weight_variance, ridge_slope, smape, solve_sigma_p
from .stats import ActivationStats, MomentPair, MonteCarlo, compute_stats, mc_stats
from .testbench import bench_median, run_mc_ablation, run_variance_bench
from .trainer import INRRegressor, Task, TrainConfig, fit, psnr, task_heatmap

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec",
    "ActivationStats",
    "DegenerateActivationError",
    "INRRegressor",
    "InitPlan",
    "LayerInit",
    "Mlp",
    "MomentPair",
    "MonteCarlo",
    "NetworkShape",
    "SigmaGrid",
    "Task",
    "TrainConfig",
    "VarianceInformedInitializer",
    "backward",
    "bench_median",
    "build_plan",
    "compute_stats",
    "fit",
    "forward",
    "gain",
    "heatmap",
    "initialize",
    "load_checkpoint",
    "match_weight_variance",
    "mc_stats",
    "parse_activation",
    "psnr",
    "ridge_slope",
    "run_mc_ablation",
    "run_variance_bench",
    "save_checkpoint",
    "smape",
    "solve_sigma_p",
    "task_heatmap",
]
