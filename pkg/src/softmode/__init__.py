"""Soft clustering by hitting probabilities of a density-guided random walk."""

from .data import GeneratorSpec, PointCloud, generate, load_csv, normalize_coordinates, save_csv
from .density import DensityEstimate, estimate_density, evaluate_at
from .evaluate import EvalReport, accuracy, hard_accuracy, mean_lower_membership
from .graph import NeighborhoodGraph, build_graph, components
from .membership import ConvergenceError, MembershipMatrix, membership_at, monte_carlo_membership, solve_membership
from .modeseek import ClusterCores, HardClustering, extract_cores, hard_cluster, single_point_cores
from .oracle import AnalyticDensity, GeometricCore, SimulationError, ball_moment_check, euler_maruyama, sde_membership
from .pipeline import ConfigError, PipelineConfig, SdeSpec, beta_sweep, run_compare, run_soft
from .walk import TransitionKernel, build_kernel, diagnostics, simulate_walk, step_time

__version__ = "0.1.0"

__all__ = [
    "AnalyticDensity", "ClusterCores", "ConfigError", "ConvergenceError", "DensityEstimate", "EvalReport",
    "GeneratorSpec", "GeometricCore", "HardClustering", "MembershipMatrix", "NeighborhoodGraph",
    "PipelineConfig", "PointCloud", "SdeSpec", "SimulationError", "TransitionKernel", "accuracy",
    "ball_moment_check", "beta_sweep", "build_graph", "build_kernel", "components", "diagnostics",
    "estimate_density", "euler_maruyama", "evaluate_at", "extract_cores", "generate", "hard_accuracy",
    "hard_cluster", "load_csv", "mean_lower_membership", "membership_at", "monte_carlo_membership",
    "normalize_coordinates", "run_compare", "run_soft", "save_csv", "sde_membership", "simulate_walk",
    "single_point_cores", "solve_membership", "step_time",
]
