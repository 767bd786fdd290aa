"""Randomized sparse Kaczmarz with averaging."""

from .core import DenseMatrix, bregman_distance, soft_shrinkage, spectral_norm
from .estimator import SparseKaczmarzRegressor
from .exceptions import RSKAError
from .harness import ExperimentSpec, MethodSpec, run_experiment, sweep
from .problems import Problem, add_sphere_noise, generate_gaussian, load_problem, save_problem
from .sampling import SamplingScheme, build_variant
from .solvers import RunTrace, SolverConfig, run
from .theory import batch_guidance, certify, noisy_rate, optimal_alpha

__version__ = "0.1.0"

__all__ = [
    "DenseMatrix",
    "ExperimentSpec",
    "MethodSpec",
    "Problem",
    "RSKAError",
    "RunTrace",
    "SamplingScheme",
    "SolverConfig",
    "SparseKaczmarzRegressor",
    "add_sphere_noise",
    "batch_guidance",
    "bregman_distance",
    "build_variant",
    "certify",
    "generate_gaussian",
    "load_problem",
    "noisy_rate",
    "optimal_alpha",
    "run",
    "run_experiment",
    "save_problem",
    "soft_shrinkage",
    "spectral_norm",
    "sweep",
]
