"""Reconstruction of finite measures from noisy generalized moments by
maximum entropy on the mean, through its finite-dimensional convex dual."""

from . import dual, experiments, measures, operators, priors, reconstruction, rng
from .dual import DualProblem, DualSolution, feasibility, solve
from .kernels import BACKEND_NAME
from .measures import DiscreteMeasure, entropy, moment, tv_distance
from .priors import ReferenceMeasure, exponential, gaussian, poisson, two_point, uniform
from .reconstruction import Observation, amem_estimate, residual

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "DiscreteMeasure",
    "DualProblem",
    "DualSolution",
    "Observation",
    "ReferenceMeasure",
    "amem_estimate",
    "dual",
    "entropy",
    "experiments",
    "exponential",
    "feasibility",
    "gaussian",
    "measures",
    "moment",
    "operators",
    "poisson",
    "priors",
    "reconstruction",
    "residual",
    "rng",
    "solve",
    "tv_distance",
    "two_point",
    "uniform",
]
