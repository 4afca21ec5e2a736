"""Fully inexact WLM-ADMM with computational-error injection and convergence certificates."""

from .certify import GAMMA_LARGE, GAMMA_SMALL, ReferenceSolution
from .engine import AdmmConfig, ProblemSpec, precompute, reference_solution, run, step
from .experiments import ExperimentConfig, gen_ksupp, gen_lasso, run_experiment, write_report
from .perturb import ErrorModelSpec

__all__ = [
    "AdmmConfig", "ErrorModelSpec", "ExperimentConfig", "GAMMA_LARGE", "GAMMA_SMALL",
    "ProblemSpec", "ReferenceSolution", "gen_ksupp", "gen_lasso", "precompute",
    "reference_solution", "run", "run_experiment", "step", "write_report",
]
