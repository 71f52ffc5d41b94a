"""Spectral simulation of the stochastic corotational harmonic map heat flow on the unit disc."""
from __future__ import annotations

from .bessel_core import EigenBasis, build_basis, compute_zeros, eval_bessel
from .config import ExperimentConfig, load_config, parse_config
from .errors import (AccuracyError, BracketingError, ContractionError, DomainError, ShmfError,
                     StallError, UsageError, ValidationError)
from .modal_space import ModalField, analyze, norm_beta, project, semigroup, synthesize
from .montecarlo import McResult, run_monte_carlo, wilson_interval
from .noise import NoisePath, NoiseSpectrum, make_spectrum
from .solver import SolverConfig, Trajectory, run

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "BracketingError", "ContractionError", "DomainError", "EigenBasis",
    "ExperimentConfig", "McResult", "ModalField", "NoisePath", "NoiseSpectrum", "ShmfError",
    "SolverConfig", "StallError", "Trajectory", "UsageError", "ValidationError", "analyze",
    "build_basis", "compute_zeros", "eval_bessel", "load_config", "make_spectrum", "norm_beta",
    "parse_config", "project", "run", "run_monte_carlo", "semigroup", "synthesize",
    "wilson_interval",
]
