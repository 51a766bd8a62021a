"""Parareal in time with manifold projection for periodic 1-D wave, parabolic and Burgers problems."""
from .config import ExperimentConfig, parse_config, preset
from .manifold import DampingFilter, EnergyTargets, hamiltonian, project_norm_groups, project_wave_groups
from .parareal import PararealRun, Schedule, coarse_init, fine_sequential, iterate, run
from .propagators import (
    BurgersProblem,
    ConfigurationError,
    DivergenceError,
    ParabolicProblem,
    PropagatorSpec,
    WaveProblem,
    WaveState,
    advance,
)
from .spectral import GroupPartition, SpectralField

__all__ = [
    "BurgersProblem", "ConfigurationError", "DampingFilter", "DivergenceError", "EnergyTargets",
    "ExperimentConfig", "GroupPartition", "ParabolicProblem", "PararealRun", "PropagatorSpec",
    "Schedule", "SpectralField", "WaveProblem", "WaveState", "advance", "coarse_init",
    "fine_sequential", "hamiltonian", "iterate", "parse_config", "preset", "project_norm_groups",
    "project_wave_groups", "run",
]
