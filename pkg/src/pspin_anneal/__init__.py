"""Dissipative quantum annealing of the ferromagnetic p-spin model.

The reduced density matrix of N qubits lives in the (N+1)-dimensional
maximum-spin sector and evolves under a rotating-wave Lindblad master equation
with an Ohmic bosonic bath coupled to the collective sigma^z.
"""

__version__ = "0.1.0"

from .bath import BathParams, lamb_shift_rate, rate, spectral_density
from .dicke import LINEAR, ModelParams, Schedule, annealing_hamiltonian
from .lindblad import EvolutionConfig, EvolutionError, RunResult, evolve
from .spectral import eigendecompose, scan_minimal_gap, spectral_gap

__all__ = [
    "LINEAR",
    "BathParams",
    "EvolutionConfig",
    "EvolutionError",
    "ModelParams",
    "RunResult",
    "Schedule",
    "annealing_hamiltonian",
    "eigendecompose",
    "evolve",
    "lamb_shift_rate",
    "rate",
    "scan_minimal_gap",
    "spectral_density",
    "spectral_gap",
]
