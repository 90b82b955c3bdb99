"""Pseudo-spectral simulator and invariant auditor for a quasi-incompressible
Navier-Stokes/Cahn-Hilliard model on the periodic torus."""
from .potentials import ConfinementSpec, Params, PotentialPack
from .solver import Model, SchemeConfig, Stepper, step
from .spectral import Grid, MollifierSpec
from .state import State, build_initial_data

__all__ = [
    "ConfinementSpec", "Grid", "Model", "MollifierSpec", "Params", "PotentialPack",
    "SchemeConfig", "State", "Stepper", "build_initial_data", "step",
]
__version__ = "0.1.0"
