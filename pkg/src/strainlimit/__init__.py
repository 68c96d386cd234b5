"""Pseudo-spectral Galerkin solver for strain-limiting Kelvin-Voigt viscoelasticity.

Modules
  tensors       symmetric tensor storage and contractions
  constitutive  the maps F, F_n, their inverses, Jacobians and inequality oracles
  spectral      trigonometric Galerkin spaces on the periodic box
  solver        time stepping with an explicit stability guard
  diagnostics   energies, dissipation, a priori norms, integrability exponents
  checkpoint    bit-exact state files
  config, experiments, cli   configuration, drivers and the command line
"""

from .constitutive import ConstitutiveParams
from .solver import ForceSpec, SolverConfig, SolverState, prepare_initial_data, run
from .spectral import SpectralConfig, SpectralField

__version__ = "0.1.0"

__all__ = [
    "ConstitutiveParams", "ForceSpec", "SolverConfig", "SolverState", "SpectralConfig",
    "SpectralField", "prepare_initial_data", "run", "__version__",
]
