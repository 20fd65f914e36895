"""Numerical experiments on uniform resolvent bounds for discrete Schroedinger operators.

Modules
-------
lattice_core
    Symbol, torus grids, lattice boxes, potentials, Lorentz norms.
resolvent
    Free lattice Green function, weighted resolvent norms, surface measures.
birman_schwinger
    Birman-Schwinger matrices, norm sweeps and bound states.
spectral_box
    Box Hamiltonians and eigenvalue counting certificates.
dynamics
    Free propagation, dispersive decay fits, Strichartz norms.
counterexamples
    Constructions showing where uniform bounds fail.
cli
    Batch experiment runner.
"""

__version__ = "0.1.0"

from .lattice_core import (  # noqa: E402
    AnisotropicWeight,
    ComplexEnergy,
    FlatBandWeight,
    LatticeBox,
    PointMass,
    PowerDecay,
    Table,
    TorusGrid,
    symbol_eval,
    threshold_energies,
)

__all__ = [
    "AnisotropicWeight", "ComplexEnergy", "FlatBandWeight", "LatticeBox", "PointMass",
    "PowerDecay", "Table", "TorusGrid", "symbol_eval", "threshold_energies",
]
