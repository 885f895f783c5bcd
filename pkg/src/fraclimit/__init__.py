"""Fractional diffusion limit of a half-space linear kinetic equation.

Monte Carlo simulation of the rescaled kinetic dynamics with specular /
diffuse / Maxwell wall rules, the family of nonlocal limit operators they
converge to, a Galerkin solver for the limit equation, and quantitative
comparison tooling.  See README.md for the module tour and the CLI.
"""

from .model import (
    Equilibrium,
    ModelParams,
    build_kernel_table,
    c_ds,
    compute_c0,
    constants,
    kernel_F0,
    kernel_F1,
    make_default_equilibrium,
    make_equilibrium,
    sample_diffuse_velocity,
    sample_velocity,
    tail_gap,
)
from .rng import PhiloxEngine, RandomStream
from .kinetic import (
    DensityField,
    GaussianProfile,
    HistogramProfile,
    PointMassProfile,
    UniformProfile,
    init_ensemble,
    simulate,
)
from .limitsolver import (
    AssembledForms,
    Mesh1D,
    assemble,
    compare,
    evolve,
    mesh_graded,
    reference_specular,
    solve_stationary,
)

__version__ = "0.1.0"

__all__ = [
    "AssembledForms",
    "DensityField",
    "Equilibrium",
    "GaussianProfile",
    "HistogramProfile",
    "Mesh1D",
    "ModelParams",
    "PhiloxEngine",
    "PointMassProfile",
    "RandomStream",
    "UniformProfile",
    "assemble",
    "build_kernel_table",
    "c_ds",
    "compare",
    "compute_c0",
    "constants",
    "evolve",
    "init_ensemble",
    "kernel_F0",
    "kernel_F1",
    "make_default_equilibrium",
    "make_equilibrium",
    "mesh_graded",
    "reference_specular",
    "sample_diffuse_velocity",
    "sample_velocity",
    "simulate",
    "solve_stationary",
    "tail_gap",
]
