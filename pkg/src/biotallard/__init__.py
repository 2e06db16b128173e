"""Biot-Allard poroelasticity with the memory term replaced by auxiliary ODEs.

Submodules
----------
permeability
    Rational dynamic-permeability series, kernel evaluation and fitting.
material
    Pointwise material law ``M(z) = M0 + M1/z`` and well-posedness checks.
discretization
    Staggered finite-difference grids and adjoint operator pairs.
ade_solver
    Theta-scheme integrator for the auxiliary-variable system.
conv_oracle
    Reference solver for the original convolution form.
harness
    Configuration, manufactured solutions, studies and the command line.
"""

from .ade_solver import (
    Forcing,
    SolverConfig,
    StateVector,
    assemble_system,
    norm_probe,
    point_probe,
    run,
    step,
)
from .conv_oracle import run_convolution
from .discretization import build_grid, build_ops
from .errors import BiotAllardError
from .material import (
    MaterialParams,
    assemble_material_law,
    c_min,
    check_wellposedness,
    m0_positive_definite,
    spectral_c_min,
)
from .permeability import (
    FitOptions,
    FrequencySample,
    PermeabilitySeries,
    eval_hat,
    fit_series,
    kernel,
    sample_series,
)

__version__ = "0.1.0"

__all__ = [
    "BiotAllardError",
    "PermeabilitySeries",
    "FrequencySample",
    "FitOptions",
    "eval_hat",
    "kernel",
    "fit_series",
    "sample_series",
    "MaterialParams",
    "assemble_material_law",
    "c_min",
    "spectral_c_min",
    "check_wellposedness",
    "m0_positive_definite",
    "build_grid",
    "build_ops",
    "StateVector",
    "Forcing",
    "SolverConfig",
    "assemble_system",
    "step",
    "run",
    "point_probe",
    "norm_probe",
    "run_convolution",
]
