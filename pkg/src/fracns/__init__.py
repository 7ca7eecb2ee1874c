"""Pseudo-spectral laboratory for the random fractional 3D Navier-Stokes equations.

Modules
-------
spectral      divergence-free Fourier fields, A^s, Leray projection, B(u, v)
noise         two-sided Wiener paths and the Ornstein-Uhlenbeck process
integrator    exponential time stepping, pullback solves, cocycle checks
lab           experiments: admissibility, absorption, comparison, Lipschitz, dimension
config, experiments, cli, checkpoint
              configuration, orchestration and persistence
"""

from .errors import (
    BlowUpError,
    CheckpointCorruptError,
    CheckpointError,
    CheckpointInvariantError,
    CheckpointVersionError,
    ConfigError,
    FracNSError,
    RangeError,
)
from .integrator import (
    SimParams,
    TrajectoryRecord,
    cocycle_residual,
    integrate,
    pullback_solve,
    solve_on_path,
    step_deterministic_pde,
    step_random_pde,
)
from .noise import (
    OUTrajectory,
    WienerPath,
    ergodic_moment_average,
    ou_trajectory,
    sample_two_sided_wiener,
    shift_origin,
)
from .spectral import (
    Lattice,
    SpectralField,
    apply_fractional_power,
    inner,
    leray_project,
    nonlinear_term,
    sobolev_norm,
    sup_gradient_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "CheckpointCorruptError",
    "CheckpointError",
    "CheckpointInvariantError",
    "CheckpointVersionError",
    "ConfigError",
    "FracNSError",
    "RangeError",
    "SimParams",
    "TrajectoryRecord",
    "cocycle_residual",
    "integrate",
    "pullback_solve",
    "solve_on_path",
    "step_deterministic_pde",
    "step_random_pde",
    "OUTrajectory",
    "WienerPath",
    "ergodic_moment_average",
    "ou_trajectory",
    "sample_two_sided_wiener",
    "shift_origin",
    "Lattice",
    "SpectralField",
    "apply_fractional_power",
    "inner",
    "leray_project",
    "nonlinear_term",
    "sobolev_norm",
    "sup_gradient_norm",
]
