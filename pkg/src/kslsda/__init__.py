"""Spin-polarised local density functional solver on a real-space grid.

Core modules: ``grid`` (stencils, quadrature), ``spin`` (spin density
matrices, fields, flip map), ``xc`` (local exchange), ``operator``
(mean-field Hamiltonian), ``eigensolve``, ``scf`` and ``verify``; ``cli``
and ``config`` drive batch runs.
"""
from .config import RunConfig, parse_config, render_config
from .eigensolve import EigenSolution, dense_oracle, lowest_eigenpairs
from .estimator import KohnShamLSDA
from .exceptions import ConfigError, ContractError, KSLSDAError, NumericError, SolverError
from .grid import Grid, build_grid, integrate
from .operator import MeanFieldOperator, apply_H, hartree_energy, hartree_potential, nuclear_potential
from .scf import EnergyBreakdown, ScfState, occupy, scf_solve, total_energy
from .spin import MagneticField, OccupiedSet, SpinDensity, flip

__version__ = "0.1.0"
