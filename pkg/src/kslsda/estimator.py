"""Estimator-style facade over the SCF solver.

``fit`` takes no data: the "sample" is the physical system fixed by the
hyper-parameters.  The facade exists so that parameter sweeps can use
``get_params`` / ``set_params`` / ``clone``.
"""
from __future__ import annotations

import dataclasses

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import RunConfig
from .scf import scf_solve
from .validation import config_from_params
from .xc import SLATER_CX

__all__ = ["KohnShamLSDA"]


class KohnShamLSDA(BaseEstimator):
    """Ground-state search for the spin-polarised LSDA energy.

    Parameters mirror :class:`kslsda.config.RunConfig`; see there for
    meanings and defaults.

    Attributes
    ----------
    state_ : ScfState
    energy_ : EnergyBreakdown
    fermi_level_ : float
    eigenvalues_, occupations_ : ndarray
    density_ : SpinDensity
    converged_ : bool
    config_ : RunConfig
    """

    def __init__(self, n=24, L=12.0, lam=1.0, nuclei=((1, (0.0, 0.0, 0.0)),), field=None, origin=None,
                 mode="full", xc="xalpha", c_x=SLATER_CX, mu=0.5, softening_a=None, poisson_tol=1e-10,
                 poisson_max_iter=5000, eig_k_extra=8, eig_tol=1e-8, eig_max_iter=500, eig_seed=0,
                 eig_preconditioner="kinetic", mix_beta=0.3, scf_tol_rho=1e-6, scf_tol_e=1e-7,
                 scf_max_iter=300, deg_tol=1e-6, starts="default", sweep_lambdas=None, sweep_tol_bind=1e-4):
        self.n = n
        self.L = L
        self.lam = lam
        self.nuclei = nuclei
        self.field = field
        self.origin = origin
        self.mode = mode
        self.xc = xc
        self.c_x = c_x
        self.mu = mu
        self.softening_a = softening_a
        self.poisson_tol = poisson_tol
        self.poisson_max_iter = poisson_max_iter
        self.eig_k_extra = eig_k_extra
        self.eig_tol = eig_tol
        self.eig_max_iter = eig_max_iter
        self.eig_seed = eig_seed
        self.eig_preconditioner = eig_preconditioner
        self.mix_beta = mix_beta
        self.scf_tol_rho = scf_tol_rho
        self.scf_tol_e = scf_tol_e
        self.scf_max_iter = scf_max_iter
        self.deg_tol = deg_tol
        self.starts = starts
        self.sweep_lambdas = sweep_lambdas
        self.sweep_tol_bind = sweep_tol_bind

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "KohnShamLSDA":
        params = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(RunConfig)}
        return cls(**params)

    def to_config(self) -> RunConfig:
        return config_from_params(self.get_params())

    def fit(self, X=None, y=None):
        """Run the SCF minimisation; ``X`` and ``y`` are ignored."""
        cfg = self.to_config()
        st = scf_solve(cfg)
        self.config_ = cfg
        self.state_ = st
        self.energy_ = st.energy
        self.fermi_level_ = st.fermi_level
        self.eigenvalues_ = st.eigenvalues
        self.occupations_ = st.occupations
        self.density_ = st.density
        self.converged_ = st.converged
        return self

    def score(self, X=None, y=None) -> float:
        """Negative total energy, so that a lower energy scores higher."""
        if not hasattr(self, "state_"):
            raise NotFittedError("call fit first")
        return -self.energy_.total
