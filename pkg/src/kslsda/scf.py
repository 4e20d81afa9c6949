"""Self-consistent minimisation of the LSDA energy over mixed states.

Each outer step builds the mean-field operator from the input spin density,
takes its lowest eigenpairs, fills them by the Aufbau rule (with an equal
split of the remainder over a degenerate frontier level) and mixes the
resulting density linearly into the input.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .eigensolve import EigenSolution, lowest_eigenpairs
from .exceptions import ConfigError, ContractError, SolverError
from .grid import Grid, integrate
from .operator import HartreeSolution, MeanFieldOperator, hartree_energy, hartree_potential, nuclear_potential
from .spin import (
    OccupiedSet,
    SpinDensity,
    UField,
    assemble_U,
    density_from_orbitals,
    external_energy,
    flip,
    kinetic_energy,
)
from .xc import XcFunctional, exc_of_density, make_xc, validate_cond_g, vxc_matrix

__all__ = [
    "EnergyBreakdown",
    "ScfState",
    "ScfConvergenceError",
    "Problem",
    "build_problem",
    "occupy",
    "total_energy",
    "assemble_operator",
    "initial_density",
    "scf_solve",
    "run_start",
]

logger = logging.getLogger(__name__)


class ScfConvergenceError(SolverError):
    """The outer iteration hit ``scf.max_iter``; ``history`` holds every iterate."""


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy parts in hartree; ``total`` is their sum."""

    kinetic: float = 0.0
    hartree: float = 0.0
    v_ext: float = 0.0
    zeeman: float = 0.0
    xc: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.hartree + self.v_ext + self.zeeman + self.xc

    def as_rows(self) -> list:
        return [
            ("kinetic", self.kinetic),
            ("hartree", self.hartree),
            ("v_ext", self.v_ext),
            ("zeeman", self.zeeman),
            ("xc", self.xc),
            ("total", self.total),
        ]


@dataclass
class ScfState:
    """A (converged) mixed state and its diagnostics.

    ``occupied`` holds every computed orbital, empty ones included, so the
    Aufbau structure can be checked against ``eigenvalues``.
    """

    occupied: OccupiedSet
    density: SpinDensity
    fermi_level: float
    energy: EnergyBreakdown
    eigenvalues: np.ndarray
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = True
    start: str = "default"
    flipped: bool = False
    mode: str = "full"
    candidates: dict = field(default_factory=dict)
    config: Optional[RunConfig] = None

    @property
    def occupations(self) -> np.ndarray:
        return self.occupied.occupations

    @property
    def total(self) -> float:
        return self.energy.total


@dataclass
class Problem:
    """Everything a mode needs that does not depend on the density."""

    config: RunConfig
    grid: Grid
    U: Optional[UField]
    xc: Optional[XcFunctional]
    hartree: bool
    structure: str

    @property
    def mode(self) -> str:
        return self.config.mode


def build_problem(cfg: RunConfig) -> Problem:
    """Assemble the density-independent blocks for ``cfg.mode``.

    ``infinity`` drops ``U``; ``noninteracting`` drops Hartree and xc;
    ``unpolarized`` drops ``B``; ``collinear`` keeps only ``B_z``.
    """
    grid = cfg.grid()
    mode = cfg.mode
    ext = cfg.external()
    U = None
    if mode != "infinity":
        V = nuclear_potential(ext, grid)
        B = ext.field.sample(grid)
        if mode == "unpolarized":
            B = np.zeros_like(B)
        elif mode == "collinear":
            if np.any(B[0] != 0.0) or np.any(B[1] != 0.0):
                raise ConfigError("collinear mode couples only B_z; the field has x or y components")
        U = assemble_U(ext, V, grid, B)
    xc = None
    if mode != "noninteracting" and cfg.xc != "none":
        xc = make_xc(cfg.xc, cfg.c_x)
        report = validate_cond_g(xc)
        if not report.ok:
            raise ConfigError("xc functional fails the growth conditions: " + "; ".join(report.reasons))
    structure = {"collinear": "collinear", "unpolarized": "unpolarized"}.get(mode, "coupled")
    return Problem(cfg, grid, U, xc, mode != "noninteracting", structure)


def occupy(eigenvalues, lam: float, deg_tol: float = 1e-6):
    """Aufbau occupations for ``lam`` electrons.

    States are filled in ascending order; the frontier level is the one
    holding electron ``ceil(lam)``, and all eigenvalues within ``deg_tol`` of
    it share the remaining charge equally.

    Returns
    -------
    occupations : ndarray
    fermi_level : float
        The frontier eigenvalue.
    """
    eps = np.asarray(eigenvalues, dtype=float)
    k = eps.size
    if not lam > 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    if np.any(np.diff(eps) < 0):
        raise ContractError("eigenvalues must be ascending")
    if lam > k:
        raise ConfigError(f"lambda = {lam} exceeds the {k} computed states; increase eig.k_extra")
    f = math.ceil(lam) - 1
    ef = float(eps[f])
    group = np.flatnonzero(np.abs(eps - ef) <= deg_tol)
    lo, hi = int(group[0]), int(group[-1]) + 1
    if hi == k and lam < k:
        raise ConfigError("the frontier level reaches the last computed state; increase eig.k_extra")
    occ = np.zeros(k)
    occ[:lo] = 1.0
    occ[lo:hi] = (lam - lo) / (hi - lo)
    return occ, ef


def total_energy(occupied: OccupiedSet, problem: Problem, R: Optional[SpinDensity] = None,
                 hartree: Optional[HartreeSolution] = None) -> EnergyBreakdown:
    """Energy of the mixed state ``occupied`` under ``problem``'s mode."""
    cfg = problem.config
    grid = problem.grid
    if R is None:
        R = density_from_orbitals(occupied)
    if occupied.lam == 0.0:
        return EnergyBreakdown()
    kin = kinetic_energy(occupied)
    j = 0.0
    if problem.hartree:
        if hartree is None:
            hartree = hartree_potential(R.rho, grid, cfg.poisson_tol, cfg.poisson_max_iter)
        j = hartree_energy(R.rho, hartree, grid)
    v = z = 0.0
    if problem.U is not None:
        _, v, z = external_energy(problem.U, R, grid)
    x = exc_of_density(R, problem.xc, grid) if problem.xc is not None else 0.0
    return EnergyBreakdown(kin, j, v, z, x)


def assemble_operator(problem: Problem, R: SpinDensity, guess: Optional[HartreeSolution] = None):
    """Mean-field operator built from the input density ``R``.

    Returns ``(operator, hartree_solution_or_None)``.
    """
    cfg = problem.config
    sol = None
    vh = None
    if problem.hartree:
        sol = hartree_potential(R.rho, problem.grid, cfg.poisson_tol, cfg.poisson_max_iter, guess)
        vh = sol.potential
    vxc = vxc_matrix(R, problem.xc) if problem.xc is not None else None
    op = MeanFieldOperator(problem.grid, U=problem.U, hartree=vh, vxc=vxc, structure=problem.structure)
    return op, sol


def initial_density(problem: Problem, aligned: bool = False) -> SpinDensity:
    """Sum of unit Gaussians ``exp(-r^2)`` per nucleus (weighted by charge), scaled to ``lambda``.

    Unpolarised split by default; with ``aligned`` the spin is fully
    polarised along the local field direction (``z`` where ``B = 0``).
    """
    cfg = problem.config
    grid = problem.grid
    rho = np.zeros(grid.shape)
    centres = cfg.nuclei or ((1, tuple(grid.center)),)
    for z, pos in centres:
        rho += z * np.exp(-grid.distance(pos) ** 2)
    rho *= cfg.lam / integrate(rho, grid)
    zero = np.zeros(grid.shape)
    if not aligned or problem.structure == "unpolarized":
        return SpinDensity(0.5 * rho, 0.5 * rho, zero, zero.copy())
    if problem.U is not None:
        B = problem.U.B
    else:
        B = np.zeros((3,) + grid.shape)
    norm = np.sqrt((B**2).sum(axis=0))
    bhat = np.where(norm > 0, B / np.where(norm > 0, norm, 1.0), np.array([0.0, 0.0, 1.0])[:, None, None, None])
    # R = rho/2 (I + bhat . sigma): m = rho bhat
    R = SpinDensity(0.5 * rho * (1 + bhat[2]), 0.5 * rho * (1 - bhat[2]), 0.5 * rho * bhat[0], -0.5 * rho * bhat[1])
    if problem.structure == "collinear":
        R = R.collinear()
    return R


def _invariants(S: OccupiedSet, lam: float) -> dict:
    occ = S.occupations
    return {
        "occ_min": float(occ.min()),
        "occ_max": float(occ.max()),
        "trace_error": float(abs(occ.sum() - lam)),
        "orth_error": S.orthonormality_error(),
    }


def _oscillating(history, window=10) -> bool:
    if len(history) < window:
        return False
    de = np.diff([h["energy"] for h in history[-window:]])
    return bool(np.all(de[1:] * de[:-1] < 0))


def run_start(problem: Problem, R0: SpinDensity, label: str = "custom") -> ScfState:
    """One SCF run from the input density ``R0`` (no flip comparison)."""
    cfg = problem.config
    grid = problem.grid
    k = math.ceil(cfg.lam) + cfg.eig_k_extra
    R_in = R0
    guess = None
    hsol = None
    history = []
    e_prev = None
    streak = 0
    d_rho = float("inf")
    fixed = not problem.hartree and problem.xc is None
    for it in range(1, cfg.scf_max_iter + 1):
        op, hsol = assemble_operator(problem, R_in, hsol)
        # early steps need no tighter eigenpairs than the density change allows
        eig_tol = cfg.eig_tol if fixed else max(cfg.eig_tol, min(1e-3, 1e-2 * d_rho))
        eig: EigenSolution = lowest_eigenpairs(
            op, k, tol=eig_tol, seed=cfg.eig_seed, max_iter=cfg.eig_max_iter,
            guess=guess, preconditioner=cfg.eig_preconditioner,
        )
        guess = eig.eigenvectors
        occ, ef = occupy(eig.eigenvalues, cfg.lam, cfg.deg_tol)
        S = OccupiedSet(eig.eigenvectors, occ, grid)
        R_out = density_from_orbitals(S)
        energy = total_energy(S, problem, R_out)
        d_rho = float(integrate(np.abs(R_out.channels() - R_in.channels()).sum(axis=0), grid))
        d_e = float("inf") if e_prev is None else abs(energy.total - e_prev)
        e_prev = energy.total
        rec = {"iteration": it, "energy": energy.total, "d_rho": d_rho, "d_e": d_e, "fermi_level": ef,
               "eig_iterations": eig.iterations, "eig_tol": eig_tol, "start": label}
        rec.update(_invariants(S, cfg.lam))
        history.append(rec)
        logger.info("scf %s it %d E %.12f d_rho %.3e d_e %.3e", label, it, energy.total, d_rho, d_e)
        tight = eig_tol == cfg.eig_tol
        streak = streak + 1 if (tight and d_rho < cfg.scf_tol_rho and d_e < cfg.scf_tol_e) else 0
        if fixed or streak >= 3:
            return ScfState(S, R_out, ef, energy, eig.eigenvalues, it, history, True, label, False, cfg.mode,
                            config=cfg)
        b = cfg.mix_beta
        R_in = SpinDensity.from_channels((1.0 - b) * R_in.channels() + b * R_out.channels())
    hint = " (energy oscillates; try a smaller mix.beta)" if _oscillating(history) else ""
    raise ScfConvergenceError(
        f"SCF did not converge in {cfg.scf_max_iter} iterations from the {label} start{hint}",
        residuals=[history[-1]["d_rho"], history[-1]["d_e"]],
        history=history,
    )


def _with_flip(state: ScfState, problem: Problem) -> ScfState:
    """Return the lower-energy of ``state`` and its flip."""
    F = flip(state.occupied)
    RF = density_from_orbitals(F)
    ef = total_energy(F, problem, RF)
    state.candidates[f"{state.start}:flip"] = ef.total
    state.candidates[state.start] = state.energy.total
    if ef.total < state.energy.total:
        return ScfState(F, RF, state.fermi_level, ef, state.eigenvalues, state.iterations, state.history,
                        state.converged, state.start, True, state.mode, state.candidates, state.config)
    return state


def scf_solve(cfg: RunConfig, problem: Optional[Problem] = None) -> ScfState:
    """Minimise over the configured starts; return the lowest candidate.

    ``starts = default`` runs the unpolarised Gaussian start, plus a
    field-aligned one when ``B`` is non-zero; ``aligned`` runs only the
    aligned start; ``both`` always runs both.  Every candidate is compared
    with its flip.
    """
    if problem is None:
        problem = build_problem(cfg)
    has_b = problem.U is not None and np.any(problem.U.B != 0.0)
    labels = {"default": ["default"] + (["aligned"] if has_b else []), "aligned": ["aligned"],
              "both": ["default", "aligned"]}[cfg.starts]
    if problem.structure == "unpolarized":
        labels = labels[:1]
    best = None
    candidates = {}
    history = []
    for label in labels:
        st = _with_flip(run_start(problem, initial_density(problem, label == "aligned"), label), problem)
        candidates.update(st.candidates)
        history.extend(st.history)
        if best is None or st.energy.total < best.energy.total:
            best = st
    best.candidates = candidates
    best.history = history
    return best
