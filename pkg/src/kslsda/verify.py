"""Numerical checks of the structural statements about the discrete model.

Every check returns a :class:`CheckResult` (or a report holding several)
that says whether it is an ``exact`` identity, expected to hold to machine
precision, or a ``soft`` inequality whose margin depends on solver
tolerances.  All checks certify the discretised functional on a finite box,
not the continuum statements.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as sint
from scipy import stats

from .config import RunConfig
from .exceptions import ContractError, KSLSDAError
from .grid import Grid, build_grid, integrate, laplacian_apply
from .operator import MeanFieldOperator
from .scf import EnergyBreakdown, Problem, ScfState, assemble_operator, build_problem, scf_solve, total_energy
from .spin import (
    OccupiedSet,
    SpinDensity,
    UField,
    density_from_orbitals,
    eigenvalues_pm,
    external_energy,
    flip,
    kinetic_energy,
    magnetization,
)
from .xc import SLATER_CX, XcFunctional, exc_of_density, vxc_matrix

__all__ = [
    "CheckResult",
    "check_flip_identity",
    "check_external_decomposition",
    "check_rho_pm",
    "check_pointwise_bounds",
    "check_flip_invariance",
    "check_hermiticity",
    "check_hoffman_ostenhof",
    "check_vxc_derivative",
    "check_energy_derivative",
    "check_aufbau",
    "check_coleman_history",
    "count_negative_eigenvalues",
    "RadialProfile",
    "gaussian_profile",
    "shell_profile",
    "ScalingTrial",
    "scaling_trial",
    "SweepPoint",
    "SweepReport",
    "sweep_lambda",
    "DecayFit",
    "fit_decay",
]

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-12


@dataclass
class CheckResult:
    """Verdict of one check.

    ``margin`` is the measured defect (or slack) and ``tol`` the threshold
    it is compared against; ``kind`` is ``exact`` or ``soft``.
    """

    name: str
    passed: bool
    margin: float
    tol: float
    kind: str = "exact"
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else ("SOFT-FAIL" if self.kind == "soft" else "FAIL")
        extra = f" ({self.detail})" if self.detail else ""
        return f"{verdict} {self.name}: margin {self.margin:.3e} tol {self.tol:.1e} [{self.kind}]{extra}"


def _exact(name, margin, tol=EXACT_TOL, detail=""):
    return CheckResult(name, bool(margin <= tol), float(margin), tol, "exact", detail)


# ---------------------------------------------------------------- identities


def check_flip_identity(s: OccupiedSet, U: UField) -> float:
    """``|E_ext(g) + E_ext(flip g) - 2 int V rho| / (1 + |int V rho|)``."""
    R = density_from_orbitals(s)
    RF = density_from_orbitals(flip(s))
    e1, v, _ = external_energy(U, R, s.grid)
    e2, _, _ = external_energy(U, RF, s.grid)
    return abs(e1 + e2 - 2.0 * v) / (1.0 + abs(v))


def check_external_decomposition(U: UField, R: SpinDensity, grid: Grid) -> float:
    """Relative defect of ``int tr[U R] = int V rho - mu int B.m``."""
    total, v, z = external_energy(U, R, grid)
    return abs(total - (v + z)) / (1.0 + abs(total))


def check_rho_pm(R: SpinDensity) -> float:
    """Largest relative gap between the closed-form ``rho_pm`` and a per-node eigensolver."""
    rp, rm = eigenvalues_pm(R)
    M = np.moveaxis(np.array([[R.ruu + 0j, R.rud], [R.rud.conj(), R.rdd + 0j]]), (0, 1), (-2, -1))
    ev = np.linalg.eigvalsh(M)
    scale = 1.0 + np.abs(R.rho)
    return float(max(np.max(np.abs(ev[..., 0] - rm) / scale), np.max(np.abs(ev[..., 1] - rp) / scale)))


def check_pointwise_bounds(R: SpinDensity) -> dict:
    """Worst violations of ``|rho^{ab}| <= rho``, ``rho_- >= 0`` and ``rho_+ <= rho``.

    Values ``<= 0`` mean the bound holds; positive entries are violations.
    """
    rho = R.rho
    rp, rm = eigenvalues_pm(R)
    return {
        "abs_entries": float(max(np.max(np.abs(R.ruu) - rho), np.max(np.abs(R.rdd) - rho), np.max(np.abs(R.rud) - rho))),
        "rho_minus_nonneg": float(np.max(-rm)),
        "rho_plus_le_rho": float(np.max(rp - rho)),
    }


def check_flip_invariance(s: OccupiedSet) -> dict:
    """Relative defects: kinetic energy, density and ``m + m_flip`` under the flip."""
    F = flip(s)
    R, RF = density_from_orbitals(s), density_from_orbitals(F)
    t0, t1 = kinetic_energy(s), kinetic_energy(F)
    m0 = np.array(magnetization(R))
    m1 = np.array(magnetization(RF))
    scale = 1.0 + np.abs(R.rho).max()
    # twice flipped spinors are the negatives of the originals
    twice = flip(F).orbitals + s.orbitals
    return {
        "kinetic": abs(t0 - t1) / (1.0 + abs(t0)),
        "density": float(np.abs(R.rho - RF.rho).max() / scale),
        "magnetization": float(np.abs(m0 + m1).max() / scale),
        "flip_squared": float(np.abs(twice).max() / (1.0 + np.abs(s.orbitals).max())),
    }


def check_hermiticity(op: MeanFieldOperator, rng, trials: int = 3) -> float:
    """Largest relative ``|<psi, H chi> - conj(<chi, H psi>)|`` over random spinors."""
    g = op.grid
    worst = 0.0
    for _ in range(trials):
        psi = rng.standard_normal((2,) + g.shape) + 1j * rng.standard_normal((2,) + g.shape)
        chi = rng.standard_normal((2,) + g.shape) + 1j * rng.standard_normal((2,) + g.shape)
        a = np.vdot(psi, op.apply(chi))
        b = np.vdot(chi, op.apply(psi))
        worst = max(worst, abs(a - b.conjugate()) / max(abs(a), 1e-300))
    return float(worst)


def check_hoffman_ostenhof(s: OccupiedSet, rel: float = 1e-3) -> dict:
    """Compare ``||grad sqrt(rho^{aa})||^2`` with ``Tr(-Delta gamma^{aa})`` per channel.

    Both sides use the discrete Dirichlet form of the seven-point stencil,
    for which the inequality holds exactly node by node.  Returns per
    channel ``(lhs, rhs, passed)``.
    """
    g = s.grid
    R = density_from_orbitals(s)
    out = {}
    for c, dens in ((0, R.ruu), (1, R.rdd)):
        root = np.sqrt(np.clip(dens, 0.0, None))
        lhs = float(g.dv * np.sum(root * -laplacian_apply(root, g)))
        rhs = 2.0 * kinetic_energy(s, channel=c)
        out["up" if c == 0 else "down"] = (lhs, rhs, bool(lhs <= rhs * (1.0 + rel) + 1e-14))
    return out


def check_vxc_derivative(R: SpinDensity, f: XcFunctional, dR: SpinDensity, grid: Grid, t: float = 1e-4) -> float:
    """``|central difference of E_xc along dR - int tr[V_xc dR]|``."""
    ep = exc_of_density(R + dR.scaled(t), f, grid)
    em = exc_of_density(R + dR.scaled(-t), f, grid)
    fd = (ep - em) / (2.0 * t)
    V = vxc_matrix(R, f)
    an = integrate((V[0, 0].real * dR.ruu + V[1, 1].real * dR.rdd + 2.0 * (V[0, 1] * dR.rud.conj()).real), grid)
    return float(abs(fd - an))


def _density_from_matrix(psi: np.ndarray, G: np.ndarray) -> SpinDensity:
    # R^{ab}(x) = sum_ij G_ij psi_i^a(x) conj(psi_j^b(x))
    flat = psi.reshape(psi.shape[0], 2, -1)
    A = np.einsum("ij,iax->jax", G, flat)  # sum_i G_ij psi_i
    ruu = np.einsum("jx,jx->x", A[:, 0], flat[:, 0].conj())
    rdd = np.einsum("jx,jx->x", A[:, 1], flat[:, 1].conj())
    rud = np.einsum("jx,jx->x", A[:, 0], flat[:, 1].conj())
    shape = psi.shape[2:]
    return SpinDensity(ruu.real.reshape(shape), rdd.real.reshape(shape), rud.real.reshape(shape), rud.imag.reshape(shape))


def _energy_of_matrix(problem: Problem, psi: np.ndarray, G: np.ndarray, T: np.ndarray) -> float:
    R = _density_from_matrix(psi, G)
    kin = 0.5 * float(np.real(np.sum(G * T.T)))
    dummy = OccupiedSet(psi[:1], np.array([1.0]), problem.grid)
    parts = total_energy(dummy, problem, R)
    return kin + parts.total - parts.kinetic


def check_energy_derivative(state: ScfState, problem: Problem, rng, n_virtual: int = 4, floor: float = 0.1,
                            t: Optional[float] = None) -> float:
    """Directional derivative of the energy against ``Tr(H_gamma d_gamma)``.

    ``gamma`` is a Hermitian matrix ``G`` in the basis of the occupied
    orbitals of ``state`` plus ``n_virtual`` empty ones.  The converged
    occupations are blended with a uniform ``floor`` so that ``G`` is
    positive definite and a two-sided step ``t`` keeps the spin density
    positive (a fully occupied or empty level admits only one-sided moves).
    ``d_gamma`` is a random Hermitian trace-free ``dG`` of unit spectral
    norm.  The Richardson-extrapolated central difference is compared with
    ``sum_ij dG_ij <psi_j, H psi_i>``, ``H`` built from ``gamma``.  Returns
    the absolute gap.
    """
    occ = state.occupations
    nocc = int(np.sum(occ > 0))
    m = min(len(occ), nocc + n_virtual)
    psi = state.occupied.orbitals[:m]
    lam = float(occ[:m].sum())
    G0 = ((1.0 - floor) * np.diag(occ[:m]) + floor * lam / m * np.eye(m)).astype(complex)
    A = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    dG = 0.5 * (A + A.conj().T)
    dG -= np.trace(dG).real / m * np.eye(m)
    dG /= np.abs(np.linalg.eigvalsh(dG)).max()
    if t is None:
        t = 0.25 * floor * lam / m
    g = problem.grid
    flat = psi.reshape(m, -1)
    lap = -laplacian_apply(psi, g).reshape(m, -1)
    T = g.dv * (flat.conj() @ lap.T)  # T_ji = <psi_j, -Lap psi_i>
    op, _ = assemble_operator(problem, _density_from_matrix(psi, G0))
    Hpsi = op.apply(psi).reshape(m, -1)
    Hm = g.dv * (flat.conj() @ Hpsi.T)  # Hm_ji = <psi_j, H psi_i>
    analytic = float(np.real(np.sum(dG * Hm.T)))

    def d(step):
        ep = _energy_of_matrix(problem, psi, G0 + step * dG, T)
        em = _energy_of_matrix(problem, psi, G0 - step * dG, T)
        return (ep - em) / (2.0 * step)

    fd = (4.0 * d(0.5 * t) - d(t)) / 3.0
    return abs(fd - analytic)


# ---------------------------------------------------------------- SCF structure


def check_aufbau(state: ScfState, deg_tol: float = 1e-6, slack: float = 2e-6) -> CheckResult:
    """Occupied levels at or below ``eF``, empty ones at or above, fractions only at ``eF``."""
    eps = state.eigenvalues
    occ = state.occupations
    ef = state.fermi_level
    full = occ >= 1.0 - 1e-12
    empty = occ <= 1e-12
    frac = ~(full | empty)
    worst = 0.0
    if full.any():
        worst = max(worst, float(np.max(eps[full] - (ef + deg_tol))))
    if empty.any():
        worst = max(worst, float(np.max((ef + deg_tol) - (eps[empty] + slack))))
    if frac.any():
        worst = max(worst, float(np.max(np.abs(eps[frac] - ef) - deg_tol)))
    return CheckResult("aufbau", worst <= 0.0, worst, 0.0, "soft", f"eF = {ef:.6f}")


def check_coleman_history(history: Sequence[dict], trace_tol: float = 1e-10, orth_tol: float = 1e-8) -> CheckResult:
    """Coleman constraints at every recorded SCF iterate."""
    worst = 0.0
    bad = []
    for h in history:
        defect = max(-h["occ_min"], h["occ_max"] - 1.0, h["trace_error"] - trace_tol, h["orth_error"] - orth_tol, 0.0)
        if defect > 0:
            bad.append(h["iteration"])
        worst = max(worst, defect)
    return CheckResult("coleman", not bad, worst, 0.0, "exact", f"{len(history)} iterates")


def count_negative_eigenvalues(state: ScfState, threshold: float = -1e-3) -> int:
    return int(np.sum(np.asarray(state.eigenvalues) < threshold))


# ---------------------------------------------------------------- scaling trial


@dataclass(frozen=True)
class RadialProfile:
    """Radial orbital profile ``phi(r)`` (not necessarily normalised)."""

    name: str
    phi: Callable
    dphi: Callable
    r_max: float

    def integrals(self, samples: int = 200001) -> dict:
        """``K = int |grad phi|^2``, ``J = J(|phi|^2)``, ``X = int |phi|^(8/3)`` for the normalised profile."""
        r = np.linspace(0.0, self.r_max, samples)
        p, dp = self.phi(r), self.dphi(r)
        norm = 4.0 * np.pi * sint.trapezoid(p**2 * r**2, r)
        p, dp = p / np.sqrt(norm), dp / np.sqrt(norm)
        rho = p**2
        K = 4.0 * np.pi * sint.trapezoid(dp**2 * r**2, r)
        X = 4.0 * np.pi * sint.trapezoid(np.abs(p) ** (8.0 / 3.0) * r**2, r)
        # potential of a radial charge: q(r)/r + 4 pi int_r^inf rho r' dr'
        q = 4.0 * np.pi * sint.cumulative_trapezoid(rho * r**2, r, initial=0.0)
        outer = 4.0 * np.pi * sint.cumulative_trapezoid(rho * r, r, initial=0.0)
        outer = outer[-1] - outer
        with np.errstate(divide="ignore", invalid="ignore"):
            pot = np.where(r > 0, q / np.where(r > 0, r, 1.0), 0.0) + outer
        J = 0.5 * 4.0 * np.pi * sint.trapezoid(rho * pot * r**2, r)
        return {"K": float(K), "J": float(J), "X": float(X), "norm": float(norm)}

    def sample(self, grid: Grid, sigma: float = 1.0, center=None) -> np.ndarray:
        """Dilated profile ``phi(sigma r)``, normalised on ``grid``."""
        c = grid.center if center is None else center
        f = self.phi(sigma * grid.distance(c))
        return f / np.sqrt(integrate(f**2, grid))


def gaussian_profile() -> RadialProfile:
    """``phi = exp(-r^2 / 2)``: closed forms ``K = 3/2``, ``J = 1/sqrt(2 pi)``, ``X = pi^-2 (3 pi / 4)^(3/2)``."""
    return RadialProfile("gaussian", lambda r: np.exp(-0.5 * r**2), lambda r: -r * np.exp(-0.5 * r**2), 12.0)


def shell_profile(radius: float = 5.0, width: float = 0.5) -> RadialProfile:
    """Thin spherical shell ``exp(-(r - R)^2 / (2 w^2))``."""
    return RadialProfile(
        "shell",
        lambda r: np.exp(-0.5 * ((r - radius) / width) ** 2),
        lambda r: -(r - radius) / width**2 * np.exp(-0.5 * ((r - radius) / width) ** 2),
        radius + 12.0 * width,
    )


@dataclass
class ScalingTrial:
    """Rank-one, fully spin-polarised trial states ``lambda |phi_s><phi_s|``.

    ``analytic[i]`` is ``lambda s^2 K / 2 + s (lambda^2 J - 2^(1/3) c_x lambda^(4/3) X)``
    at ``sigmas[i]``; ``grid_values[i]`` is the discrete energy of the same state.
    """

    lam: float
    profile: str
    sigmas: np.ndarray
    analytic: np.ndarray
    grid_values: np.ndarray
    K: float
    J: float
    X: float
    c_x: float
    linear_coefficient: float
    sigma_opt: float
    energy_opt: float

    @property
    def scale(self) -> np.ndarray:
        """Sum of the absolute sizes of the kinetic, Hartree and exchange parts."""
        s, lam = self.sigmas, self.lam
        return 0.5 * lam * s**2 * self.K + lam**2 * s * self.J + 2.0 ** (1.0 / 3.0) * self.c_x * lam ** (4.0 / 3.0) * s * self.X

    @property
    def rel_gap(self) -> np.ndarray:
        """Grid-vs-analytic gap relative to :attr:`scale` (the energy itself may cross 0)."""
        return np.abs(self.grid_values - self.analytic) / self.scale

    @property
    def best(self) -> float:
        return float(np.min(self.analytic))

    @property
    def certifies_negative(self) -> bool:
        return self.linear_coefficient < 0.0


def _trial_grid_energy(lam, sigma, profile, n, L0, c_x):
    from .spin import MagneticField  # local: only needed for the trial config

    grid = build_grid(n, L0 / sigma)
    cfg = RunConfig(n=n, L=L0 / sigma, lam=min(lam, 1.0), mode="infinity", xc="xalpha" if c_x > 0 else "none",
                    c_x=c_x if c_x > 0 else SLATER_CX, field=MagneticField(), poisson_tol=1e-12)
    problem = build_problem(cfg)
    phi = profile.sample(grid, sigma)
    orb = np.zeros((1, 2) + grid.shape, dtype=complex)
    orb[0, 0] = phi
    s = OccupiedSet(orb, np.array([lam]), grid)
    return total_energy(s, problem).total


def scaling_trial(lam: float, sigmas, profile: Optional[RadialProfile] = None, c_x: float = SLATER_CX,
                  n: int = 32, L0: float = 10.0, grid_eval: bool = True) -> ScalingTrial:
    """Energy of dilated trial states at each ``sigma``, analytically and on a grid.

    ``c_x = 0`` switches exchange off.  The grid value at ``sigma`` uses a
    box of edge ``L0 / sigma`` with ``n`` nodes, so every dilation is
    resolved equally well.
    """
    if not 0 < lam <= 1:
        raise ContractError("the rank-one trial needs 0 < lambda <= 1")
    profile = profile or gaussian_profile()
    ints = profile.integrals()
    K, J, X = ints["K"], ints["J"], ints["X"]
    sig = np.asarray(sigmas, dtype=float)
    c1 = lam**2 * J - 2.0 ** (1.0 / 3.0) * c_x * lam ** (4.0 / 3.0) * X
    analytic = 0.5 * lam * sig**2 * K + sig * c1
    if c1 < 0:
        s_opt = -c1 / (lam * K)
        e_opt = -(c1**2) / (2.0 * lam * K)
    else:
        s_opt, e_opt = 0.0, 0.0
    if grid_eval:
        gv = np.array([_trial_grid_energy(lam, s, profile, n, L0, c_x) for s in sig])
    else:
        gv = np.full_like(sig, np.nan)
    return ScalingTrial(lam, profile.name, sig, analytic, gv, K, J, X, c_x, c1, s_opt, e_opt)


# ---------------------------------------------------------------- lambda sweep


@dataclass
class SweepPoint:
    lam: float
    I: float = float("nan")
    I_inf: float = float("nan")
    converged: bool = False
    converged_inf: bool = False
    error: str = ""
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


@dataclass
class SweepReport:
    """Upper bounds ``I_lambda`` and ``I_lambda^inf`` on one grid, with soft verdicts."""

    points: list
    checks: list = field(default_factory=list)
    tol_bind: float = 1e-4
    binding_margin: float = 1e-4
    note: str = "values are SCF upper bounds of the discretised problem"

    def point(self, lam: float) -> SweepPoint:
        for p in self.points:
            if math.isclose(p.lam, lam, rel_tol=0, abs_tol=1e-12):
                return p
        raise KeyError(lam)

    def csv_rows(self) -> list:
        rows = []
        for p in self.points:
            rows.append((p.lam, p.I, p.I_inf, p.I_inf - p.I, int(p.converged and p.converged_inf)))
        return rows


def _solve_point(cfg: RunConfig, lam: float) -> SweepPoint:
    pt = SweepPoint(lam)
    try:
        st = scf_solve(cfg.replace(lam=lam, mode="full"))
        pt.I, pt.converged, pt.iterations = st.energy.total, st.converged, st.iterations
        pt.history.extend(st.history)
    except KSLSDAError as exc:
        pt.error = f"full: {exc}"
    try:
        si = scf_solve(cfg.replace(lam=lam, mode="infinity"))
        pt.I_inf, pt.converged_inf = si.energy.total, si.converged
        pt.history.extend(si.history)
    except KSLSDAError as exc:
        pt.error += f" infinity: {exc}"
    return pt


def sweep_lambda(lambdas, cfg: RunConfig, binding_margin: Optional[float] = None, workers: int = 1) -> SweepReport:
    """Solve the full and field-free problems for each ``lambda`` and for ``lambda / 2``.

    Verdicts (all soft): ``sign`` ``I^inf < 0``; ``binding``
    ``I^inf - I > binding_margin``; ``monotone``; ``subadditive`` at
    ``mu = lambda / 2``.  Points whose SCF fails are flagged and skipped.
    """
    lams = sorted(set(float(x) for x in lambdas) | {0.5 * float(x) for x in lambdas})
    tol = cfg.sweep_tol_bind
    margin = tol if binding_margin is None else binding_margin
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            points = list(pool.map(_solve_point, [cfg] * len(lams), lams))
    else:
        points = [_solve_point(cfg, lam) for lam in lams]
    rep = SweepReport(points, tol_bind=tol, binding_margin=margin)
    ok = {p.lam: p for p in points if p.converged and p.converged_inf}
    for lam in sorted(float(x) for x in lambdas):
        p = ok.get(lam)
        if p is None:
            rep.checks.append(CheckResult(f"point lambda={lam}", False, float("nan"), 0.0, "soft", "SCF failed"))
            continue
        rep.checks.append(CheckResult(f"sign lambda={lam}", p.I_inf < 0, p.I_inf, 0.0, "soft", "I_inf < 0"))
        rep.checks.append(CheckResult(f"binding lambda={lam}", p.I_inf - p.I > margin, p.I_inf - p.I, margin, "soft",
                                      "I_inf - I > margin"))
        h = ok.get(0.5 * lam)
        if h is not None:
            gap = p.I - (h.I + h.I_inf)
            rep.checks.append(CheckResult(f"subadditive lambda={lam}", gap <= tol, gap, tol, "soft",
                                          "I_lam - I_mu - I_inf_(lam-mu), mu = lam/2"))
    conv = sorted(ok)
    for a, b in zip(conv, conv[1:]):
        gap = ok[b].I - ok[a].I
        rep.checks.append(CheckResult(f"monotone {a}->{b}", gap <= tol, gap, tol, "soft", "I_b - I_a"))
    return rep


# ---------------------------------------------------------------- decay


@dataclass
class DecayFit:
    """Straight-line fit of ``log`` shell-averaged density against radius."""

    radii: np.ndarray
    log_rho: np.ndarray
    slope: float
    intercept: float
    r_value: float
    window: tuple
    expected_slope: float

    @property
    def ratio(self) -> float:
        """``|slope| / |expected_slope|``."""
        return abs(self.slope) / abs(self.expected_slope) if self.expected_slope else float("nan")


def fit_decay(state: ScfState, r_core: float = 2.0, outer_frac: float = 0.2, center=None) -> DecayFit:
    """Fit the density tail of a bound state.

    Shells of width ``h`` are centred on the charge-weighted nuclear centre.
    Nodes within ``r_core`` of any nucleus and beyond ``(1 - outer_frac)``
    of the distance to the nearest face are excluded.  The expected slope
    is ``-2 sqrt(-2 eF)``.
    """
    cfg = state.config
    grid = state.occupied.grid
    nuclei = cfg.nuclei if cfg is not None else ()
    if center is None:
        if nuclei:
            zs = np.array([z for z, _ in nuclei], dtype=float)
            pos = np.array([p for _, p in nuclei], dtype=float)
            center = (zs[:, None] * pos).sum(axis=0) / zs.sum()
        else:
            center = grid.center
    center = np.asarray(center, dtype=float)
    lo = np.asarray(grid.origin, dtype=float)
    face = float(min(np.min(center - lo), np.min(lo + grid.L - center)))
    r_max = (1.0 - outer_frac) * face
    r = grid.distance(center)
    mask = r <= r_max
    for _, p in nuclei:
        mask &= grid.distance(p) >= r_core
    r_min = r_core + (max(np.linalg.norm(np.asarray(p) - center) for _, p in nuclei) if nuclei else 0.0)
    mask &= r >= r_min
    rho = state.density.rho
    edges = np.arange(r_min, r_max + grid.h, grid.h)
    idx = np.digitize(r[mask], edges) - 1
    vals = rho[mask]
    radii, logs = [], []
    for b in range(len(edges) - 1):
        sel = idx == b
        if not sel.any():
            continue
        m = vals[sel].mean()
        if m <= 0:
            continue
        radii.append(r[mask][sel].mean())
        logs.append(np.log(m))
    ef = state.fermi_level
    expected = -2.0 * math.sqrt(-2.0 * ef) if ef < 0 else float("nan")
    if len(radii) < 3:
        raise ContractError(
            f"no decay window: {len(radii)} shells between r = {r_min:.2f} and {r_max:.2f}; enlarge the box"
        )
    fit = stats.linregress(radii, logs)
    return DecayFit(np.array(radii), np.array(logs), float(fit.slope), float(fit.intercept), float(fit.rvalue),
                    (float(r_min), float(r_max)), expected)
