"""Mean-field Hamiltonian on spinor fields: kinetic, Hartree, U and xc blocks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .exceptions import ConfigError, SolverError
from .grid import Grid, integrate, laplacian_apply
from .spin import ExternalFields, UField

__all__ = [
    "nuclear_potential",
    "HartreeSolution",
    "hartree_potential",
    "hartree_energy",
    "MeanFieldOperator",
    "apply_H",
]


def nuclear_potential(ext: ExternalFields, grid: Grid) -> np.ndarray:
    """Softened Coulomb potential ``-sum_k z_k / sqrt(|r - R_k|^2 + a^2)``."""
    V = np.zeros(grid.shape)
    a2 = ext.softening**2
    for z, pos in ext.nuclei:
        if not grid.contains(pos):
            raise ConfigError(f"nucleus at {pos} lies outside the box")
        r2 = grid.distance(pos) ** 2
        if a2 == 0.0 and np.any(r2 == 0.0):
            raise ConfigError(f"nucleus at {pos} sits on a grid node; use a softening length > 0")
        V -= z / np.sqrt(r2 + a2)
    return V


@dataclass
class HartreeSolution:
    """Discrete Hartree potential of a density.

    Attributes
    ----------
    phi : ndarray
        Solution of ``-Delta_h phi = 4 pi rho`` with monopole Dirichlet data.
    residual_norm : float
        Relative residual of the linear solves (max over the two solves).
    iterations : int
        Total conjugate-gradient iterations.
    potential : ndarray
        Exact gradient of ``J = int rho phi / 2`` with respect to ``rho``.
        Equals ``phi`` up to terms coming from the density dependence of the
        boundary data; this is what the Hamiltonian uses.
    """

    phi: np.ndarray
    residual_norm: float
    iterations: int
    potential: np.ndarray
    w: Optional[np.ndarray] = None
    phi_bc: Optional[np.ndarray] = None


def _faces(grid: Grid):
    """Ghost-node coordinates ``(3, n, n)`` and the adjacent interior slice, per face."""
    n = grid.n
    axes = [grid.axis(d) for d in range(3)]
    for d in range(3):
        e1, e2 = [e for e in range(3) if e != d]
        A, B = np.meshgrid(axes[e1], axes[e2], indexing="ij")
        for coord, idx in ((grid.origin[d], 0), (grid.origin[d] + grid.L, n - 1)):
            pts = np.empty((3, n, n))
            pts[d] = coord
            pts[e1] = A
            pts[e2] = B
            sl = [slice(None)] * 3
            sl[d] = idx
            yield pts, tuple(sl)


def _poisson_solve(rhs, grid, tol, max_iter, x0=None):
    """CG solve of ``-Delta_h x = rhs`` with zero Dirichlet data."""
    N = grid.size
    b = rhs.ravel()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(grid.shape), 0.0, 0
    op = LinearOperator((N, N), matvec=lambda x: -laplacian_apply(x.reshape(grid.shape), grid).ravel(), dtype=float)
    count = [0]

    def _cb(_):
        count[0] += 1

    x, info = cg(op, b, x0=None if x0 is None else x0.ravel(), rtol=tol, atol=0.0, maxiter=max_iter, callback=_cb)
    res = np.linalg.norm(b + laplacian_apply(x.reshape(grid.shape), grid).ravel()) / bnorm
    if info != 0 and res > tol:
        raise SolverError(f"Poisson CG did not converge in {max_iter} iterations (relative residual {res:.3e})", residuals=[res])
    return x.reshape(grid.shape), float(res), count[0]


def hartree_potential(rho, grid: Grid, tol: float = 1e-10, max_iter: int = 5000, guess: Optional[HartreeSolution] = None) -> HartreeSolution:
    """Solve ``-Delta_h phi = 4 pi rho`` with boundary values ``q / |r - r_c|``.

    ``q`` is the total charge and ``r_c`` the centre of charge.  Two linear
    solves are made: ``w`` with zero boundary data, and the harmonic
    boundary part ``phi_bc``; ``phi = 4 pi w + phi_bc``.
    """
    rho = np.asarray(rho, dtype=float)
    h2 = grid.h**2
    q = float(integrate(rho, grid))
    w, res_w, it_w = _poisson_solve(rho, grid, tol, max_iter, None if guess is None else guess.w)
    if q <= 0.0:
        phi = 4.0 * np.pi * w
        return HartreeSolution(phi, res_w, it_w, phi.copy(), w, np.zeros_like(w))
    x, y, z = grid.coords()
    c = np.array([integrate(x * rho, grid), integrate(y * rho, grid), integrate(z * rho, grid)]) / q
    eb = np.zeros(grid.shape)
    s0 = 0.0
    s1 = np.zeros(3)
    for pts, sl in _faces(grid):
        diff = pts - c[:, None, None]
        dist = np.sqrt((diff**2).sum(axis=0))
        eb[sl] += q / dist / h2
        s = w[sl] / h2
        s0 += np.sum(s / dist)
        s1 += (s[None] * diff / dist[None] ** 3).sum(axis=(1, 2))
    phi_bc, res_b, it_b = _poisson_solve(eb, grid, tol, max_iter, None if guess is None else guess.phi_bc)
    phi = 4.0 * np.pi * w + phi_bc
    # d/d rho of (1/2) rho^T L^-1 E b(rho): symmetric part plus the
    # dependence of b on q and on the charge centre.
    corr = 0.5 * grid.dv * (s0 + (x - c[0]) * s1[0] + (y - c[1]) * s1[1] + (z - c[2]) * s1[2])
    potential = 4.0 * np.pi * w + 0.5 * phi_bc + corr
    return HartreeSolution(phi, max(res_w, res_b), it_w + it_b, potential, w, phi_bc)


def hartree_energy(rho, sol: HartreeSolution, grid: Grid) -> float:
    """``J = int rho phi / 2``."""
    return float(0.5 * integrate(np.asarray(rho) * sol.phi, grid))


class MeanFieldOperator:
    """Matrix-free ``H = -Delta_h / 2 + M(r)`` on spinor fields.

    ``M`` is the pointwise Hermitian 2x2 matrix ``phi_H I + U + V_xc``;
    any block may be absent.  ``structure`` tells the eigensolver how the
    spin channels couple: ``coupled``, ``collinear`` (block diagonal) or
    ``unpolarized`` (block diagonal with identical blocks).
    """

    def __init__(self, grid: Grid, U: Optional[UField] = None, hartree: Optional[np.ndarray] = None,
                 vxc: Optional[np.ndarray] = None, structure: str = "coupled"):
        if structure not in ("coupled", "collinear", "unpolarized"):
            raise ConfigError(f"unknown spin structure {structure!r}")
        self.grid = grid
        self.U = U
        self.hartree = hartree
        self.vxc = vxc
        self.structure = structure
        m_uu = np.zeros(grid.shape)
        m_dd = np.zeros(grid.shape)
        m_ud = np.zeros(grid.shape, dtype=complex)
        for arr in (hartree,):
            if arr is not None:
                if arr.shape != grid.shape:
                    raise ConfigError("Hartree potential does not match the grid")
                m_uu = m_uu + arr
                m_dd = m_dd + arr
        if U is not None:
            if U.uu.shape != grid.shape:
                raise ConfigError("U field does not match the grid")
            m_uu = m_uu + U.uu
            m_dd = m_dd + U.dd
            m_ud = m_ud + (U.ud_re + 1j * U.ud_im)
        if vxc is not None:
            if vxc.shape != (2, 2) + grid.shape:
                raise ConfigError("xc potential does not match the grid")
            m_uu = m_uu + vxc[0, 0].real
            m_dd = m_dd + vxc[1, 1].real
            m_ud = m_ud + vxc[0, 1]
        self.m_uu = m_uu
        self.m_dd = m_dd
        self.m_ud = m_ud

    @property
    def dim(self) -> int:
        return 2 * self.grid.size

    def local_matrix(self) -> np.ndarray:
        return np.array([[self.m_uu + 0j, self.m_ud], [self.m_ud.conj(), self.m_dd + 0j]])

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply to a spinor ``(2, n, n, n)`` or a block ``(m, 2, n, n, n)``."""
        psi = np.asarray(psi)
        if psi.shape[-4:] != (2,) + self.grid.shape:
            raise ConfigError(f"spinor shape {psi.shape} does not match the grid")
        out = -0.5 * laplacian_apply(psi, self.grid)
        up = psi[..., 0, :, :, :]
        dn = psi[..., 1, :, :, :]
        out[..., 0, :, :, :] += self.m_uu * up + self.m_ud * dn
        out[..., 1, :, :, :] += self.m_ud.conj() * up + self.m_dd * dn
        return out

    def apply_channel(self, f: np.ndarray, channel: int) -> np.ndarray:
        """Apply the diagonal block of one spin channel to scalar fields."""
        m = self.m_uu if channel == 0 else self.m_dd
        return -0.5 * laplacian_apply(f, self.grid) + m * f

    def diagonal(self) -> np.ndarray:
        """Diagonal of ``H`` per channel, shape ``(2, n, n, n)``."""
        kin = 3.0 / self.grid.h**2
        return np.array([kin + self.m_uu, kin + self.m_dd])

    def dense(self) -> np.ndarray:
        """Materialise ``H`` in the node basis (spinor-major ordering)."""
        N = self.dim
        H = np.empty((N, N), dtype=complex)
        chunk = 256
        for start in range(0, N, chunk):
            stop = min(N, start + chunk)
            E = np.zeros((stop - start, N), dtype=complex)
            E[np.arange(stop - start), np.arange(start, stop)] = 1.0
            H[:, start:stop] = self.apply(E.reshape((-1, 2) + self.grid.shape)).reshape(stop - start, N).T
        return H


def apply_H(op: MeanFieldOperator, psi: np.ndarray) -> np.ndarray:
    return op.apply(psi)
