"""Spin density matrices, the external coupling matrix and the flip map.

The 2x2 Hermitian spin density matrix field is stored as four real channels
(``ruu``, ``rdd``, ``rud_re``, ``rud_im``) so that Hermiticity holds by
construction.  Orbitals are spinor blocks of shape ``(k, 2, n, n, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ContractError, NumericError
from .grid import Grid, integrate, laplacian_apply

__all__ = [
    "MU_B",
    "SpinDensity",
    "OccupiedSet",
    "MagneticField",
    "ExternalFields",
    "UField",
    "density_from_orbitals",
    "eigenvalues_pm",
    "magnetization",
    "flip",
    "assemble_U",
    "external_energy",
    "orthonormalize",
    "overlap_matrix",
    "kinetic_energy",
    "random_occupied_set",
    "write_density_dump",
    "read_density_dump",
]

#: Bohr magneton in atomic units.
MU_B = 0.5

DUMP_COLUMNS = ("ruu", "rdd", "rud_re", "rud_im", "rho_plus", "rho_minus", "m_x", "m_y", "m_z")


@dataclass(frozen=True)
class SpinDensity:
    """Pointwise 2x2 Hermitian matrix ``[[ruu, rud], [conj(rud), rdd]]``."""

    ruu: np.ndarray
    rdd: np.ndarray
    rud_re: np.ndarray
    rud_im: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return self.ruu + self.rdd

    @property
    def rud(self) -> np.ndarray:
        return self.rud_re + 1j * self.rud_im

    def channels(self) -> np.ndarray:
        return np.stack([self.ruu, self.rdd, self.rud_re, self.rud_im])

    @classmethod
    def from_channels(cls, c) -> "SpinDensity":
        c = np.asarray(c, dtype=float)
        return cls(c[0].copy(), c[1].copy(), c[2].copy(), c[3].copy())

    def __add__(self, other: "SpinDensity") -> "SpinDensity":
        return SpinDensity.from_channels(self.channels() + other.channels())

    def scaled(self, t: float) -> "SpinDensity":
        return SpinDensity.from_channels(t * self.channels())

    def collinear(self) -> "SpinDensity":
        """Copy with the off-diagonal channels set to zero."""
        z = np.zeros_like(self.ruu)
        return SpinDensity(self.ruu.copy(), self.rdd.copy(), z, z.copy())

    def unpolarized(self) -> "SpinDensity":
        """Copy with ``ruu = rdd = rho / 2`` and no off-diagonal part."""
        half = 0.5 * self.rho
        z = np.zeros_like(half)
        return SpinDensity(half, half.copy(), z, z.copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "SpinDensity":
        return cls.from_channels(np.zeros((4,) + grid.shape))


def overlap_matrix(orbitals: np.ndarray, grid: Grid) -> np.ndarray:
    """Gram matrix ``S_kl = <Phi_k, Phi_l>`` of a spinor block."""
    flat = orbitals.reshape(orbitals.shape[0], -1)
    return grid.dv * (flat.conj() @ flat.T)


def orthonormalize(orbitals: np.ndarray, grid: Grid) -> np.ndarray:
    """Modified Gram-Schmidt (two passes) in the discrete inner product."""
    out = np.array(orbitals, dtype=complex, copy=True)
    flat = out.reshape(out.shape[0], -1)
    for _ in range(2):
        for i in range(flat.shape[0]):
            for j in range(i):
                flat[i] -= grid.dv * np.vdot(flat[j], flat[i]) * flat[j]
            norm = np.sqrt(grid.dv * np.vdot(flat[i], flat[i]).real)
            if norm == 0.0:
                raise ContractError(f"orbital {i} is linearly dependent on the previous ones")
            flat[i] /= norm
    return out


@dataclass
class OccupiedSet:
    """Coleman representation: orthonormal spinors with occupations in [0, 1].

    Parameters
    ----------
    orbitals : ndarray, shape (k, 2, n, n, n), complex
    occupations : ndarray, shape (k,)
    grid : Grid
    """

    orbitals: np.ndarray
    occupations: np.ndarray
    grid: Grid
    orth_tol: float = field(default=1e-8, repr=False)

    def __post_init__(self):
        self.orbitals = np.asarray(self.orbitals, dtype=complex)
        self.occupations = np.asarray(self.occupations, dtype=float).ravel()
        if self.orbitals.ndim != 5 or self.orbitals.shape[1:] != (2,) + self.grid.shape:
            raise ContractError(f"orbitals must have shape (k, 2, {self.grid.n}, {self.grid.n}, {self.grid.n})")
        if self.orbitals.shape[0] != self.occupations.size:
            raise ContractError("one occupation per orbital is required")
        occ = self.occupations
        if np.any(occ < 0.0) or np.any(occ > 1.0):
            raise ContractError(f"occupations must lie in [0, 1], got min {occ.min()} max {occ.max()}")
        if self.orthonormality_error() > self.orth_tol:
            self.orbitals = orthonormalize(self.orbitals, self.grid)

    @property
    def lam(self) -> float:
        return float(self.occupations.sum())

    def __len__(self) -> int:
        return self.occupations.size

    def orthonormality_error(self) -> float:
        if len(self) == 0:
            return 0.0
        s = overlap_matrix(self.orbitals, self.grid)
        return float(np.abs(s - np.eye(len(self))).max())


def density_from_orbitals(s: OccupiedSet) -> SpinDensity:
    """``rho^{ab}(r) = sum_k n_k phi_k^a(r) conj(phi_k^b(r))``."""
    if len(s) == 0:
        return SpinDensity.zeros(s.grid)
    n = s.occupations[:, None, None, None]
    up = s.orbitals[:, 0]
    dn = s.orbitals[:, 1]
    ruu = np.sum(n * np.abs(up) ** 2, axis=0)
    rdd = np.sum(n * np.abs(dn) ** 2, axis=0)
    rud = np.sum(n * up * dn.conj(), axis=0)
    return SpinDensity(ruu, rdd, rud.real.copy(), rud.imag.copy())


def _discriminant(R: SpinDensity) -> np.ndarray:
    d = R.ruu - R.rdd
    return np.sqrt(d * d + 4.0 * (R.rud_re**2 + R.rud_im**2))


def eigenvalues_pm(R: SpinDensity) -> tuple:
    """Pointwise eigenvalues ``rho_+ >= rho_-`` of the spin density matrix."""
    chans = R.channels()
    if not np.all(np.isfinite(chans)):
        raise NumericError("spin density has non-finite entries")
    s = _discriminant(R)
    rho = R.rho
    return 0.5 * (rho + s), 0.5 * (rho - s)


def magnetization(R: SpinDensity) -> tuple:
    """``m = tr[sigma R]`` with the standard Pauli matrices."""
    return 2.0 * R.rud_re, -2.0 * R.rud_im, R.ruu - R.rdd


def flip(s: OccupiedSet) -> OccupiedSet:
    """Map each spinor ``(a, b)`` to ``(conj(b), -conj(a))``, same occupations."""
    phi = s.orbitals
    flipped = np.empty_like(phi)
    flipped[:, 0] = phi[:, 1].conj()
    flipped[:, 1] = -phi[:, 0].conj()
    return OccupiedSet(flipped, s.occupations.copy(), s.grid, s.orth_tol)


def kinetic_energy(s: OccupiedSet, channel=None) -> float:
    """``sum_k n_k <Phi_k, -Delta_h Phi_k> / 2``; ``channel`` 0/1 restricts to one spin."""
    phi = s.orbitals if channel is None else s.orbitals[:, channel : channel + 1]
    total = 0.0
    for nk, p in zip(s.occupations, phi):
        if nk == 0.0:
            continue
        total += nk * (s.grid.dv * np.vdot(p, -laplacian_apply(p, s.grid))).real
    return 0.5 * total


@dataclass(frozen=True)
class MagneticField:
    """Analytic or tabulated external field ``B``.

    ``kind`` is one of ``none``, ``uniform`` (``b0`` along ``axis``),
    ``gaussian`` (``amplitude * exp(-|r - center|**2 / (2 width**2))`` along
    ``axis``) or ``file`` (``path`` to ``n**3`` rows of ``bx by bz``).
    ``axis`` is ``x``, ``y``, ``z`` or an explicit 3-vector.
    """

    kind: str = "none"
    b0: float = 0.0
    axis: tuple = (0.0, 0.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0
    amplitude: float = 0.0
    path: str = ""

    def direction(self) -> np.ndarray:
        v = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ConfigError("field axis must be non-zero")
        return v / norm

    def is_zero(self) -> bool:
        if self.kind == "none":
            return True
        if self.kind == "uniform":
            return self.b0 == 0.0
        if self.kind == "gaussian":
            return self.amplitude == 0.0
        return False

    def sample(self, grid: Grid) -> np.ndarray:
        """Field values, shape ``(3, n, n, n)``."""
        if self.kind == "none":
            return np.zeros((3,) + grid.shape)
        if self.kind == "uniform":
            return self.b0 * self.direction()[:, None, None, None] * np.ones((3,) + grid.shape)
        if self.kind == "gaussian":
            if self.width <= 0:
                raise ConfigError("gaussian field width must be positive")
            prof = self.amplitude * np.exp(-grid.distance(self.center) ** 2 / (2.0 * self.width**2))
            return self.direction()[:, None, None, None] * prof[None]
        if self.kind == "file":
            try:
                data = np.loadtxt(self.path, comments="#", ndmin=2)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read field file {self.path}: {exc}") from None
            if data.shape != (grid.size, 3):
                raise ConfigError(f"field file {self.path} must hold {grid.size} rows of 3 values, got {data.shape}")
            return np.ascontiguousarray(data.T).reshape((3,) + grid.shape)
        raise ConfigError(f"unknown field kind {self.kind!r}")


@dataclass(frozen=True)
class ExternalFields:
    """Nuclei ``((z, (x, y, z)), ...)``, the field ``B`` and the softening length."""

    nuclei: tuple = ()
    field: MagneticField = MagneticField()
    softening: float = 0.0
    mu: float = MU_B

    @property
    def Z(self) -> int:
        return int(sum(z for z, _ in self.nuclei))

    def __post_init__(self):
        for z, pos in self.nuclei:
            if int(z) != z or z < 1:
                raise ConfigError(f"nuclear charges must be positive integers, got {z!r}")
            if len(pos) != 3:
                raise ConfigError(f"nuclear position must have 3 coordinates, got {pos!r}")
        if self.softening < 0:
            raise ConfigError("softening length must be >= 0")


@dataclass(frozen=True)
class UField:
    """``U = [[V - mu Bz, -mu Bx + i mu By], [-mu Bx - i mu By, V + mu Bz]]``.

    ``V`` and ``B`` are kept alongside the four matrix channels so the
    Zeeman split of ``tr[U R]`` can be computed independently.
    """

    uu: np.ndarray
    dd: np.ndarray
    ud_re: np.ndarray
    ud_im: np.ndarray
    V: np.ndarray
    B: np.ndarray
    mu: float = MU_B

    def trace(self) -> np.ndarray:
        return self.uu + self.dd

    def matrix(self) -> np.ndarray:
        """Complex matrix field, shape ``(2, 2, n, n, n)``."""
        ud = self.ud_re + 1j * self.ud_im
        return np.array([[self.uu + 0j, ud], [ud.conj(), self.dd + 0j]])


def assemble_U(ext: ExternalFields, V: np.ndarray, grid: Grid, B=None) -> UField:
    """Combine the scalar potential and the sampled field into ``U``."""
    V = np.asarray(V, dtype=float)
    if V.shape != grid.shape:
        raise ConfigError(f"potential shape {V.shape} does not match grid {grid.shape}")
    if B is None:
        B = ext.field.sample(grid)
    B = np.asarray(B, dtype=float)
    if B.shape != (3,) + grid.shape:
        raise ConfigError(f"field shape {B.shape} does not match grid")
    mu = ext.mu
    return UField(
        uu=V - mu * B[2],
        dd=V + mu * B[2],
        ud_re=-mu * B[0],
        ud_im=mu * B[1],
        V=V,
        B=B,
        mu=mu,
    )


def external_energy(U: UField, R: SpinDensity, grid: Grid) -> tuple:
    """Return ``(int tr[U R], int V rho, -mu int B.m)``."""
    dens = U.uu * R.ruu + U.dd * R.rdd + 2.0 * (U.ud_re * R.rud_re + U.ud_im * R.rud_im)
    total = integrate(dens, grid)
    v_part = integrate(U.V * R.rho, grid)
    mx, my, mz = magnetization(R)
    zeeman = -U.mu * integrate(U.B[0] * mx + U.B[1] * my + U.B[2] * mz, grid)
    return float(total), float(v_part), float(zeeman)


def random_occupied_set(grid: Grid, k: int, lam: float, rng, smooth: bool = True) -> OccupiedSet:
    """Orthonormal random spinors with random admissible occupations.

    With ``smooth`` the orbitals are random complex combinations multiplied
    by a Gaussian envelope centred in the box, so they vanish near the faces.
    """
    if not 0 < lam <= k:
        raise ContractError("need 0 < lam <= k")
    raw = rng.standard_normal((k, 2) + grid.shape) + 1j * rng.standard_normal((k, 2) + grid.shape)
    if smooth:
        r = grid.distance(grid.center)
        raw = raw * np.exp(-((r / (0.3 * grid.L)) ** 2))
    orbitals = orthonormalize(raw, grid)
    w = rng.uniform(0.2, 1.0, size=k)
    occ = lam * w / w.sum()
    # push excess above 1 onto the others until admissible
    for _ in range(k):
        over = occ > 1.0
        if not over.any():
            break
        extra = (occ[over] - 1.0).sum()
        occ[over] = 1.0
        free = ~over & (occ < 1.0)
        occ[free] += extra * (1.0 - occ[free]) / (1.0 - occ[free]).sum()
    occ *= lam / occ.sum()
    return OccupiedSet(orbitals, np.clip(occ, 0.0, 1.0), grid)


def write_density_dump(path, R: SpinDensity, grid: Grid) -> None:
    """Write the plain-text density dump.

    Header lines start with ``#``; then one row per node in row-major
    ``(i, j, k)`` order with the columns in ``DUMP_COLUMNS``.
    """
    rp, rm = eigenvalues_pm(R)
    mx, my, mz = magnetization(R)
    cols = np.stack([R.ruu, R.rdd, R.rud_re, R.rud_im, rp, rm, mx, my, mz]).reshape(9, -1).T
    header = "\n".join(
        [
            "kslsda spin density dump",
            f"n {grid.n} {grid.n} {grid.n}",
            f"h {grid.h!r}",
            "origin " + " ".join(repr(float(o)) for o in grid.origin),
            " ".join(DUMP_COLUMNS),
        ]
    )
    np.savetxt(path, cols, fmt="%.17g", header=header, comments="# ")


def read_density_dump(path) -> tuple:
    """Read a dump back; returns ``(SpinDensity, grid_dims, h, origin)``."""
    dims = h = origin = None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            parts = line[1:].split()
            if not parts:
                continue
            if parts[0] == "n":
                dims = tuple(int(p) for p in parts[1:4])
            elif parts[0] == "h":
                h = float(parts[1])
            elif parts[0] == "origin":
                origin = tuple(float(p) for p in parts[1:4])
    if dims is None or h is None or origin is None:
        raise ConfigError(f"{path}: missing dump header")
    data = np.loadtxt(path, comments="#", ndmin=2)
    chans = data[:, :4].T.reshape((4,) + dims)
    return SpinDensity.from_channels(chans), dims, h, origin
