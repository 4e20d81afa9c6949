"""Uniform 3D Dirichlet grid, quadrature and finite-difference stencils.

Fields are plain ``numpy`` arrays whose last three axes are the node axes
``(i, j, k)``.  A scalar field has shape ``(n, n, n)``; a spinor field has
shape ``(2, n, n, n)`` (up, down); a block of spinors has shape
``(m, 2, n, n, n)``.  Values outside the box are zero (Dirichlet).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft

from .exceptions import ConfigError, NumericError

__all__ = [
    "Grid",
    "build_grid",
    "integrate",
    "inner",
    "laplacian_apply",
    "gradient_norm_sq",
    "dirichlet_eigenvalues_1d",
    "KineticInverse",
]


@dataclass(frozen=True)
class Grid:
    """Cubic grid of ``n**3`` interior nodes in a box of edge ``L``.

    Node ``(i, j, k)`` sits at ``origin + h * (i + 1, j + 1, k + 1)`` with
    ``h = L / (n + 1)``; the box faces carry the (zero) boundary values.
    """

    n: int
    L: float
    origin: tuple = (0.0, 0.0, 0.0)

    @property
    def h(self) -> float:
        return self.L / (self.n + 1)

    @property
    def dv(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float) + 0.5 * self.L

    def axis(self, d: int) -> np.ndarray:
        """Node coordinates along axis ``d``."""
        return self.origin[d] + self.h * np.arange(1, self.n + 1)

    def coords(self) -> tuple:
        """Broadcastable coordinate arrays ``(x, y, z)``."""
        x = self.axis(0)[:, None, None]
        y = self.axis(1)[None, :, None]
        z = self.axis(2)[None, None, :]
        return x, y, z

    def distance(self, point) -> np.ndarray:
        x, y, z = self.coords()
        px, py, pz = point
        return np.sqrt((x - px) ** 2 + (y - py) ** 2 + (z - pz) ** 2)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        lo = np.asarray(self.origin, dtype=float)
        return bool(np.all(p > lo) and np.all(p < lo + self.L))


def build_grid(n: int, L: float, origin=None) -> Grid:
    """Build a grid; ``origin`` defaults to a box centred on 0."""
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise ConfigError(f"grid needs an integer n >= 2, got {n!r}")
    if not np.isfinite(L) or L <= 0:
        raise ConfigError(f"box length must be positive, got {L!r}")
    if origin is None:
        origin = (-0.5 * L,) * 3
    origin = tuple(float(o) for o in origin)
    if len(origin) != 3 or not all(np.isfinite(origin)):
        raise ConfigError(f"origin must be three finite numbers, got {origin!r}")
    return Grid(int(n), float(L), origin)


def integrate(f: np.ndarray, grid: Grid):
    """Midpoint quadrature ``h**3 * sum(f)`` over the node axes."""
    f = np.asarray(f)
    if not np.all(np.isfinite(f)):
        raise NumericError("cannot integrate a field with non-finite values")
    return grid.dv * f.sum(axis=(-3, -2, -1))


def inner(a: np.ndarray, b: np.ndarray, grid: Grid):
    """Discrete inner product ``<a, b> = h**3 * sum(conj(a) * b)``.

    Spinor components (any axes in front of the node axes) are summed too,
    so this is the L2(R^3, C^2) product for spinors.
    """
    return grid.dv * np.vdot(a, b)


def laplacian_apply(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Seven-point Laplacian with zero Dirichlet data, over the last 3 axes."""
    f = np.asarray(f)
    out = -6.0 * f
    out[..., 1:, :, :] += f[..., :-1, :, :]
    out[..., :-1, :, :] += f[..., 1:, :, :]
    out[..., :, 1:, :] += f[..., :, :-1, :]
    out[..., :, :-1, :] += f[..., :, 1:, :]
    out[..., :, :, 1:] += f[..., :, :, :-1]
    out[..., :, :, :-1] += f[..., :, :, 1:]
    out /= grid.h**2
    return out


def gradient_norm_sq(f: np.ndarray, grid: Grid) -> np.ndarray:
    """``|grad f|**2`` by central differences, one-sided at the box faces."""
    f = np.asarray(f, dtype=float)
    gx, gy, gz = np.gradient(f, grid.h, edge_order=1)
    return gx**2 + gy**2 + gz**2


def dirichlet_eigenvalues_1d(n: int, h: float) -> np.ndarray:
    """Eigenvalues ``(2 - 2 cos(j pi / (n+1))) / h**2`` of the 1D ``-Delta_h``."""
    j = np.arange(1, n + 1)
    return (2.0 - 2.0 * np.cos(j * np.pi / (n + 1))) / h**2


class KineticInverse:
    """Exact inverse of ``(-Delta_h / 2 + shift)`` by a type-I sine transform.

    Used as a preconditioner; the sine basis diagonalises the Dirichlet
    stencil exactly.
    """

    def __init__(self, grid: Grid):
        ev = dirichlet_eigenvalues_1d(grid.n, grid.h)
        self.kinetic = 0.5 * (ev[:, None, None] + ev[None, :, None] + ev[None, None, :])
        # DST-I is its own inverse up to this factor.
        self._norm = 1.0 / (2.0 * (grid.n + 1)) ** 3

    def __call__(self, f: np.ndarray, shift) -> np.ndarray:
        """Apply to ``f``; ``shift`` must broadcast against ``f``."""
        axes = (-3, -2, -1)
        if np.iscomplexobj(f):
            re = fft.dstn(f.real, type=1, axes=axes)
            im = fft.dstn(f.imag, type=1, axes=axes)
            coef = (re + 1j * im) / (self.kinetic + shift)
            out = fft.dstn(coef.real, type=1, axes=axes) + 1j * fft.dstn(coef.imag, type=1, axes=axes)
        else:
            coef = fft.dstn(f, type=1, axes=axes) / (self.kinetic + shift)
            out = fft.dstn(coef, type=1, axes=axes)
        return out * self._norm
