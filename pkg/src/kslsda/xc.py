"""Local exchange functionals and their spin-polarised (LSDA) extension.

A spin-unpolarised local functional is ``E(rho) = int g(rho)``; the
polarised energy of a spin density matrix with pointwise eigenvalues
``rho_+ >= rho_-`` is ``(E(2 rho_+) + E(2 rho_-)) / 2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np

from .grid import Grid, integrate
from .spin import SpinDensity, eigenvalues_pm

__all__ = [
    "SLATER_CX",
    "XcFunctional",
    "xalpha",
    "no_xc",
    "make_xc",
    "g_xalpha",
    "exc_lsda",
    "exc_of_density",
    "vxc_matrix",
    "CondGReport",
    "validate_cond_g",
]

logger = logging.getLogger(__name__)

#: Slater-Dirac exchange constant (3/4) (3/pi)^(1/3).
SLATER_CX = 0.75 * (3.0 / np.pi) ** (1.0 / 3.0)

# densities below this are treated as rounding noise when clamped
_NEG_NOISE = 1e-12


def _clamp(rho):
    rho = np.asarray(rho, dtype=float)
    neg = rho < 0.0
    if np.any(neg):
        worst = float(rho[neg].min())
        if worst < -_NEG_NOISE:
            logger.warning("clamped %d negative density values (min %.3e)", int(neg.sum()), worst)
        rho = np.where(neg, 0.0, rho)
    return rho


def g_xalpha(rho, c_x: float = SLATER_CX):
    """``g = -c_x rho^(4/3)`` and ``g' = -(4/3) c_x rho^(1/3)``; negatives clamp to 0."""
    rho = _clamp(rho)
    cbrt = np.cbrt(rho)
    return -c_x * rho * cbrt, -(4.0 / 3.0) * c_x * cbrt


@dataclass(frozen=True)
class XcFunctional:
    """Local functional ``g`` with derivative ``g_prime``.

    ``g`` and ``g_prime`` act elementwise on non-negative arrays.
    """

    name: str
    g: Callable
    g_prime: Callable
    c_x: Optional[float] = None

    @property
    def is_zero(self) -> bool:
        return self.name == "none"


def _xa_g(rho, c_x):
    return g_xalpha(rho, c_x)[0]


def _xa_gp(rho, c_x):
    return g_xalpha(rho, c_x)[1]


def xalpha(c_x: float = SLATER_CX) -> XcFunctional:
    return XcFunctional(
        name="xalpha",
        g=partial(_xa_g, c_x=c_x),
        g_prime=partial(_xa_gp, c_x=c_x),
        c_x=c_x,
    )


def no_xc() -> XcFunctional:
    return XcFunctional(name="none", g=np.zeros_like, g_prime=np.zeros_like)


def make_xc(name: str, c_x: float = SLATER_CX) -> XcFunctional:
    if name == "xalpha":
        return xalpha(c_x)
    if name == "none":
        return no_xc()
    raise ValueError(f"unknown xc functional {name!r}")


def exc_lsda(rho_plus, rho_minus, f: XcFunctional, grid: Grid) -> float:
    """``(int g(2 rho_+) + int g(2 rho_-)) / 2``."""
    rp = _clamp(rho_plus)
    rm = _clamp(rho_minus)
    return float(0.5 * integrate(f.g(2.0 * rp) + f.g(2.0 * rm), grid))


def exc_of_density(R: SpinDensity, f: XcFunctional, grid: Grid) -> float:
    return exc_lsda(*eigenvalues_pm(R), f, grid)


def vxc_matrix(R: SpinDensity, f: XcFunctional, s_tol: Optional[float] = None) -> np.ndarray:
    """Derivative of the LSDA energy with respect to ``R``.

    Returns the Hermitian field ``V`` of shape ``(2, 2, n, n, n)`` with
    ``d E = int tr[V dR]``.  Where the polarisation ``s`` is below ``s_tol``
    (default ``1e-10 (1 + rho)``) the direction is undefined and the
    degenerate limit ``g'(rho) I`` is used.
    """
    rp, rm = eigenvalues_pm(R)
    gp = f.g_prime(2.0 * _clamp(rp))
    gm = f.g_prime(2.0 * _clamp(rm))
    d = R.ruu - R.rdd
    s = np.sqrt(d * d + 4.0 * (R.rud_re**2 + R.rud_im**2))
    rho = R.rho
    if s_tol is None:
        s_tol = 1e-10 * (1.0 + np.abs(rho))
    deg = s < s_tol
    safe = np.where(deg, 1.0, s)
    # direction matrix P = [[d, 2 rud], [2 conj(rud), -d]] / s
    p_d = np.where(deg, 0.0, d / safe)
    p_od = np.where(deg, 0.0, 2.0 * (R.rud_re + 1j * R.rud_im) / safe)
    avg = 0.5 * (gp + gm)
    half_diff = 0.5 * (gp - gm)
    g_deg = f.g_prime(_clamp(rho))
    avg = np.where(deg, g_deg, avg)
    half_diff = np.where(deg, 0.0, half_diff)
    V = np.empty((2, 2) + rho.shape, dtype=complex)
    V[0, 0] = avg + half_diff * p_d
    V[1, 1] = avg - half_diff * p_d
    V[0, 1] = half_diff * p_od
    V[1, 0] = np.conj(V[0, 1])
    return V


@dataclass
class CondGReport:
    """Outcome of :func:`validate_cond_g`."""

    ok: bool
    reasons: list
    beta_minus: float = float("nan")
    beta_plus: float = float("nan")
    alpha: float = float("nan")

    def __bool__(self):
        return self.ok


def _log_slope(x, y):
    lx, ly = np.log(x), np.log(y)
    return float(np.polyfit(lx, ly, 1)[0])


def validate_cond_g(f: XcFunctional, rho_min: float = 1e-10, rho_max: float = 1e10, samples: int = 201) -> CondGReport:
    """Check the growth hypotheses on ``g`` over a log-spaced sample.

    Required: ``g(0) = 0``; ``g' <= 0``; ``|g'| <= C (rho^b- + rho^b+)`` for
    some ``0 < b- <= b+ < 2/3`` (exponents estimated from the log-log slope
    of ``|g'|`` at both ends of the sample); ``g(rho) / rho^a`` negative
    near 0 for some ``1 <= a < 3/2``.  Never raises: a functional that
    fails to evaluate is reported as invalid.
    """
    reasons = []
    rho = np.logspace(np.log10(rho_min), np.log10(rho_max), samples)
    try:
        g0 = float(np.asarray(f.g(np.zeros(1)))[0])
        g = np.asarray(f.g(rho), dtype=float)
        gp = np.asarray(f.g_prime(rho), dtype=float)
    except Exception as exc:  # a user-supplied g may fail in any way
        return CondGReport(False, [f"evaluation failed: {exc!r}"])
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(gp)) and np.isfinite(g0)):
        return CondGReport(False, ["non-finite values"])
    if abs(g0) > 0.0:
        reasons.append(f"g(0) = {g0} != 0")
    if np.any(gp > 0.0):
        reasons.append("g' > 0 somewhere")
    if np.all(gp == 0.0) and np.all(g == 0.0):
        return CondGReport(False, reasons + ["identically zero: g is not negative near 0"])
    k = max(samples // 10, 3)
    agp = np.abs(gp)
    beta_minus = beta_plus = alpha = float("nan")
    if np.any(agp[:k] == 0.0) or np.any(agp[-k:] == 0.0):
        reasons.append("|g'| vanishes at the end of the sample; exponents undefined")
    else:
        beta_minus = _log_slope(rho[:k], agp[:k])
        beta_plus = _log_slope(rho[-k:], agp[-k:])
        if not beta_minus > 0.0:
            reasons.append(f"small-density exponent of |g'| is {beta_minus:.3g}, need > 0")
        if not beta_plus < 2.0 / 3.0 - 1e-6:
            reasons.append(f"large-density exponent of |g'| is {beta_plus:.3g}, need < 2/3")
        if beta_minus > beta_plus + 1e-6:
            # a bound with b- > b+ is still satisfied with b- := b+
            beta_minus = beta_plus
    if np.any(g[:k] >= 0.0):
        reasons.append("g is not negative near 0")
    else:
        alpha = _log_slope(rho[:k], -g[:k])
        if not (1.0 - 1e-6 <= alpha < 1.5 - 1e-6):
            reasons.append(f"small-density exponent of g is {alpha:.3g}, need 1 <= alpha < 3/2")
    return CondGReport(not reasons, reasons, beta_minus, beta_plus, alpha)
