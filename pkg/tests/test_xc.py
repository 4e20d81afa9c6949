import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kslsda.grid import build_grid, integrate
from kslsda.spin import SpinDensity, density_from_orbitals, eigenvalues_pm, flip, random_occupied_set
from kslsda.xc import (
    SLATER_CX,
    XcFunctional,
    exc_lsda,
    exc_of_density,
    g_xalpha,
    make_xc,
    no_xc,
    validate_cond_g,
    vxc_matrix,
    xalpha,
)

G = build_grid(6, 6.0, (-3.0,) * 3)
XA = xalpha()


def test_slater_constant():
    assert SLATER_CX == pytest.approx(0.75 * (3 / np.pi) ** (1 / 3), rel=1e-15)
    assert SLATER_CX == pytest.approx(0.7386, abs=1e-4)


@pytest.mark.parametrize(
    "rho, c_x, g, gp",
    [(0.0, SLATER_CX, 0.0, 0.0), (1.0, 0.7386, -0.7386, -4 / 3 * 0.7386), (8.0, 1.0, -16.0, -8 / 3)],
)
def test_g_xalpha(rho, c_x, g, gp):
    got_g, got_gp = g_xalpha(np.array([rho]), c_x)
    assert got_g[0] == pytest.approx(g, abs=1e-13)
    assert got_gp[0] == pytest.approx(gp, abs=1e-13)


def test_g_xalpha_clamps_negative():
    g, gp = g_xalpha(np.array([-1e-15, -0.5]))
    assert np.all(g == 0.0) and np.all(gp == 0.0)


def _rho(grid):
    return np.exp(-grid.distance((0.2, 0.0, -0.1)) ** 2)


def test_exc_unpolarised_is_lda():
    rho = _rho(G)
    assert exc_lsda(rho / 2, rho / 2, XA, G) == pytest.approx(integrate(XA.g(rho), G), rel=1e-14)


def test_exc_fully_polarised():
    rho = _rho(G)
    want = -(2 ** (1 / 3)) * SLATER_CX * integrate(rho ** (4 / 3), G)
    assert exc_lsda(rho, 0 * rho, XA, G) == pytest.approx(want, rel=1e-13)


def test_exc_zero_functional():
    rho = _rho(G)
    assert exc_lsda(rho, rho / 3, no_xc(), G) == 0.0


def test_exc_swap_symmetry():
    rho = _rho(G)
    a, b = 0.7 * rho, 0.2 * rho
    assert exc_lsda(a, b, XA, G) == exc_lsda(b, a, XA, G)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exc_flip_invariant(seed):
    s = random_occupied_set(G, 3, 1.5, np.random.default_rng(seed))
    e = exc_of_density(density_from_orbitals(s), XA, G)
    ef = exc_of_density(density_from_orbitals(flip(s)), XA, G)
    assert abs(e - ef) <= 1e-12 * abs(e)


def _const(*vals):
    return SpinDensity.from_channels([np.full(G.shape, v) for v in vals])


def test_vxc_collinear():
    up, dn = 0.6, 0.2
    V = vxc_matrix(_const(up, dn, 0.0, 0.0), XA)
    assert V[0, 0].flat[0] == pytest.approx(XA.g_prime(np.array(2 * up))[()], rel=1e-14)
    assert V[1, 1].flat[0] == pytest.approx(XA.g_prime(np.array(2 * dn))[()], rel=1e-14)
    assert np.abs(V[0, 1]).max() == 0.0


def test_vxc_unpolarised():
    V = vxc_matrix(_const(0.3, 0.3, 0.0, 0.0), XA)
    gp = XA.g_prime(np.array(0.6))[()]
    np.testing.assert_allclose(V[0, 0], gp, rtol=1e-14)
    np.testing.assert_allclose(V[1, 1], gp, rtol=1e-14)
    assert np.abs(V[0, 1]).max() == 0.0


def test_vxc_eigenvalues():
    R = density_from_orbitals(random_occupied_set(G, 3, 2.0, np.random.default_rng(5)))
    V = vxc_matrix(R, XA)
    M = np.moveaxis(V.reshape(2, 2, -1), -1, 0)
    np.testing.assert_allclose(M, M.conj().transpose(0, 2, 1), atol=0)
    w = np.linalg.eigvalsh(M)
    rp, rm = eigenvalues_pm(R)
    np.testing.assert_allclose(w[:, 0], XA.g_prime(2 * rp.ravel()), rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(w[:, 1], XA.g_prime(2 * rm.ravel()), rtol=1e-10, atol=1e-13)
    assert np.all(w <= 0.0)


def _herm_pert(rng):
    a, b = rng.standard_normal((2,) + G.shape)
    c = rng.standard_normal(G.shape) + 1j * rng.standard_normal(G.shape)
    return SpinDensity(a, b, c.real, c.imag)


def _fd(R, dR, t):
    e = lambda s: exc_of_density(R + dR.scaled(s), XA, G)
    return (e(t) - e(-t)) / (2 * t)


@given(seed=st.integers(0, 2**32 - 1))
def test_vxc_directional_derivative(seed):
    rng = np.random.default_rng(seed)
    s = random_occupied_set(G, 3, 2.0, rng)
    R = density_from_orbitals(s)
    # keep R well inside the PSD cone so both signs of t stay admissible
    R = R + R.unpolarized().scaled(0.5) + SpinDensity.from_channels(
        [np.full(G.shape, 1e-2), np.full(G.shape, 1e-2), np.zeros(G.shape), np.zeros(G.shape)]
    )
    dR = _herm_pert(rng).scaled(1e-3)
    V = vxc_matrix(R, XA)
    exact = integrate(
        (V[0, 0] * dR.ruu + V[1, 1] * dR.rdd + 2 * (V[0, 1] * dR.rud.conj()).real).real, G
    )
    d3, d4 = _fd(R, dR, 1e-3), _fd(R, dR, 1e-4)
    rich = (100 * d4 - d3) / 99
    assert abs(rich - exact) < 1e-6


def test_cond_g_validator():
    rep = validate_cond_g(XA)
    assert rep.ok
    assert rep.beta_minus == pytest.approx(1 / 3, abs=1e-3)
    assert rep.beta_plus == pytest.approx(1 / 3, abs=1e-3)
    assert rep.alpha == pytest.approx(4 / 3, abs=1e-3)


@pytest.mark.parametrize(
    "g, gp",
    [
        (lambda r: r**2, lambda r: 2 * r),
        (lambda r: -(r ** (5 / 3)), lambda r: -(5 / 3) * r ** (2 / 3)),
        (lambda r: -r ** 1.2 - r ** 2.5, lambda r: -1.2 * r ** 0.2 - 2.5 * r ** 1.5),
        (lambda r: 0 * r, lambda r: 0 * r),
        (lambda r: 1 / r, lambda r: -1 / r**2),
    ],
)
def test_cond_g_rejects(g, gp):
    with np.errstate(divide="ignore", invalid="ignore"):
        assert not validate_cond_g(XcFunctional("custom", g, gp)).ok


def test_make_xc():
    assert make_xc("none").is_zero
    assert make_xc("xalpha", 1.0).c_x == 1.0
    with pytest.raises(ValueError):
        make_xc("pbe")
