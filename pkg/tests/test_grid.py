import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kslsda.exceptions import ConfigError, NumericError
from kslsda.grid import (
    KineticInverse,
    build_grid,
    dirichlet_eigenvalues_1d,
    gradient_norm_sq,
    inner,
    integrate,
    laplacian_apply,
)


@pytest.mark.parametrize("n, L, h", [(15, 8.0, 0.5), (2, 3.0, 1.0), (47, 16.0, 1.0 / 3.0)])
def test_spacing(n, L, h):
    assert build_grid(n, L).h == pytest.approx(h, rel=1e-15)


@pytest.mark.parametrize("n, L", [(0, 1.0), (-3, 1.0), (1, 1.0), (4, 0.0), (4, -2.0)])
def test_bad_grid(n, L):
    with pytest.raises(ConfigError):
        build_grid(n, L)


def test_node_coordinates():
    g = build_grid(3, 4.0, (1.0, -2.0, 0.5))
    x, y, z = g.coords()
    assert x[0, 0, 0] == pytest.approx(2.0)
    assert y[0, 2, 0] == pytest.approx(-2.0 + 3.0)
    assert z[0, 0, 1] == pytest.approx(0.5 + 2.0)


def test_integrate_trivial():
    g = build_grid(2, 3.0)
    assert integrate(np.zeros(g.shape), g) == 0.0
    assert integrate(np.ones(g.shape), g) == pytest.approx(8.0, abs=1e-15)


def test_integrate_rejects_nan():
    g = build_grid(2, 3.0)
    f = np.ones(g.shape)
    f[0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        integrate(f, g)


def test_gaussian_normalisation():
    g = build_grid(63, 16.0, (-8.0,) * 3)
    r = g.distance((0.1, -0.05, 0.0))
    f = np.pi ** -1.5 * np.exp(-(r**2))
    assert abs(integrate(f, g) - 1.0) < 1e-6


def test_laplacian_on_discrete_eigenvector():
    n = 7
    g = build_grid(n, 5.0)
    j = (1, 2, 3)
    i = np.arange(1, n + 1)
    s = [np.sin(jj * np.pi * i / (n + 1)) for jj in j]
    f = np.einsum("i,j,k->ijk", *s)
    lam = sum((2 - 2 * np.cos(jj * np.pi / (n + 1))) / g.h**2 for jj in j)
    np.testing.assert_allclose(-laplacian_apply(f, g), lam * f, atol=1e-12 * lam)


def test_laplacian_exact_on_quadratic():
    g = build_grid(11, 6.0, (-3.0,) * 3)
    x, _, _ = g.coords()
    lap = laplacian_apply(np.broadcast_to(x**2, g.shape), g)
    # boundary nodes see the zero exterior; interior ones are exact
    np.testing.assert_allclose(lap[1:-1, 1:-1, 1:-1], 2.0, atol=1e-10)
    assert np.all(laplacian_apply(np.zeros(g.shape), g) == 0.0)


def test_gradient_norm_sq():
    g = build_grid(9, 5.0, (-2.5,) * 3)
    x, _, _ = g.coords()
    assert np.all(gradient_norm_sq(np.full(g.shape, 3.0), g) == 0.0)
    np.testing.assert_allclose(gradient_norm_sq(np.broadcast_to(x, g.shape), g), 1.0, atol=1e-12)


def test_gradient_norm_sq_gaussian_second_order():
    errs = []
    for n in (31, 63):
        g = build_grid(n, 12.0, (-6.0,) * 3)
        r = g.distance((0.0, 0.0, 0.0))
        f = np.exp(-(r**2))
        exact = 4 * r**2 * np.exp(-2 * r**2)
        errs.append(np.abs(gradient_norm_sq(f, g) - exact)[4:-4, 4:-4, 4:-4].max())
    assert errs[1] < errs[0] / 3.0


def test_dirichlet_eigenvalues_sum():
    n = 6
    g = build_grid(n, 4.0)
    ev1 = dirichlet_eigenvalues_1d(n, g.h)
    closed = (2 - 2 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1))) / g.h**2
    np.testing.assert_allclose(ev1, closed, rtol=1e-14)
    full = (ev1[:, None, None] + ev1[None, :, None] + ev1[None, None, :]).ravel()
    dense = np.empty((n**3, n**3))
    for c in range(n**3):
        e = np.zeros(n**3)
        e[c] = 1.0
        dense[:, c] = -laplacian_apply(e.reshape(g.shape), g).ravel()
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(dense)), np.sort(full), atol=1e-10 * full.max())


def test_kinetic_inverse():
    g = build_grid(8, 5.0)
    rng = np.random.default_rng(4)
    f = rng.standard_normal(g.shape)
    kinv = KineticInverse(g)
    u = kinv(f, 0.7)
    np.testing.assert_allclose(-0.5 * laplacian_apply(u, g) + 0.7 * u, f, atol=1e-11)


fields = st.integers(min_value=0, max_value=2**32 - 1)


@given(seed=fields, n=st.integers(2, 7))
def test_laplacian_symmetric(seed, n):
    g = build_grid(n, 3.0 + n)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2,) + g.shape)
    lhs = inner(a, -laplacian_apply(b, g), g)
    rhs = inner(-laplacian_apply(a, g), b, g)
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + abs(rhs) + 1e-300)


@given(seed=fields, n=st.integers(2, 7))
def test_laplacian_positive(seed, n):
    g = build_grid(n, 2.0 + n)
    a = np.random.default_rng(seed).standard_normal(g.shape)
    q = inner(a, -laplacian_apply(a, g), g)
    assert q.real >= -1e-14 * abs(q)


@given(seed=fields, c=st.floats(-5, 5))
def test_integrate_linear(seed, c):
    g = build_grid(4, 3.0)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2,) + g.shape)
    assert integrate(a + c * b, g) == pytest.approx(integrate(a, g) + c * integrate(b, g), abs=1e-11)
