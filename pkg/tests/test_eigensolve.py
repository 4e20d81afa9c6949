import numpy as np
import pytest

from kslsda.eigensolve import DENSE_LIMIT, dense_oracle, lowest_eigenpairs
from kslsda.exceptions import ConfigError
from kslsda.grid import build_grid, dirichlet_eigenvalues_1d
from kslsda.operator import MeanFieldOperator, nuclear_potential
from kslsda.spin import ExternalFields, MagneticField, assemble_U, overlap_matrix

G6 = build_grid(6, 6.0, (-3.0,) * 3)


def _hydrogen(grid, field=MagneticField(), structure="coupled"):
    ext = ExternalFields(((1, (0.1, -0.05, 0.0)),), field, softening=grid.h / 2)
    return MeanFieldOperator(grid, assemble_U(ext, nuclear_potential(ext, grid), grid), structure=structure)


def test_pure_kinetic_lowest():
    op = MeanFieldOperator(G6)
    sol = lowest_eigenpairs(op, 4, tol=1e-10)
    e1 = 0.5 * 3 * dirichlet_eigenvalues_1d(G6.n, G6.h)[0]
    np.testing.assert_allclose(sol.eigenvalues[:2], e1, atol=1e-9)
    assert sol.eigenvalues[2] > e1 + 0.1


@pytest.mark.parametrize("n", [6, 7, 8])
def test_oracle_agreement(n):
    g = build_grid(n, 7.0, (-3.5,) * 3)
    op = _hydrogen(g)
    k = 10
    sol = lowest_eigenpairs(op, k, tol=1e-10)
    ref = dense_oracle(op)
    np.testing.assert_allclose(sol.eigenvalues, ref.eigenvalues[:k], atol=1e-8)


def test_oracle_agreement_with_field():
    field = MagneticField("gaussian", amplitude=0.8, width=1.5, axis=(1.0, 0.5, -0.3))
    op = _hydrogen(G6, field)
    sol = lowest_eigenpairs(op, 8, tol=1e-10, preconditioner="diagonal")
    np.testing.assert_allclose(sol.eigenvalues, dense_oracle(op).eigenvalues[:8], atol=1e-8)


def test_solution_invariants():
    op = _hydrogen(G6, MagneticField("uniform", b0=0.2, axis=(0.0, 1.0, 1.0)))
    tol = 1e-9
    sol = lowest_eigenpairs(op, 6, tol=tol)
    assert np.all(np.diff(sol.eigenvalues) >= 0)
    S = overlap_matrix(sol.eigenvectors, G6)
    assert np.abs(S - np.eye(6)).max() < 1e-8
    for e, v in zip(sol.eigenvalues, sol.eigenvectors):
        r = op.apply(v) - e * v
        assert np.sqrt(G6.dv) * np.linalg.norm(r) <= tol * (1 + abs(e)) * 1.0001


def test_spin_doubling():
    sol = lowest_eigenpairs(_hydrogen(G6), 8, tol=1e-10)
    np.testing.assert_allclose(sol.eigenvalues[0::2], sol.eigenvalues[1::2], atol=1e-8)


def test_uniform_zeeman_split():
    B0 = 0.05
    e0 = lowest_eigenpairs(_hydrogen(G6), 2, tol=1e-11).eigenvalues
    eb = lowest_eigenpairs(_hydrogen(G6, MagneticField("uniform", b0=B0, axis=(0.3, 0.4, 1.0))), 2, tol=1e-11).eigenvalues
    assert eb[1] - eb[0] == pytest.approx(B0, abs=1e-8)
    assert eb[0] == pytest.approx(e0[0] - 0.5 * B0, abs=1e-8)


@pytest.mark.parametrize("structure", ["collinear", "unpolarized"])
def test_block_structures_match_coupled(structure):
    field = MagneticField("uniform", b0=0.1) if structure == "collinear" else MagneticField()
    ref = lowest_eigenpairs(_hydrogen(G6, field), 6, tol=1e-10).eigenvalues
    got = lowest_eigenpairs(_hydrogen(G6, field, structure), 6, tol=1e-10).eigenvalues[:6]
    np.testing.assert_allclose(got, ref, atol=1e-8)


def test_deterministic():
    op = _hydrogen(G6)
    a = lowest_eigenpairs(op, 4, seed=3)
    b = lowest_eigenpairs(op, 4, seed=3)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)


def test_zero_operator_dense():
    g = build_grid(3, 4.0)

    class Zero(MeanFieldOperator):
        def apply(self, psi):
            return np.zeros_like(np.asarray(psi, dtype=complex))

    assert np.all(dense_oracle(Zero(g)).eigenvalues == 0.0)


def test_random_potential_dense_real_spectrum():
    g = build_grid(4, 5.0)
    rng = np.random.default_rng(0)
    B = rng.standard_normal((3,) + g.shape)
    op = MeanFieldOperator(g, assemble_U(ExternalFields(), rng.standard_normal(g.shape), g, B))
    ref = dense_oracle(op)
    assert ref.eigenvalues.dtype.kind == "f"
    assert ref.residual_norms.max() < 1e-10


def test_refusals():
    op = MeanFieldOperator(build_grid(13, 5.0))
    assert op.dim > DENSE_LIMIT
    with pytest.raises(ConfigError):
        dense_oracle(op)
    with pytest.raises(ConfigError):
        lowest_eigenpairs(MeanFieldOperator(build_grid(2, 3.0)), 5)
    with pytest.raises(ConfigError):
        lowest_eigenpairs(MeanFieldOperator(G6), 0)
