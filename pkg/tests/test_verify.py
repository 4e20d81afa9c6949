import numpy as np
import pytest

from kslsda.config import RunConfig
from kslsda.exceptions import ContractError
from kslsda.grid import build_grid, integrate
from kslsda.scf import build_problem, scf_solve
from kslsda.spin import (
    ExternalFields,
    MagneticField,
    OccupiedSet,
    SpinDensity,
    assemble_U,
    density_from_orbitals,
    random_occupied_set,
)
from kslsda.verify import (
    check_aufbau,
    check_energy_derivative,
    check_external_decomposition,
    check_flip_identity,
    check_flip_invariance,
    check_hermiticity,
    check_hoffman_ostenhof,
    check_pointwise_bounds,
    check_rho_pm,
    check_vxc_derivative,
    count_negative_eigenvalues,
    fit_decay,
    gaussian_profile,
    scaling_trial,
    sweep_lambda,
)
from kslsda.xc import SLATER_CX, xalpha

G = build_grid(8, 8.0, (-4.0,) * 3)
SEEDS = (0, 1, 2)


def _gauss(center=(0.0, 0.0, 0.0), a=0.8, poly=None):
    f = np.exp(-a * G.distance(center) ** 2) + 0j
    if poly is not None:
        f = f * poly
    return f / np.sqrt(integrate(np.abs(f) ** 2, G))


@pytest.mark.parametrize("seed", SEEDS)
def test_flip_identity_random(seed):
    rng = np.random.default_rng(seed)
    s = random_occupied_set(G, 3, 2.2, rng)
    U = assemble_U(ExternalFields(), rng.standard_normal(G.shape), G, rng.standard_normal((3,) + G.shape))
    assert check_flip_identity(s, U) <= 1e-12
    assert check_external_decomposition(U, density_from_orbitals(s), G) <= 1e-12


def test_flip_identity_no_field():
    s = random_occupied_set(G, 2, 1.0, np.random.default_rng(4))
    U = assemble_U(ExternalFields(), -np.ones(G.shape), G)
    assert check_flip_identity(s, U) <= 1e-15


def test_flip_identity_collinear():
    phi, psi = _gauss(), _gauss((0.5, 0.0, 0.0), 1.1)
    psi = psi - integrate(phi.conj() * psi, G) * phi
    s = OccupiedSet(np.array([[phi, 0 * phi], [0 * psi, psi]]), [1.0, 0.4], G)
    Bz = np.exp(-G.distance((0.3, 0.0, 0.0)) ** 2)
    U = assemble_U(ExternalFields(), np.zeros(G.shape), G, np.array([0 * Bz, 0 * Bz, Bz]))
    R = density_from_orbitals(s)
    # collinear form: -mu int Bz rho zeta with zeta = (ruu - rdd) / rho
    zee = -0.5 * integrate(Bz * (R.ruu - R.rdd), G)
    from kslsda.spin import external_energy

    assert external_energy(U, R, G)[2] == pytest.approx(zee, abs=1e-15)
    assert check_flip_identity(s, U) <= 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_exact_identities(seed):
    s = random_occupied_set(G, 3, 1.3, np.random.default_rng(seed))
    R = density_from_orbitals(s)
    assert check_rho_pm(R) <= 1e-12
    assert max(check_pointwise_bounds(R).values()) <= 1e-12
    assert max(check_flip_invariance(s).values()) <= 1e-12


def test_pointwise_bounds_examples():
    one = np.ones(G.shape)
    zero = np.zeros(G.shape)
    b = check_pointwise_bounds(SpinDensity(one, zero, zero, zero))
    assert max(b.values()) == 0.0
    phi = _gauss()
    R = density_from_orbitals(OccupiedSet(np.array([[phi, phi]]) / np.sqrt(2), [1.0], G))
    np.testing.assert_allclose(np.abs(R.rud), R.rho / 2, atol=1e-15)
    assert max(check_pointwise_bounds(R).values()) <= 0.0


def test_hermiticity():
    from kslsda.operator import MeanFieldOperator

    rng = np.random.default_rng(0)
    U = assemble_U(ExternalFields(), rng.standard_normal(G.shape), G, rng.standard_normal((3,) + G.shape))
    assert check_hermiticity(MeanFieldOperator(G, U), rng) <= 1e-12


def test_hoffman_ostenhof_single_orbital_equality():
    phi = _gauss()
    res = check_hoffman_ostenhof(OccupiedSet(np.array([[phi, 0 * phi]]), [1.0], G))
    lhs, rhs, ok = res["up"]
    assert ok and lhs == pytest.approx(rhs, rel=1e-12)
    assert res["down"] == (0.0, 0.0, True)


def test_hoffman_ostenhof_two_orbitals_strict():
    x, _, _ = G.coords()
    phi, psi = _gauss(), _gauss(poly=np.broadcast_to(x, G.shape))
    res = check_hoffman_ostenhof(OccupiedSet(np.array([[phi, 0 * phi], [psi, 0 * psi]]), [1.0, 1.0], G))
    lhs, rhs, ok = res["up"]
    assert ok and lhs < 0.99 * rhs


@pytest.mark.parametrize("seed", SEEDS)
def test_hoffman_ostenhof_random(seed):
    res = check_hoffman_ostenhof(random_occupied_set(G, 3, 2.0, np.random.default_rng(seed)))
    assert all(ok for _, _, ok in res.values())


@pytest.mark.parametrize("seed", SEEDS)
def test_vxc_derivative_check(seed):
    rng = np.random.default_rng(seed)
    R = density_from_orbitals(random_occupied_set(G, 3, 2.0, rng))
    R = R + R.unpolarized().scaled(0.3)
    a, b = rng.standard_normal((2,) + G.shape) * R.rho
    c = (rng.standard_normal(G.shape) + 1j * rng.standard_normal(G.shape)) * R.rho
    dR = SpinDensity(a, b, c.real, c.imag).scaled(1e-2)
    assert check_vxc_derivative(R, xalpha(), dR, G, t=1e-4) < 1e-6


def test_gaussian_profile_integrals():
    ints = gaussian_profile().integrals()
    assert ints["K"] == pytest.approx(1.5, rel=1e-8)
    assert ints["J"] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-8)
    assert ints["X"] == pytest.approx(np.pi**-2 * (0.75 * np.pi) ** 1.5, rel=1e-8)


def test_scaling_trial_small_lambda_negative():
    tr = scaling_trial(0.1, np.geomspace(0.01, 1.0, 20), grid_eval=False)
    assert tr.certifies_negative
    assert tr.best < 0 and tr.energy_opt < 0
    assert tr.energy_opt <= tr.best + 1e-15


def test_scaling_trial_small_sigma_limit():
    sig = np.array([1e-2, 1e-3, 1e-4])
    tr = scaling_trial(0.1, sig, grid_eval=False)
    assert np.all(tr.analytic < 0)
    assert np.all(np.diff(np.abs(tr.analytic)) < 0)


def test_scaling_trial_no_exchange_positive():
    tr = scaling_trial(0.5, np.geomspace(0.01, 10.0, 15), c_x=0.0, grid_eval=False)
    assert np.all(tr.analytic > 0)
    assert not tr.certifies_negative


def test_scaling_trial_grid_agreement_refines():
    sig = np.array([0.3, 0.8])
    coarse = scaling_trial(0.5, sig, n=20)
    fine = scaling_trial(0.5, sig, n=32)
    assert np.all(fine.rel_gap < 0.01)
    assert np.all(fine.rel_gap < coarse.rel_gap)


def test_scaling_trial_rejects_large_lambda():
    with pytest.raises(ContractError):
        scaling_trial(1.5, [0.5])


def _cfg(**kw):
    base = dict(n=11, L=10.0, lam=1.0, nuclei=((1, (0.1, 0.05, 0.0)),))
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def state():
    cfg = _cfg(field=MagneticField("gaussian", amplitude=0.2, width=2.0, axis=(0.0, 1.0, 1.0)), scf_tol_rho=1e-8,
               scf_tol_e=1e-10, eig_tol=1e-10)
    return cfg, scf_solve(cfg)


@pytest.mark.parametrize("seed", SEEDS)
def test_energy_derivative(state, seed):
    cfg, s = state
    err = check_energy_derivative(s, build_problem(cfg), np.random.default_rng(seed))
    assert err < 1e-5


def test_aufbau_and_negative_count(state):
    _, s = state
    assert check_aufbau(s).passed
    assert count_negative_eigenvalues(s) >= 1


def test_decay_refuses_small_box():
    s = scf_solve(RunConfig(n=7, L=5.0, lam=1.0, nuclei=((1, (0.1, 0.0, 0.0)),), mode="noninteracting"))
    with pytest.raises(ContractError):
        fit_decay(s)


def test_decay_hydrogen():
    # nucleus at a cell centre: with a = 0.1 an on-node nucleus gives a spurious one-node well
    h = 16.0 / 48
    s = scf_solve(RunConfig(n=47, L=16.0, lam=1.0, nuclei=((1, (h / 2, h / 2, h / 2)),), mode="noninteracting",
                            softening_a=0.1))
    fit = fit_decay(s)
    assert fit.r_value < -0.99
    assert 1 / 1.5 <= abs(fit.slope) / 2.0 <= 1.5


def test_sweep_report_structure():
    rep = sweep_lambda([0.5, 1.0], _cfg(n=9, L=9.0))
    assert [p.lam for p in rep.points] == [0.25, 0.5, 1.0]
    rows = rep.csv_rows()
    assert len(rows) == 3 and all(r[4] == 1 for r in rows)
    names = [c.name for c in rep.checks]
    assert "binding lambda=1.0" in names and "subadditive lambda=1.0" in names
    assert all(c.kind == "soft" for c in rep.checks)
    p = rep.point(1.0)
    assert p.I < p.I_inf
