import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homog.bundle import prepare
from homog.cell import LayeredCell, isotropic_constants, isotropic_root, solve_cell
from homog.fields import get_example, random_trig_field, symbol_gradient
from homog.germ import (
    generalized_spectrum,
    germ_matrix,
    germ_package,
    matrix_L,
    operator_N,
    threshold_fit,
)
from homog.lattice import cubic_lattice, sphere_directions


@pytest.fixture(scope="module")
def layered():
    return prepare(get_example("layered-elasticity"), 16)


@pytest.fixture(scope="module")
def acoustics():
    return prepare(get_example("acoustics-complex", c=0.2), 16)


def layered_mu():
    case = get_example("layered-elasticity")
    lc = LayeredCell(lambda x: case.g.sampler(np.stack([x, np.zeros_like(x)], -1)), case.symbol)
    return 0.5 * abs(lc.mean(lc.Lambda[:, 1, 1] * (1 + 0.5 * np.cos(lc.x))))


def test_germ_matrix_scalar():
    S = germ_matrix(np.array([[2.5]]), symbol_gradient(1), [1.0])
    assert S[0, 0] == pytest.approx(2.5)


def test_germ_matrix_layered_elasticity():
    case = get_example("layered-elasticity")
    th = np.array([0.6, 0.8])
    S = germ_matrix(np.diag([1.0, 4.0, 1.0]), case.symbol, th)
    assert np.allclose(S, [[1.0, 0.48], [0.48, 1.0]])


def test_germ_matrix_isotropic():
    # rows of the strain symbol 11, 12, 22 and g0 = [[A, 0, B], [0, C, 0], [B, 0, E]]
    a = isotropic_root()
    k = isotropic_constants(a)
    g0 = np.array([[k["A"], 0, k["B"]], [0, k["C"], 0], [k["B"], 0, k["E"]]])
    case = get_example("isotropic-elasticity")
    t1, t2 = 0.6, 0.8
    S = germ_matrix(g0, case.symbol, [t1, t2])
    expect = np.array(
        [
            [k["A"] * t1**2 + k["C"] / 4 * t2**2, (k["B"] + k["C"] / 4) * t1 * t2],
            [(k["B"] + k["C"] / 4) * t1 * t2, k["E"] * t2**2 + k["C"] / 4 * t1**2],
        ]
    )
    assert np.allclose(S, expect)


def test_generalized_spectrum_identity_weight():
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    g1, z1 = generalized_spectrum(S)
    g2, z2 = generalized_spectrum(S, np.eye(2))
    assert np.allclose(g1, [1, 3]) and np.allclose(g1, g2)


def test_generalized_spectrum_layered_diagonal(layered):
    th = np.array([1, 1]) / np.sqrt(2)
    gammas, _ = generalized_spectrum(germ_matrix(layered.g0, layered.symbol, th))
    assert np.allclose(gammas, [0.5, 1.5], atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_generalized_spectrum_residual(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Y = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    S = X @ X.conj().T
    Q = Y @ Y.conj().T + np.eye(n)
    gam, Z = generalized_spectrum(S, Q)
    assert np.abs(S @ Z - Q @ Z * gam).max() <= 1e-8 * max(1.0, np.abs(S).max())
    assert np.allclose(Z.conj().T @ Q @ Z, np.eye(n), atol=1e-10)
    assert np.all(np.diff(gam) >= 0)


def test_L_vanishes_for_constant_g():
    bd = prepare(get_example("constant"), 4)
    assert np.abs(matrix_L(bd.cell, bd.symbol, [0.6, 0.8])).max() < 1e-14


def test_L_pattern_layered(layered):
    L = matrix_L(layered.cell, layered.symbol, [0.6, 0.8])
    mask = np.ones((3, 3), dtype=bool)
    mask[1, 2] = mask[2, 1] = False
    assert np.abs(L[mask]).max() < 1e-8
    assert abs(L[1, 2]) > 1e-3
    # real b, g: purely imaginary entries
    assert np.abs(L.real).max() < 1e-10


def test_N_layered_directions(layered):
    mu = layered_mu()
    p = germ_package(layered.cell, layered.symbol, [0.0, 1.0])
    assert np.allclose(np.sort(p.mus), [-mu, mu], atol=1e-8)
    assert np.linalg.norm(p.Nstar, 2) < 1e-8
    assert np.allclose(np.sort(np.linalg.eigvalsh(p.N_Q)), [-mu, mu], atol=1e-8)
    for th in ([1.0, 0.0], [-1.0, 0.0]):
        assert np.linalg.norm(germ_package(layered.cell, layered.symbol, th).N_Q, 2) < 1e-8


def test_real_symmetric_scalar_has_no_N():
    bd = prepare(get_example("layered-1d"), 16)
    p = germ_package(bd.cell, bd.symbol, [1.0])
    assert abs(p.N_hat[0, 0]) < 1e-12


def test_acoustics_complex_N(acoustics):
    coef = get_example("acoustics-complex", c=0.2).reference["N_coefficient"].value
    for th in sphere_directions(2, 12):
        N = germ_package(acoustics.cell, acoustics.symbol, th).N_hat[0, 0].real
        assert N == pytest.approx(coef * th[1] ** 3, abs=1e-8)


@pytest.mark.parametrize("name", ["acoustics-complex", "layered-elasticity", "acoustics-weighted"])
def test_package_invariants(name):
    bd = prepare(get_example(name), 12)
    for th in sphere_directions(2, 9):
        p = germ_package(bd.cell, bd.symbol, th, bd.weights, bd.c_star)
        Z = p.zetas
        assert np.allclose(p.S, p.S.conj().T, atol=1e-12)
        assert np.all(p.gammas >= bd.c_star - 1e-8)
        assert np.allclose(Z.conj().T @ p.Q_bar @ Z, np.eye(bd.n), atol=1e-10)
        assert np.allclose(p.N_Q, p.N_Q.conj().T, atol=1e-10)
        assert np.allclose(p.N0 + p.Nstar, p.N_Q, atol=1e-12)
        diag = np.diag(Z.conj().T @ p.Nstar @ Z)
        assert np.abs(diag).max() < 1e-10
        # N0 does not couple different clusters
        B = Z.conj().T @ p.N0 @ Z
        for i, a in enumerate(p.clusters):
            for c in p.clusters[i + 1 :]:
                assert np.abs(B[np.ix_(a, c)]).max() < 1e-10
        assert np.allclose(p.mus, np.real(np.diag(Z.conj().T @ p.N_Q @ Z)), atol=1e-10)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 2 * np.pi))
def test_N_is_odd(seed, phi):
    g = random_trig_field(cubic_lattice(2), 2, 1, np.random.default_rng(seed))
    cell = solve_cell(g, symbol_gradient(2), 5)
    th = np.array([np.cos(phi), np.sin(phi)])
    plus = germ_package(cell, symbol_gradient(2), th).N_hat
    minus = germ_package(cell, symbol_gradient(2), -th).N_hat
    assert np.allclose(minus, -plus, atol=1e-10)


def test_no_interacting_pairs_gives_infinite_c_circ():
    split = operator_N(np.zeros((2, 2)), symbol_gradient(2), [1.0, 0.0], np.array([1.0]), np.eye(1))
    assert split.c_circ == np.inf


def test_cluster_ambiguity_flagged():
    # relative gap 3e-6 sits within a factor 10 of the 1e-6 threshold
    b = get_example("layered-elasticity").symbol
    gam = np.array([1.0, 1.0 + 3e-6])
    split = operator_N(np.zeros((3, 3)), b, [1.0, 0.0], gam, np.eye(2), gap_tol=1e-6)
    assert split.ambiguous
    assert len(split.clusters) == 2 and len(split.alternative.clusters) == 1


def test_fit_constant_coefficients():
    bd = prepare(get_example("constant"), 4)
    fit = threshold_fit(bd, np.array([0.6, 0.8]))
    assert np.abs(fit.mu_fit).max() < 1e-8
    assert fit.gamma_error < 1e-10


def test_fit_layered_axis():
    bd = prepare(get_example("layered-elasticity"), 16)
    fit = threshold_fit(bd, np.array([0.0, 1.0]))
    mu = layered_mu()
    assert np.allclose(np.sort(fit.mu_fit), [-mu, mu], atol=1e-3)


def test_fit_window_validation(acoustics):
    with pytest.raises(ValueError):
        threshold_fit(acoustics, [1.0, 0.0], t_samples=[0.01, 0.02, 0.03])
    with pytest.raises(ValueError):
        threshold_fit(acoustics, [1.0, 0.0], t_samples=np.linspace(0.1, 0.4, 8))
