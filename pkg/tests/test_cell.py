import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homog.bundle import prepare
from homog.cell import (
    LayeredCell,
    isotropic_constants,
    isotropic_quadrature,
    isotropic_root,
    layered_oracle_1d,
    solve_cell,
    voigt_reuss,
    weighted_constants,
)
from homog.fields import (
    constant_field,
    field_from_closure,
    get_example,
    isotropic_moduli,
    isotropic_tensor,
    random_trig_field,
    symbol_elasticity,
    symbol_gradient,
)
from homog.lattice import cubic_lattice


def psd_gap(lo, hi):
    """Smallest eigenvalue of hi - lo."""
    return np.linalg.eigvalsh(0.5 * (hi - lo + (hi - lo).conj().T))[0]


def test_constant_field_has_no_corrector():
    g = constant_field(np.array([[2.0, 0.5], [0.5, 1.0]]), cubic_lattice(2))
    cell = solve_cell(g, symbol_gradient(2), 4)
    assert np.abs(cell.Lambda).max() < 1e-14
    assert np.allclose(cell.g0, g.mean())


def test_scalar_1d_harmonic_mean():
    case = get_example("layered-1d")
    cell = solve_cell(case.g, case.symbol, 16)
    assert cell.g0[0, 0].real == pytest.approx(np.sqrt(3.0), rel=1e-10)


def test_layered_elasticity_g0():
    case = get_example("layered-elasticity")
    cell = solve_cell(case.g, case.symbol, 12)
    assert np.allclose(cell.g0, np.diag([1.0, 4.0, 1.0]), atol=1e-8)


def test_cell_solution_invariants():
    case = get_example("acoustics-complex", c=0.2)
    cell = solve_cell(case.g, case.symbol, 12)
    assert np.abs(cell.Lambda_mean()).max() < 1e-10
    assert cell.residual <= 1e-8 * case.g.sup_norm()
    assert np.allclose(cell.g0, cell.g0.conj().T, atol=1e-12)
    lo, hi = voigt_reuss(case.g)
    assert psd_gap(lo, cell.g0) > -1e-10
    assert psd_gap(cell.g0, hi) > -1e-10


def test_voigt_reuss_two_phase():
    # equal-measure phases {1, 4}; a grid of 8 splits the cell evenly
    lat = cubic_lattice(1)
    g = field_from_closure(lambda x: np.where(x[..., 0] < np.pi, 1.0, 4.0)[..., None, None], 8, lat, hermitian=True, positive=True)
    lo, hi = voigt_reuss(g)
    assert hi[0, 0] == pytest.approx(2.5)
    assert lo[0, 0] == pytest.approx(1.6)
    c = constant_field(np.eye(2) * 3, cubic_lattice(2))
    assert np.allclose(voigt_reuss(c)[0], voigt_reuss(c)[1])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_field_bracketing(seed):
    g = random_trig_field(cubic_lattice(2), 2, 1, np.random.default_rng(seed))
    cell = solve_cell(g, symbol_gradient(2), 6)
    lo, hi = voigt_reuss(g)
    assert psd_gap(lo, cell.g0) > -1e-10
    assert psd_gap(cell.g0, hi) > -1e-10
    assert np.abs(cell.Lambda_mean()).max() < 1e-10


def test_square_symbol_collapses_to_harmonic_mean():
    # m = n: the Hill symbol is square in 2D, so g0 is the harmonic mean
    case = get_example("hill-body")
    cell = solve_cell(case.g, case.symbol, 15)
    lo, _ = voigt_reuss(case.g)
    assert np.linalg.norm(cell.g0 - lo) <= 1e-8


def test_weighted_constants_trivial_density():
    case = get_example("acoustics-complex", c=0.2)
    cell = solve_cell(case.g, case.symbol, 8)
    w = weighted_constants(cell, Q=constant_field(np.eye(1), case.lattice))
    assert np.allclose(w.Q_bar, 1.0)
    assert np.allclose(w.f0, 1.0)
    assert np.abs(w.Lambda_Q0).max() < 1e-10


def test_weighted_constants_density():
    case = get_example("acoustics-weighted")
    cell = solve_cell(case.g, case.symbol, 12)
    w = weighted_constants(cell, Q=case.Q)
    assert w.Q_bar[0, 0].real == pytest.approx(1.0, abs=1e-14)
    assert w.f0[0, 0].real == pytest.approx(1.0, abs=1e-14)
    # the shifted corrector Lambda + Lambda_Q0 has vanishing Q-weighted mean
    zero = np.flatnonzero(np.all(cell.modes == 0, axis=1))[0]
    shifted = cell.Lambda.copy()
    shifted[zero] += w.Lambda_Q0
    qmean = np.einsum("dij,djk->ik", case.Q.fourier(-cell.modes), shifted)
    assert np.abs(qmean).max() < 1e-10


def test_weighted_shift_against_constrained_solve():
    """The shift solves mean(Q) c = -mean(Q Lambda); least squares as an independent route."""
    case = get_example("acoustics-weighted")
    cell = solve_cell(case.g, case.symbol, 12)
    w = weighted_constants(cell, Q=case.Q)
    A = case.Q.mean()
    rhs = -np.einsum("dij,djk->ik", case.Q.fourier(-cell.modes), cell.Lambda)
    c, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    assert np.allclose(w.Lambda_Q0, c, atol=1e-12)


def test_weighted_from_f_matches_Q():
    case = get_example("acoustics-weighted")
    cell = solve_cell(case.g, case.symbol, 8)
    f = case.Q.pointwise(lambda Q: 1 / np.sqrt(Q), name="f", hermitian=True, positive=True)
    a = weighted_constants(cell, Q=case.Q)
    b = weighted_constants(cell, f=f)
    assert np.allclose(a.Q_bar, b.Q_bar, atol=1e-12)
    assert np.allclose(a.Lambda_Q0, b.Lambda_Q0, atol=1e-12)


def test_layered_oracle_matches_galerkin():
    case = get_example("layered-elasticity")
    oracle = layered_oracle_1d(lambda x: case.g.sampler(np.stack([x, np.zeros_like(x)], -1)), case.symbol)
    galerkin = prepare(case, 32).g0
    assert np.allclose(galerkin, oracle, rtol=1e-6, atol=1e-8)
    assert oracle[1, 1].real == pytest.approx(4.0, rel=1e-10)


def test_layered_oracle_constant_profile():
    mat = np.diag([2.0, 3.0, 5.0])
    g0 = layered_oracle_1d(lambda x: np.broadcast_to(mat, x.shape + (3, 3)), symbol_elasticity(2))
    assert np.allclose(g0, mat, atol=1e-12)


def test_layered_cell_mean_zero():
    case = get_example("acoustics-complex", c=0.2)
    lc = LayeredCell(lambda x: case.g.sampler(np.stack([x, np.zeros_like(x)], -1)), case.symbol)
    assert np.abs(lc.Lambda_mean()).max() < 1e-12


def test_isotropic_closed_forms():
    a = isotropic_root()
    consts = isotropic_constants(a)
    x = np.linspace(0, 2 * np.pi, 400001)[:-1] + np.pi / 400000
    K, mu = isotropic_moduli(x, a)
    assert consts["A"] == pytest.approx(1 / np.mean(1 / (K + mu)), rel=1e-8)
    assert consts["C"] == pytest.approx(4 / np.mean(1 / mu), rel=1e-8)
    assert consts["B"] == pytest.approx(-consts["C"] / 4, abs=1e-6)


def test_isotropic_oracle_against_closed_forms():
    a = isotropic_root()
    consts = isotropic_constants(a)
    g0 = layered_oracle_1d(lambda x: isotropic_tensor(*isotropic_moduli(x, a)), symbol_elasticity(2), (np.pi / 2,))
    assert g0[0, 0].real == pytest.approx(consts["A"], rel=1e-10)
    assert g0[1, 1].real == pytest.approx(consts["C"], rel=1e-10)


def test_isotropic_quadrature_values():
    q = isotropic_quadrature(isotropic_root())
    assert abs(q["S"]) == pytest.approx(65.6650, abs=5e-3)
    assert abs(q["T"]) == pytest.approx(76.2833, abs=5e-3)
    assert abs(q["S"].real) < 1e-8 and abs(q["T"].real) < 1e-8
    assert q["mu_hat"] == pytest.approx(0.09850, abs=5e-4)
