import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homog.fields import (
    AliasingError,
    FieldValidationError,
    constant_field,
    field_from_closure,
    get_example,
    make_symbol,
    random_trig_field,
    symbol_elasticity,
    symbol_gradient,
    symbol_hill,
)
from homog.lattice import cubic_lattice, sphere_directions


def test_gradient_symbol_2d():
    b = symbol_gradient(2)
    theta = np.array([0.6, 0.8])
    assert np.allclose(b(theta)[:, 0], theta)
    assert (b(theta).conj().T @ b(theta))[0, 0] == pytest.approx(1.0)


def test_gradient_symbol_1d_and_3d():
    assert symbol_gradient(1)(np.array([2.5]))[0, 0] == pytest.approx(2.5)
    b = symbol_gradient(3)
    for th in sphere_directions(3, 20):
        assert np.linalg.matrix_rank(b(th)) == 1
    assert b.alpha0 == b.alpha1 == 1.0


def test_elasticity_symbol_2d_rows():
    b = symbol_elasticity(2)
    assert np.allclose(b([1.0, 0.0]), [[1, 0], [0, 0.5], [0, 0]])
    assert np.allclose(b([0.0, 1.0]), [[0, 0], [0.5, 0], [0, 1]])
    assert np.allclose(b([0.0, 0.0]), 0)


def test_elasticity_symbol_3d_column_pattern():
    # strain rows 11, 12, 22, 23, 33, 13 applied to xi = e_2
    b = symbol_elasticity(3)
    expect = np.zeros((6, 3))
    expect[1, 0] = 0.5
    expect[2, 1] = 1.0
    expect[3, 2] = 0.5
    assert np.allclose(b([0.0, 1.0, 0.0]), expect)


def test_hill_symbol_rows():
    b = symbol_hill(2)
    a, c = 0.3, -1.7
    assert np.allclose(b([a, c]), [[a, c], [c, -a]])
    assert np.allclose(b([0.0, 0.0]), 0)


def test_hill_symbol_3d_ellipticity():
    b = symbol_hill(3)
    lo = min(np.linalg.eigvalsh(b(th).conj().T @ b(th))[0] for th in sphere_directions(3, 60))
    assert lo > 0.5
    assert b.alpha0 <= lo + 1e-12


@pytest.mark.parametrize("factory", [symbol_elasticity, symbol_hill])
def test_unsupported_dimension(factory):
    with pytest.raises(ValueError):
        factory(4)


def test_degenerate_symbol_rejected():
    mats = np.zeros((2, 2, 2))
    mats[0, 0, 0] = 1.0
    with pytest.raises(FieldValidationError):
        make_symbol(mats)


def test_constant_field_single_coefficient():
    g = constant_field(np.eye(2), cubic_lattice(2), grid_size=8)
    assert np.allclose(g.support(), [[0, 0]])
    assert np.allclose(g.mean(), np.eye(2))


def test_band_limited_field_support():
    lat = cubic_lattice(1)
    g = field_from_closure(lambda x: (2 + np.sin(x[..., 0]))[..., None, None], 16, lat, hermitian=True, positive=True)
    assert sorted(g.support()[:, 0].tolist()) == [-1, 0, 1]
    assert g.fourier(np.array([[1]]))[0, 0, 0] == pytest.approx(-0.5j)


def test_positivity_violation_rejected():
    lat = cubic_lattice(1)
    with pytest.raises(FieldValidationError):
        field_from_closure(lambda x: np.sin(x[..., 0])[..., None, None], 8, lat, hermitian=True, positive=True)


def test_grid_too_small_rejected():
    with pytest.raises(ValueError):
        constant_field(np.eye(1), cubic_lattice(1), grid_size=3)


def test_resolution_check():
    case = get_example("layered-elasticity")
    case.g.check_resolution(8)
    with pytest.raises(AliasingError):
        case.g.check_resolution(64)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.integers(1, 3))
def test_random_field_resampling_round_trip(seed, degree, size):
    lat = cubic_lattice(2)
    g = random_trig_field(lat, size, degree, np.random.default_rng(seed))
    fine = g.resampled(4 * degree + 8)
    nus = g.support()
    assert np.allclose(g.fourier(nus), fine.fourier(nus), atol=1e-12)
    x = np.random.default_rng(seed + 1).uniform(0, 2 * np.pi, (5, 2))
    assert np.allclose(g.evaluate(x), g.sampler(x), atol=1e-12)
    assert np.linalg.eigvalsh(g.flat_samples())[:, 0].min() > 0


def test_acoustics_complex_reference():
    case = get_example("acoustics-complex", c=0.1)
    assert case.reference["alpha"].value == pytest.approx(-4.712389e-3, rel=1e-6)
    c2 = get_example("acoustics-complex", c=0.2)
    assert c2.reference["N_coefficient"].value == pytest.approx(0.012, rel=1e-12)
    with pytest.raises(ValueError):
        get_example("acoustics-complex", c=0.4)


def test_acoustics_complex_alpha_quadrature():
    # alpha = int_0^{2 pi} beta (beta')^2 dx by the rectangle rule, exact for trig polynomials
    c = 0.1
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    beta = c * (np.sin(x) + np.cos(2 * x))
    dbeta = c * (np.cos(x) - 2 * np.sin(2 * x))
    alpha = 2 * np.pi * np.mean(beta * dbeta**2)
    assert alpha == pytest.approx(get_example("acoustics-complex", c=c).reference["alpha"].value, rel=1e-12)


def test_layered_elasticity_means():
    case = get_example("layered-elasticity")
    x1 = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    pts = np.stack([x1, np.zeros_like(x1)], -1)
    vals = case.g.sampler(pts)
    assert 1 / np.mean(1 / vals[:, 1, 1]) == pytest.approx(4.0, rel=1e-10)
    assert np.mean(vals[:, 2, 2]) == pytest.approx(1.0, rel=1e-12)
    assert case.g.is_layered()


def test_isotropic_reference_constants():
    case = get_example("isotropic-elasticity")
    p = case.params
    assert p["C"] == pytest.approx(100.0)
    assert p["B"] == pytest.approx(-25.0, abs=1e-6)
    assert p["a"] == pytest.approx(145.6581, abs=5e-4)
    assert p["theta1_sq"] == pytest.approx(0.5394, abs=5e-4)


def test_hill_body_reference():
    case = get_example("hill-body")
    assert case.reference["g0"].value[0, 0] == pytest.approx(np.sqrt(3.0), rel=1e-10)
    const = get_example("hill-body", beta=lambda x: np.full(x.shape[:-1], 3.0))
    assert np.allclose(const.reference["g0"].value, np.diag([3.0, 0.5]))
    with pytest.raises(ValueError):
        get_example("hill-body", mu0=0.0)


def test_weighted_example_density_mean():
    case = get_example("acoustics-weighted")
    assert case.weighted
    assert case.Q.mean()[0, 0].real == pytest.approx(1.0, abs=1e-14)


def test_unknown_example():
    with pytest.raises(KeyError):
        get_example("no-such-example")
