import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homog import get_example, prepare
from homog.estimates import (
    PhaseResolutionError,
    PiecewiseForce,
    SharpnessRefused,
    TorusData,
    cauchy_error,
    cauchy_error_dense,
    fiber_error,
    global_error,
    loglog_slope,
    rate_experiment,
    sharpness_probe,
    torus_operator_norm,
)
from homog.lattice import brillouin_grid

# self-oracle: layered-1d at cutoff 32, twice the default of 16; agrees with cutoff 64 to 1e-16
LAYERED_REGRESSION = {
    0.05: 0.009173167703397213,
    0.25: 0.006513368798100405,
    0.5: 0.02913015394937986,
}


@pytest.fixture(scope="module")
def layered():
    return prepare(get_example("layered-1d"), 16)


@pytest.fixture(scope="module")
def acoustics():
    return prepare(get_example("acoustics-complex", c=0.2), 8)


@pytest.fixture(scope="module")
def weighted():
    return prepare(get_example("acoustics-weighted"), 6)


@pytest.fixture(scope="module")
def constant():
    return prepare(get_example("constant"), 4)


def test_constant_coefficients_no_error(constant):
    for k in ([0.0, 0.0], [0.3, -0.2], [0.5, 0.5]):
        assert fiber_error(constant, k, 0.1, 2.0, 2.0).fiber_error < 1e-10


def test_tau_zero_is_exact(acoustics):
    assert fiber_error(acoustics, [0.2, 0.1], 0.1, 0.0, 2.0).fiber_error == 0.0


@pytest.mark.parametrize("k", sorted(LAYERED_REGRESSION))
def test_layered_regression(layered, k):
    got = fiber_error(layered, [k], 0.1, 1.0, 2.0, check_phase=True).fiber_error
    assert got == pytest.approx(LAYERED_REGRESSION[k], rel=1e-9)
    assert got <= 0.1  # the O(eps) bound with a constant of order one


@settings(max_examples=20, deadline=None)
@given(
    st.floats(-0.5, 0.5),
    st.floats(-0.5, 0.5),
    st.floats(0.02, 0.5),
    st.floats(0.1, 3.0),
    st.floats(0.0, 1.9),
)
def test_fiber_error_invariants(acoustics, k1, k2, eps, tau, s):
    k = [k1, k2]
    e = fiber_error(acoustics, k, eps, tau, s).fiber_error
    assert 0 <= e <= 2 + 1e-10
    assert fiber_error(acoustics, k, eps, -tau, s).fiber_error == pytest.approx(e, rel=1e-12, abs=1e-15)
    # stronger smoothing never increases the error
    assert fiber_error(acoustics, k, eps, tau, s + 0.1).fiber_error <= e + 1e-12


def test_weighted_contraction_bound(weighted):
    for k in ([0.0, 0.1], [0.4, -0.3]):
        e = fiber_error(weighted, k, 0.1, 1.5, 0.0).fiber_error
        assert 0 <= e <= 4  # sqrt(cond Q) + sqrt(cond Q_bar) with cond Q = 3


def test_sandwiched_flag_validation(acoustics, weighted):
    with pytest.raises(ValueError):
        fiber_error(acoustics, [0.1, 0.1], 0.1, 1.0, 2.0, sandwiched=True)
    with pytest.raises(ValueError):
        fiber_error(weighted, [0.1, 0.1], 0.1, 1.0, 2.0, sandwiched=False)
    with pytest.raises(ValueError):
        fiber_error(acoustics, [0.1, 0.1], 0.0, 1.0, 2.0)


def test_phase_resolution_rejected():
    coarse = prepare(get_example("acoustics-complex", c=0.2), 2)
    fiber_error(coarse, [0.3, 0.1], 0.1, 1.0, 0.5, check_phase=True)
    with pytest.raises(PhaseResolutionError, match="cutoff 4"):
        fiber_error(coarse, [0.3, 0.1], 0.001, 10.0, 0.5, check_phase=True)


def test_global_error_constant(constant):
    assert global_error(constant, brillouin_grid(constant.lattice, 5), 0.1, 1.0, 2.0).value < 1e-10


def test_global_error_nested_grids(acoustics):
    lat = acoustics.lattice
    coarse = global_error(acoustics, brillouin_grid(lat, 8), 0.05, 1.0, 2.0, refine=False)
    fine = global_error(acoustics, brillouin_grid(lat, 16), 0.05, 1.0, 2.0, refine=False)
    # the coarse grid is contained in the fine one
    assert fine.value >= coarse.value - 1e-14
    refined = global_error(acoustics, brillouin_grid(lat, 8), 0.05, 1.0, 2.0)
    assert refined.value >= refined.grid_value
    assert refined.refinement_delta == pytest.approx(refined.value - refined.grid_value)


def test_acoustics_global_error_over_eps_bounded(acoustics):
    grid = brillouin_grid(acoustics.lattice, 9)
    ratios = [global_error(acoustics, grid, e, 1.0, 2.0).value / e for e in 2.0 ** -np.arange(3, 8)]
    # E(eps) <= C eps: the ratio must not grow as eps shrinks
    assert max(ratios) <= ratios[0] * (1 + 1e-6)


def test_loglog_slope_exact():
    x = np.array([0.1, 0.2, 0.4, 0.8])
    slope, intercept = loglog_slope(x, 3 * x**1.5)
    assert slope == pytest.approx(1.5)
    assert intercept == pytest.approx(np.log(3))
    with pytest.raises(ValueError):
        loglog_slope([1, 2], [0, 1])


def test_rate_experiment_validation(layered):
    grid = brillouin_grid(layered.lattice, 5)
    with pytest.raises(ValueError):
        rate_experiment(layered, 1.5, 1.0, [0.1, 0.05, 0.025], grid)
    with pytest.raises(ValueError):
        rate_experiment(layered, 1.5, 1.0, [0.1, 0.09, 0.08, 0.07], grid)
    with pytest.raises(ValueError):
        rate_experiment(layered, 1.5, 1.0, 2.0 ** -np.arange(3, 7), grid, expectation="roughly")


def test_rate_experiment_report(layered):
    grid = brillouin_grid(layered.lattice, 9)
    rep = rate_experiment(layered, 1.5, 1.0, 2.0 ** -np.arange(3, 7), grid)
    assert rep.passed == (rep.slope >= 0.95)
    assert np.all(np.diff(rep.eps) < 0)
    d = rep.to_dict()
    assert set(d) >= {"eps", "errors", "slope", "passed", "refinement"}


def test_sharpness_refused_for_real_symmetric(layered):
    with pytest.raises(SharpnessRefused):
        sharpness_probe(layered, [1.0], 1.0, 1.5)


def test_sharpness_argument_checks(acoustics):
    with pytest.raises(ValueError):
        sharpness_probe(acoustics, [0.0, 1.0], 1.0, 2.5)
    with pytest.raises(ValueError):
        sharpness_probe(acoustics, [0.0, 1.0], 0.0, 1.5)


def test_sharpness_sequence_geometry(acoustics):
    rep = sharpness_probe(acoustics, [0.0, 1.0], 1.0, 1.5)
    # eps_k scales like 1/k^2 and t_k like 1/k
    assert np.allclose(rep.eps[:-1] / rep.eps[1:], 4.0)
    assert np.allclose(rep.t[:-1] / rep.t[1:], 2.0)
    assert np.all(rep.t <= 0.25 * acoustics.lattice.r0)


def test_torus_data_validation():
    with pytest.raises(ValueError):
        TorusData([[1], [1]], [1.0, 2.0])
    with pytest.raises(ValueError):
        TorusData([[1], [2]], [1.0])
    d = TorusData([[1], [-2]], [1.0, 2.0])
    assert d.sobolev_norm(0) == pytest.approx(np.sqrt(5))
    assert d.sobolev_norm(2) == pytest.approx(np.sqrt(4 + 4 * 25))


def test_piecewise_force_norm():
    f = PiecewiseForce([0.0, 0.5, 2.0], [[1]], [[[1.0]], [[2.0]]])
    # H^1 weight sqrt(2) at mode 1; the second piece is cut at tau = 1
    assert f.l1_norm(1.0, 1.0) == pytest.approx(np.sqrt(2) * (0.5 * 1 + 0.5 * 2))
    with pytest.raises(ValueError):
        PiecewiseForce([0.0, 0.0], [[1]], [[[1.0]]])


def test_cauchy_constant_coefficients(constant):
    phi = TorusData([[1, 0], [0, 2]], [1.0, 0.5j])
    assert cauchy_error(constant, phi, tau=1.3, eps=0.25).error < 1e-12


def test_cauchy_rejects_bad_input(layered):
    phi = TorusData([[1]], [1.0])
    with pytest.raises(ValueError):
        cauchy_error(layered, phi, eps=0.3)
    with pytest.raises(ValueError):
        cauchy_error(layered, phi.scaled(0.0), eps=0.25)


def test_cauchy_bloch_matches_dense():
    bd = prepare(get_example("layered-1d"), 8)
    phi = TorusData([[1], [2], [-3]], [1.0, 0.4, 0.2j])
    psi = TorusData([[2]], [0.7])
    force = PiecewiseForce([0.0, 0.4, 1.0], [[1], [2]], [[[1.0], [0.3]], [[0.5j], [-0.2]]])
    a = cauchy_error(bd, phi, psi, force, tau=1.0, eps=0.25, s=2.0)
    b = cauchy_error_dense(bd, phi, psi, force, tau=1.0, eps=0.25, s=2.0)
    assert a.error == pytest.approx(b.error, rel=1e-8)
    assert np.allclose(a.v_eps, b.v_eps, atol=1e-10)
    assert np.array_equal(a.modes, b.modes)


def test_cauchy_weighted_matches_dense(weighted):
    phi = TorusData([[1, 0], [0, 1]], [1.0, -0.5])
    a = cauchy_error(weighted, phi, tau=0.8, eps=0.5, s=2.0)
    b = cauchy_error_dense(weighted, phi, tau=0.8, eps=0.5, s=2.0)
    assert a.error == pytest.approx(b.error, rel=1e-8)


def test_cauchy_error_below_operator_norm(layered):
    phi = TorusData([[1]], [1.0])
    res = cauchy_error(layered, phi, tau=1.0, eps=1 / 8, s=1.5)
    norm = torus_operator_norm(layered, 1 / 8, 1.0, 1.5)
    assert res.error <= norm.value * (1 + 1e-8)
