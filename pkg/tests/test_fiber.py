import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homog import kernels
from homog.bundle import prepare
from homog.fiber import (
    PSDViolationError,
    assemble,
    assemble_blocks,
    coupling_components,
    effective_fiber,
    eigendecompose,
    mode_box,
    operator_cosine,
    operator_norm,
    operator_sine_over_root,
    smoothing,
    symbols_at,
)
from homog.fields import (
    AliasingError,
    constant_field,
    field_from_closure,
    get_example,
    make_symbol,
    random_trig_field,
    symbol_gradient,
)
from homog.lattice import cubic_lattice


def scalar_1d(fn, grid=32):
    lat = cubic_lattice(1)
    return field_from_closure(lambda x: fn(x[..., 0])[..., None, None], grid, lat, hermitian=True, positive=True, bandlimited=True)


def dense_galerkin(g, b, k, modes):
    """Entry by entry: b(p+k)^* g_hat(p-q) b(q+k)."""
    lat = g.lattice
    n = b.n
    out = np.zeros((len(modes) * n, len(modes) * n), dtype=complex)
    for i, p in enumerate(modes):
        bp = b(lat.frequencies(p[None])[0] + k)
        for j, q in enumerate(modes):
            bq = b(lat.frequencies(q[None])[0] + k)
            out[i * n : (i + 1) * n, j * n : (j + 1) * n] = bp.conj().T @ g.fourier((p - q)[None])[0] @ bq
    return out


def test_constant_identity_diagonal():
    lat = cubic_lattice(1)
    op = assemble(constant_field(np.eye(1), lat), symbol_gradient(1), [0.3], 2)
    assert np.allclose(op.matrix, np.diag((np.arange(-2, 3) + 0.3) ** 2))


def test_scalar_kernel_at_zero():
    g = scalar_1d(lambda x: 2 + np.sin(x))
    vals = eigendecompose(assemble(g, symbol_gradient(1), [0.0], 8)).values
    assert np.sum(vals < 1e-8 * vals.max()) == 1
    assert vals[1] > 0.1


def test_layered_elasticity_kernel_dimension():
    case = get_example("layered-elasticity")
    op = assemble(case.g, case.symbol, [0.0, 0.0], 6)
    vals = eigendecompose(op).values
    assert np.sum(vals < 1e-8 * vals.max()) == 2


def test_assembly_matches_entrywise_oracle():
    rng = np.random.default_rng(3)
    lat = cubic_lattice(2)
    g = random_trig_field(lat, 3, 1, rng)
    b2 = make_symbol(rng.standard_normal((2, 3, 2)), alpha0=1.0, alpha1=1.0)
    modes = mode_box(2, 2)
    k = np.array([0.2, -0.1])
    op = assemble(g, b2, k, 2)
    assert np.allclose(op.matrix, dense_galerkin(g, b2, k, modes), atol=1e-12)


def test_pure_python_kernel_agrees():
    case = get_example("acoustics-complex", c=0.2)
    modes = mode_box(2, 4)
    sym = symbols_at(case.symbol, case.lattice, modes, [0.1, 0.05])
    from homog.fiber import _difference_table

    table, strides, offset, nonzero = _difference_table(case.g, 4, modes)
    args = (np.ascontiguousarray(modes), sym, table, strides, offset, nonzero, True)
    assert np.allclose(kernels.galerkin_matrix(*args), kernels.python_galerkin_matrix(*args), atol=1e-13)


def test_aliasing_rejected():
    g = field_from_closure(lambda x: (2 + np.sin(x[..., 0]) ** 8)[..., None, None], 8, cubic_lattice(1), hermitian=True, positive=True)
    with pytest.raises(AliasingError):
        assemble(g, symbol_gradient(1), [0.0], 8)


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_hermitian_psd(seed, k1, k2):
    g = random_trig_field(cubic_lattice(2), 2, 1, np.random.default_rng(seed))
    op = assemble(g, symbol_gradient(2), [k1, k2], 3)
    assert np.allclose(op.matrix, op.matrix.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(op.matrix)[0] > -1e-10 * np.abs(op.matrix).max()


def test_blocks_reproduce_full_spectrum():
    case = get_example("acoustics-weighted")
    k = np.array([0.13, 0.21])
    full = eigendecompose(assemble(case.g, case.symbol, k, 4, Q=case.Q)).values
    blocks = assemble_blocks(case.g, case.symbol, k, 4, Q=case.Q)
    parts = np.sort(np.concatenate([eigendecompose(op).values for op in blocks]))
    assert np.allclose(parts, full, rtol=1e-10, atol=1e-12)
    comps = coupling_components([case.g, case.Q], 4, 2)
    assert sum(len(c) for c in comps) == len(mode_box(2, 4))


def test_truncation_stability():
    g = scalar_1d(lambda x: 2 + np.sin(x), 64)
    b = symbol_gradient(1)
    lo = eigendecompose(assemble(g, b, [0.27], 8)).values[:3]
    hi = eigendecompose(assemble(g, b, [0.27], 16)).values[:3]
    assert np.allclose(lo, hi, rtol=1e-6)


def test_band_lower_bound():
    bd = prepare(get_example("acoustics-complex", c=0.2), 8)
    r0 = bd.lattice.r0
    for k in ([0.0, 0.0], [0.3, 0.1], [0.5, 0.5]):
        vals = eigendecompose(assemble(bd.g, bd.symbol, k, 8)).values
        assert vals[bd.n] >= bd.c_star * r0**2 - 1e-10


def test_effective_fiber_scalar():
    lat = cubic_lattice(1)
    op = effective_fiber(np.array([[2.0]]), symbol_gradient(1), [0.3], 1, lat)
    assert np.allclose(np.diag(op.matrix), 2.0 * np.array([0.49, 0.09, 1.69]))
    zero = effective_fiber(np.eye(1), symbol_gradient(1), [0.0], 1, lat)
    assert zero.matrix[1, 1] == 0


def test_effective_fiber_germ_layered_elasticity():
    case = get_example("layered-elasticity")
    t, theta = 0.01, np.array([0.6, 0.8])
    op = effective_fiber(np.diag([1.0, 4.0, 1.0]), case.symbol, t * theta, 0, case.lattice)
    S = np.array([[1.0, theta[0] * theta[1]], [theta[0] * theta[1], 1.0]])
    assert np.allclose(op.matrix, t**2 * S, atol=1e-14)


def test_smoothing_values():
    lat = cubic_lattice(2)
    modes = np.array([[0, 0], [1, 0]])
    w = smoothing(lat, modes, [0.0, 0.0], 0.1, 2.0, 1)
    assert w[0] == pytest.approx(1.0)
    assert w[1] == pytest.approx(0.01 / 1.01)
    nonzero = smoothing(lat, mode_box(2, 3)[np.any(mode_box(2, 3) != 0, axis=1)], [0.3, -0.2], 0.05, 1.5, 1)
    assert nonzero.max() <= lat.r0**-1.5 * 0.05**1.5


def test_eigendecompose_diagonal_and_clusters():
    d = eigendecompose(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(d.values, [1, 2, 3])
    bd = prepare(get_example("layered-elasticity"), 8)
    from homog.germ import germ_package

    p = germ_package(bd.cell, bd.symbol, np.array([0.0, 1.0]))
    assert len(eigendecompose(np.diag(p.gammas)).clusters) == 1


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_residual_and_trig_identity(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((50, 50)) + 1j * rng.standard_normal((50, 50))
    A = X @ X.conj().T / 50
    d = eigendecompose(A)
    assert np.abs(A @ d.vectors - d.vectors * d.values).max() < 1e-10 * d.scale
    tau = 0.7
    C = operator_cosine(d, tau)
    S = operator_sine_over_root(d, tau)
    # cos^2 + A (sin / sqrt)^2 = I
    assert np.abs(C @ C + A @ S @ S - np.eye(50)).max() < 1e-9


def test_cosine_basic():
    assert np.allclose(operator_cosine(eigendecompose(np.eye(3)), 0.0), np.eye(3), atol=1e-10)
    assert operator_cosine(eigendecompose(np.array([[4.0]])), np.pi / 2)[0, 0] == pytest.approx(-1.0)
    A = np.diag([0.5, 2.0])
    assert np.allclose(operator_cosine(eigendecompose(A), 1.3), operator_cosine(eigendecompose(A), -1.3))


def test_cosine_rejects_indefinite():
    with pytest.raises(PSDViolationError):
        operator_cosine(eigendecompose(np.diag([1.0, -0.5])), 1.0)


def power_iteration(M, iters=3000):
    v = np.ones(M.shape[1])
    for _ in range(iters):
        v = M.T @ (M @ v)
        v /= np.linalg.norm(v)
    return np.linalg.norm(M @ v)


def test_operator_norm():
    assert operator_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    assert operator_norm(np.outer(u, v)) == pytest.approx(15.0)
    M = np.random.default_rng(0).standard_normal((30, 30))
    assert operator_norm(M) == pytest.approx(power_iteration(M), rel=1e-8)


def test_backend_selection_honours_environment():
    code = "from homog import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "HOMOG_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")
