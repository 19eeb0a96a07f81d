"""Fourier-Galerkin fiber operators ``b(D+k)* g b(D+k)`` and their spectral calculus.

Modes are integer dual coordinates in ``[-N, N]^d``.  Unknowns are ordered mode
by mode with the ``n`` components of each mode contiguous.  A weighted operator
carries a mass matrix (the Toeplitz matrix of the density ``Q``) and is treated
as the generalised pair ``(A, M)``; its spectrum equals that of the sandwiched
operator ``f* A f`` with ``Q = (f f*)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from . import kernels
from .fields import AliasingError, BlochSymbol, CoefficientField
from .lattice import Lattice, integer_box

PSD_CLAMP = 1e-8
CLUSTER_GAP = 1e-6


class PSDViolationError(ArithmeticError):
    pass


class EigenSolverError(ArithmeticError):
    pass


def mode_box(dim: int, cutoff: int) -> np.ndarray:
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    return integer_box(dim, cutoff)


@dataclass(frozen=True)
class FiberOperator:
    k: np.ndarray
    cutoff: int
    modes: np.ndarray
    n: int
    matrix: np.ndarray
    kind: str  # plain | effective | sandwiched | weighted
    lattice: Lattice
    mass: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def frequencies(self) -> np.ndarray:
        """Physical wave vectors b + k of every mode."""
        return self.lattice.frequencies(self.modes) + self.k[None, :]


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _difference_table(field: CoefficientField, cutoff: int, modes: np.ndarray):
    """Coefficients indexed by mode differences, flattened for the kernel."""
    d = field.dim
    span = np.ptp(modes, axis=0) if len(modes) else np.zeros(d, dtype=np.int64)
    half = np.maximum(span, 0).astype(np.int64)
    shape = 2 * half + 1
    diffs = np.stack(np.meshgrid(*[np.arange(-h, h + 1) for h in half], indexing="ij"), axis=-1).reshape(-1, d)
    table = np.ascontiguousarray(field.fourier(diffs).reshape(-1, field.rows, field.cols).astype(np.complex128))
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    mag = np.abs(table).max(axis=(1, 2))
    nonzero = (mag > 1e-15 * max(float(mag.max()), 1e-300)).astype(np.uint8)
    return table, strides, half.astype(np.int64), nonzero


def symbols_at(b: BlochSymbol, lat: Lattice, modes: np.ndarray, k) -> np.ndarray:
    xi = lat.frequencies(modes) + np.asarray(k, dtype=float)[None, :]
    return np.ascontiguousarray(b(xi).astype(np.complex128))


def galerkin(field: CoefficientField, symbols: np.ndarray, modes: np.ndarray, cutoff: int) -> np.ndarray:
    field.check_resolution(cutoff)
    table, strides, offset, nonzero = _difference_table(field, cutoff, modes)
    herm = field.hermitian
    return kernels.galerkin_matrix(
        np.ascontiguousarray(modes, dtype=np.int64), symbols, table, strides, offset, nonzero, herm
    )


def toeplitz(field: CoefficientField, modes: np.ndarray, cutoff: int) -> np.ndarray:
    """Matrix of multiplication by ``field`` compressed to ``modes``."""
    eye = np.broadcast_to(np.eye(field.rows, dtype=np.complex128), (len(modes), field.rows, field.rows))
    return galerkin(field, np.ascontiguousarray(eye), modes, cutoff)


def _quadrature_shape(field: CoefficientField, modes: np.ndarray) -> tuple[int, ...]:
    """Grid on which grid sums reproduce every Galerkin entry for ``modes``."""
    span = np.ptp(modes, axis=0)
    shape = []
    for a, ng in enumerate(field.grid_shape):
        if field.exact_axes[a]:
            ng = max(ng, int(span[a] + field.axis_bands[a] + 1))
        elif ng < span[a] + 1:
            raise AliasingError(f"grid {ng} on axis {a} is too coarse for the block")
        shape.append(int(ng))
    return tuple(shape)


def quadrature_gram(field: CoefficientField, modes: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Gram matrix <field w_i, w_j> of trigonometric fields given by mode coefficients.

    ``coeffs`` has shape (D, rows, C).  The entries are grid sums of
    (field^{1/2} w_i)^* (field^{1/2} w_j), which equal the Galerkin quadratic
    form exactly and keep small entries accurate.
    """
    shape = _quadrature_shape(field, modes)
    samples = field.padded_samples(shape).reshape(-1, field.rows, field.cols)
    w, U = np.linalg.eigh(samples)
    root = (U * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) @ np.conj(np.swapaxes(U, 1, 2))
    grid = np.zeros(shape + coeffs.shape[1:], dtype=complex)
    grid[tuple(np.mod(modes[:, a], shape[a]) for a in range(len(shape)))] = coeffs
    P = float(np.prod(shape))
    values = np.fft.ifftn(grid, axes=tuple(range(len(shape)))) * P
    weighted = (root @ values.reshape(-1, *coeffs.shape[1:])).reshape(-1, coeffs.shape[-1])
    return weighted.conj().T @ weighted / P


def ritz_refine(stiff: np.ndarray, mass: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rayleigh-Ritz on span(vectors) from projected stiffness and mass Gram matrices."""
    vals, rot = sla.eigh(0.5 * (stiff + stiff.conj().T), 0.5 * (mass + mass.conj().T))
    return vals, vectors @ rot


def refined_eigenpairs(op: "FiberOperator", g: CoefficientField, b: BlochSymbol, vectors: np.ndarray):
    """Ritz values and vectors on span(vectors), with the stiffness evaluated in factored form.

    Dense eigensolvers give small eigenvalues only up to eps times the matrix
    norm, which grows with the cutoff, and leave the basis of a nearly
    degenerate cluster arbitrary; Rayleigh-Ritz with a factored stiffness fixes both.
    """
    if op.kind == "sandwiched":
        raise ValueError("refinement is implemented for plain and weighted fibers")
    D, n = len(op.modes), op.n
    v = vectors.reshape(D, n, -1)
    sym = symbols_at(b, op.lattice, op.modes, op.k)
    stiff = quadrature_gram(g, op.modes, sym @ v)
    mass = vectors.conj().T @ (vectors if op.mass is None else op.mass @ vectors)
    return ritz_refine(stiff, mass, vectors)


def assemble(
    g: CoefficientField,
    b: BlochSymbol,
    k,
    cutoff: int,
    f: CoefficientField | None = None,
    Q: CoefficientField | None = None,
    modes: np.ndarray | None = None,
) -> FiberOperator:
    """Galerkin matrix of the fiber operator at quasimomentum ``k``.

    ``f`` gives the sandwiched matrix ``F^H A F`` with ``F`` the Toeplitz matrix
    of f; ``Q`` gives the weighted pair with mass ``Toeplitz(Q)``.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if f is not None and Q is not None:
        raise ValueError("pass either f or Q, not both")
    lat = g.lattice
    k = np.asarray(k, dtype=float).reshape(lat.dim)
    modes = mode_box(lat.dim, cutoff) if modes is None else np.asarray(modes, dtype=np.int64)
    mat = galerkin(g, symbols_at(b, lat, modes, k), modes, cutoff)
    kind, mass = "plain", None
    if f is not None:
        F = toeplitz(f, modes, cutoff)
        mat = F.conj().T @ mat @ F
        mat = 0.5 * (mat + mat.conj().T)
        kind = "sandwiched"
    elif Q is not None:
        mass = toeplitz(Q, modes, cutoff)
        kind = "weighted"
    return FiberOperator(k=k, cutoff=cutoff, modes=modes, n=b.n, matrix=mat, kind=kind, lattice=lat, mass=mass)


def _support_steps(fields: list[CoefficientField]) -> np.ndarray:
    steps = [fld.support() for fld in fields]
    steps = np.unique(np.concatenate(steps), axis=0) if steps else np.zeros((0, 0), dtype=np.int64)
    return steps[np.any(steps != 0, axis=1)]


def _grow(seed: np.ndarray, steps: np.ndarray, cutoff: int, visited: np.ndarray, strides: np.ndarray) -> np.ndarray:
    """Breadth-first closure of ``seed`` under the steps, inside the box."""
    found = [seed]
    visited[(seed + cutoff) @ strides] = True
    frontier = seed
    while len(frontier):
        cand = (frontier[:, None, :] + steps[None, :, :]).reshape(-1, frontier.shape[1])
        cand = cand[np.all(np.abs(cand) <= cutoff, axis=1)]
        flat = (cand + cutoff) @ strides
        flat, first = np.unique(flat, return_index=True)
        fresh = ~visited[flat]
        visited[flat[fresh]] = True
        frontier = cand[first[fresh]]
        found.append(frontier)
    comp = np.concatenate(found)
    return comp[np.argsort((comp + cutoff) @ strides)]


def coupling_component(fields: list[CoefficientField], cutoff: int, dim: int, seed=None) -> np.ndarray:
    """Modes reachable from ``seed`` (default the zero mode) through field supports."""
    side = 2 * cutoff + 1
    strides = side ** np.arange(dim - 1, -1, -1)
    seed = np.zeros((1, dim), dtype=np.int64) if seed is None else np.atleast_2d(np.asarray(seed, dtype=np.int64))
    visited = np.zeros(side**dim, dtype=bool)
    return _grow(seed, _support_steps(fields), cutoff, visited, strides)


def coupling_components(fields: list[CoefficientField], cutoff: int, dim: int) -> list[np.ndarray]:
    """Partition the mode box into groups not coupled by any of ``fields``.

    Two modes interact when their difference is in the Fourier support of a
    field, so the Galerkin matrix is block diagonal over these groups. Groups
    are returned as index arrays into ``mode_box(dim, cutoff)``.
    """
    modes = mode_box(dim, cutoff)
    side = 2 * cutoff + 1
    strides = side ** np.arange(dim - 1, -1, -1)
    steps = _support_steps(fields)
    visited = np.zeros(side**dim, dtype=bool)
    out = []
    for start in range(len(modes)):
        if visited[start]:
            continue
        comp = _grow(modes[start : start + 1], steps, cutoff, visited, strides)
        out.append((comp + cutoff) @ strides)
    return out


def assemble_blocks(
    g: CoefficientField,
    b: BlochSymbol,
    k,
    cutoff: int,
    Q: CoefficientField | None = None,
    components: list[np.ndarray] | None = None,
) -> list[FiberOperator]:
    """The fiber operator split into its independent diagonal blocks."""
    lat = g.lattice
    if components is None:
        fields = [g] + ([Q] if Q is not None else [])
        components = coupling_components(fields, cutoff, lat.dim)
    box = mode_box(lat.dim, cutoff)
    return [assemble(g, b, k, cutoff, Q=Q, modes=box[c]) for c in components]


def effective_fiber(
    g0: np.ndarray,
    b: BlochSymbol,
    k,
    cutoff: int,
    lat: Lattice,
    f0: np.ndarray | None = None,
    Q_bar: np.ndarray | None = None,
    modes: np.ndarray | None = None,
) -> FiberOperator:
    """Block-diagonal matrix with mode block ``b(b+k)* g0 b(b+k)``."""
    k = np.asarray(k, dtype=float).reshape(lat.dim)
    modes = mode_box(lat.dim, cutoff) if modes is None else np.asarray(modes, dtype=np.int64)
    sym = symbols_at(b, lat, modes, k)
    blocks = np.conj(np.swapaxes(sym, 1, 2)) @ np.asarray(g0, dtype=complex)[None] @ sym
    kind, mass = "effective", None
    if f0 is not None:
        f0 = np.asarray(f0, dtype=complex)
        blocks = f0.conj().T[None] @ blocks @ f0[None]
    mat = sla.block_diag(*blocks)
    if Q_bar is not None:
        mass = sla.block_diag(*([np.atleast_2d(np.asarray(Q_bar, dtype=complex))] * len(modes)))
        kind = "effective-weighted"
    return FiberOperator(k=k, cutoff=cutoff, modes=modes, n=b.n, matrix=mat, kind=kind, lattice=lat, mass=mass)


def smoothing(lat: Lattice, modes: np.ndarray, k, eps: float, s: float, n: int) -> np.ndarray:
    """Diagonal of R(k, eps)^{s/2}: eps^s (|b+k|^2 + eps^2)^{-s/2} per component."""
    if eps <= 0 or s < 0:
        raise ValueError("need eps > 0 and s >= 0")
    xi = lat.frequencies(modes) + np.asarray(k, dtype=float)[None, :]
    w = (eps**2 / (np.sum(xi**2, axis=1) + eps**2)) ** (s / 2)
    return np.repeat(w, n)


# ---------------------------------------------------------------------------
# spectral calculus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray
    clusters: list[np.ndarray]
    mass: np.ndarray | None = None
    scale: float = 1.0

    def clamped(self) -> np.ndarray:
        lam = self.values
        bad = lam < -PSD_CLAMP * self.scale
        if np.any(bad):
            raise PSDViolationError(f"eigenvalue {lam[bad].min():.3e} below clamp threshold")
        return np.clip(lam, 0.0, None)


def cluster_runs(values: np.ndarray, gap_tol: float = CLUSTER_GAP) -> list[np.ndarray]:
    """Maximal runs of sorted values whose consecutive gaps are below gap_tol*scale."""
    if len(values) == 0:
        return []
    groups, current = [], [0]
    for i in range(1, len(values)):
        scale = max(abs(values[i]), abs(values[i - 1]), 1e-300)
        if values[i] - values[i - 1] < gap_tol * scale:
            current.append(i)
        else:
            groups.append(np.array(current))
            current = [i]
    groups.append(np.array(current))
    return groups


def eigendecompose(op: FiberOperator | np.ndarray, gap_tol: float = CLUSTER_GAP, mass: np.ndarray | None = None) -> EigenDecomposition:
    """Ascending eigenpairs; mass-orthonormal vectors for weighted operators."""
    if isinstance(op, FiberOperator):
        mat, mass = op.matrix, op.mass
    else:
        mat = np.asarray(op)
    try:
        if mass is None:
            vals, vecs = np.linalg.eigh(mat)
        else:
            vals, vecs = sla.eigh(mat, mass)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise EigenSolverError(str(exc)) from exc
    scale = float(np.abs(vals).max()) if len(vals) else 1.0
    return EigenDecomposition(vals, vecs, cluster_runs(vals, gap_tol), mass, scale)


def operator_function(decomp: EigenDecomposition, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """``fn`` of the operator; for a pair (A, M) this is fn(M^{-1} A)."""
    lam = decomp.clamped()
    V = decomp.vectors
    out = (V * fn(lam)[None, :]) @ V.conj().T
    if decomp.mass is not None:
        out = out @ decomp.mass
    return out


def operator_cosine(decomp: EigenDecomposition, tau: float) -> np.ndarray:
    return operator_function(decomp, lambda lam: np.cos(tau * np.sqrt(lam)))


def sinc_root(lam: np.ndarray, tau: float) -> np.ndarray:
    """sin(tau sqrt(lam)) / sqrt(lam) with the limit tau at lam = 0."""
    r = np.sqrt(lam)
    out = np.full_like(r, float(tau))
    big = r * abs(tau) > 1e-8
    out[big] = np.sin(tau * r[big]) / r[big]
    small = ~big
    out[small] = tau - tau**3 * lam[small] / 6
    return out


def operator_sine_over_root(decomp: EigenDecomposition, tau: float) -> np.ndarray:
    return operator_function(decomp, lambda lam: sinc_root(lam, tau))


def operator_norm(M: np.ndarray) -> float:
    """Largest singular value."""
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def lower_bound_constant(b: BlochSymbol, g: CoefficientField, Q: CoefficientField | None = None) -> float:
    """c_* = alpha0 |f^{-1}|^{-2} |g^{-1}|^{-1}; with f = Q^{-1/2}, |f^{-1}|^2 = |Q|."""
    q = Q.sup_norm() if Q is not None else 1.0
    return b.alpha0 / (q * g.inverse_sup_norm())
