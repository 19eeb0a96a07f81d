"""Periodic cell problem, effective matrix and related averages.

Two independent routes are provided.  :func:`solve_cell` is the Fourier-Galerkin
solver for any field.  :class:`LayeredCell` handles fields that depend on the
first coordinate only; there the cell problem reduces to an ODE solved in closed
form and integrated by composite Gauss-Legendre quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre
from scipy import integrate, optimize, sparse
from scipy.sparse import linalg as splinalg

from .fields import BlochSymbol, CoefficientField, isotropic_moduli, isotropic_tensor
from .fiber import coupling_component, galerkin, mode_box, ritz_refine, symbols_at, toeplitz
from .lattice import Lattice


class CellSolveError(np.linalg.LinAlgError):
    pass


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def hermitian_power(M: np.ndarray, p: float) -> np.ndarray:
    w, V = np.linalg.eigh(hermitian_part(np.atleast_2d(M)))
    return (V * w**p) @ V.conj().T


@dataclass(frozen=True)
class CellSolution:
    """Galerkin corrector data.  ``Lambda`` and ``g_tilde`` are indexed like ``modes``."""

    lattice: Lattice
    symbol: BlochSymbol
    cutoff: int
    modes: np.ndarray
    Lambda: np.ndarray  # (D, n, m)
    g_tilde: np.ndarray  # (D, m, m)
    g0: np.ndarray
    residual: float

    def corrector_product(self, theta) -> np.ndarray:
        """mean(g_tilde^* b(theta) Lambda)."""
        bt = self.symbol(np.asarray(theta, dtype=float))
        return np.einsum("dji,jk,dkl->il", self.g_tilde.conj(), bt, self.Lambda)

    def weighted_mean(self, Q: CoefficientField) -> np.ndarray:
        """mean(Q Lambda) as an n x m matrix."""
        return np.einsum("dij,djk->ik", Q.fourier(-self.modes), self.Lambda)

    def Lambda_mean(self) -> np.ndarray:
        zero = np.flatnonzero(np.all(self.modes == 0, axis=1))[0]
        return self.Lambda[zero]


def solve_cell(g: CoefficientField, b: BlochSymbol, cutoff: int) -> CellSolution:
    """Galerkin solution of b(D)* g (b(D) Lambda + 1) = 0 with zero-mean Lambda.

    The zero-frequency unknowns are removed, which leaves a definite system
    because the kernel of the k = 0 fiber consists of constants.
    """
    if not (g.hermitian and g.positive):
        raise ValueError("cell problem needs a positive Hermitian field")
    lat = g.lattice
    n, m = b.n, b.m
    box = mode_box(lat.dim, cutoff)
    side = 2 * cutoff + 1
    comp = (coupling_component([g], cutoff, lat.dim) + cutoff) @ (side ** np.arange(lat.dim - 1, -1, -1))
    modes = box[comp]
    sym = symbols_at(b, lat, modes, np.zeros(lat.dim))
    A = galerkin(g, sym, modes, cutoff)
    z = int(np.flatnonzero(np.all(modes == 0, axis=1))[0])
    keep = np.ones(len(modes), dtype=bool)
    keep[z] = False
    dof = np.repeat(keep, n)
    # right-hand side from the constant columns of the identity
    rhs = -(np.conj(np.swapaxes(sym, 1, 2)) @ g.fourier(modes)).reshape(len(modes) * n, m)
    A_red = A[np.ix_(dof, dof)]
    rhs_red = rhs[dof]
    if A_red.size:
        try:
            x = sla.solve(A_red, rhs_red, assume_a="pos")
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            cond = np.linalg.cond(A_red)
            raise CellSolveError(f"reduced cell system is singular (condition number {cond:.3e})") from exc
        residual = float(np.abs(A_red @ x - rhs_red).max())
    else:
        x = np.zeros((0, m), dtype=complex)
        residual = 0.0
    lam = np.zeros((len(modes) * n, m), dtype=complex)
    lam[dof] = x
    lam = lam.reshape(len(modes), n, m)
    strain = sym @ lam  # b(nu) Lambda_nu, (D, m, m)
    strain[z] += np.eye(m)
    T = toeplitz(g, modes, cutoff)
    g_tilde = (T @ strain.reshape(len(modes) * m, m)).reshape(len(modes), m, m)
    g0 = hermitian_part(g_tilde[z])
    Lambda_full = np.zeros((len(box), n, m), dtype=complex)
    gt_full = np.zeros((len(box), m, m), dtype=complex)
    Lambda_full[comp] = lam
    gt_full[comp] = g_tilde
    return CellSolution(lat, b, cutoff, box, Lambda_full, gt_full, g0, residual)


def voigt_reuss(g: CoefficientField) -> tuple[np.ndarray, np.ndarray]:
    """(harmonic mean, arithmetic mean) of the field over the cell."""
    return hermitian_part(g.harmonic_mean()), hermitian_part(g.mean())


@dataclass(frozen=True)
class WeightedConstants:
    Q_bar: np.ndarray
    f0: np.ndarray
    Lambda_Q0: np.ndarray  # constant n x m shift
    mean_QLambda: np.ndarray


def weighted_constants(
    cell: "CellSolution | LayeredCell",
    Q: CoefficientField | None = None,
    f: CoefficientField | None = None,
) -> WeightedConstants:
    """Q_bar = mean(Q), f0 = Q_bar^{-1/2} and the shift Lambda_Q0 = -Q_bar^{-1} mean(Q Lambda)."""
    if Q is None and f is None:
        raise ValueError("pass Q or f")
    if Q is None:
        Q = f.pointwise(lambda F: np.linalg.inv(F @ np.conj(np.swapaxes(F, 1, 2))), name="Q", hermitian=True, positive=True)
    Q_bar = hermitian_part(Q.mean())
    mql = cell.weighted_mean(Q)
    shift = -np.linalg.solve(Q_bar, mql)
    return WeightedConstants(Q_bar=Q_bar, f0=hermitian_power(Q_bar, -0.5), Lambda_Q0=shift, mean_QLambda=mql)


# ---------------------------------------------------------------------------
# layered media: closed-form reduction and 1D quadrature
# ---------------------------------------------------------------------------


def _panel_rule(order: int):
    nodes, weights = legendre.leggauss(order)
    V = legendre.legvander(nodes, order - 1)
    # integration matrix: values at the nodes of the antiderivative from -1
    ints = np.empty((order, order))
    for j in range(order):
        unit = np.zeros(order)
        unit[j] = 1.0
        ints[:, j] = legendre.legval(nodes, legendre.legint(unit, lbnd=-1))
    total = np.array([2.0] + [0.0] * (order - 1))  # int_{-1}^{1} P_j
    S = ints @ np.linalg.inv(V)
    end = total @ np.linalg.inv(V)
    return nodes, weights, S, end


@dataclass
class LayeredCell:
    """Cell problem for a field depending on x1 only (lattice 2 pi Z^d).

    With w = D_1 Lambda the equation reduces to b_1^* g (b_1 w + 1) = C, so
    w = H^{-1}(C - b_1^* g) with H = b_1^* g b_1 and C fixed by mean(w) = 0.
    """

    g_fn: Callable[[np.ndarray], np.ndarray]
    symbol: BlochSymbol
    breakpoints: Sequence[float] = ()
    panels: int = 256
    order: int = 20

    def __post_init__(self) -> None:
        period = 2 * np.pi
        cuts = sorted({0.0, period, *[float(np.mod(p, period)) for p in self.breakpoints]})
        pieces = list(zip(cuts[:-1], cuts[1:]))
        lengths = np.array([hi - lo for lo, hi in pieces])
        counts = np.maximum(1, np.round(self.panels * lengths / period)).astype(int)
        t, wq, S, end = _panel_rule(self.order)
        xs, ws, owner = [], [], []
        edges = []
        for (lo, hi), cnt in zip(pieces, counts):
            e = np.linspace(lo, hi, cnt + 1)
            for a, bb in zip(e[:-1], e[1:]):
                h = 0.5 * (bb - a)
                xs.append(a + h * (t + 1))
                ws.append(h * wq)
                edges.append(h)
        self.x = np.concatenate(xs)
        self.w = np.concatenate(ws) / period  # weights for the mean
        self._half = np.array(edges)
        self._S, self._end = S, end
        b1 = self.symbol.matrices[0]
        G = np.asarray(self.g_fn(self.x), dtype=complex)
        H = np.conj(b1.T)[None] @ G @ b1[None]
        Hinv = np.linalg.inv(H)
        bg = np.conj(b1.T)[None] @ G
        mean = lambda F: np.tensordot(self.w, F, axes=(0, 0))  # noqa: E731
        C = np.linalg.solve(mean(Hinv), mean(Hinv @ bg))
        w = Hinv @ (C[None] - bg)
        m = self.symbol.m
        self.G = G
        self.w_field = w
        self.g_tilde = G @ (b1[None] @ w + np.eye(m)[None])
        self.g0 = hermitian_part(mean(self.g_tilde))
        lam = 1j * self._antiderivative(w)
        self.Lambda = lam - mean(lam)[None]
        self._mean = mean

    def _antiderivative(self, F: np.ndarray) -> np.ndarray:
        """int_0^x F over the quadrature nodes (F given at nodes)."""
        p = self.order
        Fp = F.reshape((-1, p) + F.shape[1:])
        out = np.empty_like(Fp)
        acc = np.zeros(F.shape[1:], dtype=F.dtype)
        for i, h in enumerate(self._half):
            out[i] = acc[None] + h * np.tensordot(self._S, Fp[i], axes=(1, 0))
            acc = acc + h * np.tensordot(self._end, Fp[i], axes=(0, 0))
        return out.reshape(F.shape)

    def mean(self, F: np.ndarray) -> np.ndarray:
        return self._mean(F)

    def corrector_product(self, theta) -> np.ndarray:
        bt = self.symbol(np.asarray(theta, dtype=float))
        return self.mean(np.conj(np.swapaxes(self.g_tilde, 1, 2)) @ bt[None] @ self.Lambda)

    def weighted_mean(self, Q: CoefficientField | Callable) -> np.ndarray:
        q = Q(self.x) if callable(Q) else Q.evaluate(np.stack([self.x] + [np.zeros_like(self.x)] * (self.symbol.dim - 1), axis=-1))
        return self.mean(np.asarray(q) @ self.Lambda)

    def Lambda_mean(self) -> np.ndarray:
        return self.mean(self.Lambda)


def _lobatto_basis(order: int, quad: int):
    """Lagrange basis on Gauss-Lobatto nodes of [-1, 1], tabulated at Gauss points."""
    interior = legendre.legroots(legendre.legder(np.eye(order + 1)[order])) if order > 1 else np.zeros(0)
    nodes = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    t, wq = legendre.leggauss(quad)
    V = np.vander(nodes, order + 1, increasing=True)
    coef = np.linalg.inv(V)  # column j holds the monomial coefficients of basis j
    powers = np.vander(t, order + 1, increasing=True)
    dpowers = np.zeros_like(powers)
    dpowers[:, 1:] = powers[:, :-1] * np.arange(1, order + 1)
    return t, wq, powers @ coef, dpowers @ coef


class _LUOperator(splinalg.LinearOperator):
    def __init__(self, lu):
        super().__init__(np.complex128, lu.shape)
        self._lu = lu

    def _matvec(self, x):
        return self._lu.solve(np.asarray(x, dtype=np.complex128).reshape(-1))


@dataclass
class LayeredBands:
    """Bloch bands of the zero-mode block for a field depending on x1 only.

    The block is the 1D operator u -> (-i b_1 d/dx + b(k))* g (-i b_1 d/dx + b(k)) u
    on 2 pi-periodic u, discretised by continuous piecewise polynomials whose
    element edges include the jumps of g.  Eigenvalues are recomputed as
    factored Rayleigh quotients, so small ones keep relative accuracy.
    """

    g_fn: Callable[[np.ndarray], np.ndarray]
    symbol: BlochSymbol
    breakpoints: Sequence[float] = ()
    elements: int = 64
    order: int = 10
    polish: int = 2

    def __post_init__(self) -> None:
        period = 2 * np.pi
        cuts = sorted({0.0, period, *[float(np.mod(p, period)) for p in self.breakpoints]})
        edges = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            cnt = max(1, int(round(self.elements * (hi - lo) / period)))
            edges.extend(np.linspace(lo, hi, cnt + 1)[:-1])
        edges = np.array(edges + [period])
        p = self.order
        t, wq, phi, dphi = _lobatto_basis(p, p + 6)
        half = 0.5 * np.diff(edges)
        ne = len(half)
        self.x = (edges[:-1, None] + half[:, None] * (t[None, :] + 1)).reshape(-1)
        self.w = (half[:, None] * wq[None, :]).reshape(-1) / period
        self._phi = phi
        self._dphi = dphi / half[:, None, None]  # (ne, q, p+1), derivative in x
        self._dofs = (np.arange(ne)[:, None] * p + np.arange(p + 1)[None, :]) % (ne * p)
        self.size = ne * p
        self.G = np.asarray(self.g_fn(self.x), dtype=complex)
        w, U = np.linalg.eigh(self.G)
        self._root = (U * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) @ np.conj(np.swapaxes(U, 1, 2))
        self._ne, self._q = ne, len(t)

    def _values(self, U: np.ndarray):
        """Function values and x-derivatives at quadrature points; U is (size, n, C)."""
        loc = U[self._dofs]  # (ne, p+1, n, C)
        val = np.einsum("qi,einc->eqnc", self._phi, loc)
        der = np.einsum("eqi,einc->eqnc", self._dphi, loc)
        return val.reshape(-1, *U.shape[1:]), der.reshape(-1, *U.shape[1:])

    def strain(self, U: np.ndarray, k) -> np.ndarray:
        val, der = self._values(U)
        b1 = self.symbol.matrices[0]
        bk = self.symbol(np.asarray(k, dtype=float))
        return -1j * b1[None] @ der + bk[None] @ val

    def matrices(self, k) -> tuple[sparse.csc_matrix, sparse.csc_matrix]:
        """Sparse stiffness and mass matrices, dofs ordered node by node with n components."""
        n, m = self.symbol.n, self.symbol.m
        p1 = self.order + 1
        b1 = self.symbol.matrices[0]
        bk = self.symbol(np.asarray(k, dtype=float))
        ne, q = self._ne, self._q
        phi = np.broadcast_to(self._phi, (ne, q, p1))
        # S[e, x, :, (i, c)] maps component c of local dof i to the strain at x
        S = -1j * self._dphi[..., None, None] * b1[None, None, None] + phi[..., None, None] * bk[None, None, None]
        S = np.moveaxis(S, 3, 2).reshape(ne, q, m, p1 * n)
        G = self.G.reshape(ne, q, m, m)
        wts = self.w.reshape(ne, q)
        Kloc = np.einsum("eq,eqai,eqab,eqbj->eij", wts, S.conj(), G, S)
        Mloc = np.einsum("eq,eqi,eqj->eij", wts, phi, phi)
        Mloc = np.einsum("eij,cd->eicjd", Mloc, np.eye(n)).reshape(ne, p1 * n, p1 * n)
        idx = (self._dofs[:, :, None] * n + np.arange(n)[None, None, :]).reshape(ne, -1)
        rows = np.repeat(idx[:, :, None], idx.shape[1], axis=2).ravel()
        cols = np.repeat(idx[:, None, :], idx.shape[1], axis=1).ravel()
        N = self.size * n
        K = sparse.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(N, N)).tocsc()
        M = sparse.coo_matrix((Mloc.ravel(), (rows, cols)), shape=(N, N)).tocsc()
        return 0.5 * (K + K.conj().T), M

    @property
    def r0(self) -> float:
        """Inscribed radius of the Brillouin zone of 2 pi Z^d."""
        return 0.5

    def constant(self, vectors: np.ndarray) -> np.ndarray:
        """Coefficients of the constant functions with the given values (n, C)."""
        return np.tile(vectors, (self.size, 1))

    def _root_strain(self, U: np.ndarray, k) -> np.ndarray:
        V = U.reshape(self.size, self.symbol.n, -1)
        st = self._root @ self.strain(V, k)  # (points, m, C)
        return st * np.sqrt(self.w)[:, None, None]

    def gram(self, k, W: np.ndarray) -> np.ndarray:
        """W^* A(k) W evaluated in factored form."""
        X = self._root_strain(W, k).reshape(-1, W.shape[1])
        return X.conj().T @ X

    def bands(self, k, count: int, extra: int = 2):
        """Lowest ``count`` Ritz pairs at k and the mass matrix.

        Shift-invert Lanczos below the spectrum delivers a slightly larger
        subspace; Rayleigh-Ritz with the stiffness in factored form then fixes
        small eigenvalues and the basis inside nearly degenerate clusters.
        """
        K, M = self.matrices(k)
        want = min(count + extra, K.shape[0] - 2)
        scale = float(abs(K.diagonal()).max())
        shift = 1e-11 * scale
        lu = splinalg.splu((K + shift * M).tocsc())
        _, vecs = splinalg.eigsh(K, k=want, M=M, sigma=-shift, which="LM", OPinv=_LUOperator(lu))
        for _ in range(self.polish):
            # block inverse iteration removes the Lanczos residual from the subspace
            vecs, _ = np.linalg.qr(lu.solve(np.asarray(M @ vecs)))
        X = self._root_strain(vecs, k).reshape(-1, want)
        vals, vecs = ritz_refine(X.conj().T @ X, vecs.conj().T @ (M @ vecs), vecs)
        return vals[:count], vecs[:, :count], M


def layered_route(case, cell_kw: dict | None = None, band_kw: dict | None = None) -> tuple[LayeredCell, LayeredBands]:
    """Quadrature cell solution and 1D band solver for a layered example."""
    g = case.g
    if not g.is_layered() or case.Q is not None:
        raise ValueError(f"{case.name}: the 1D route needs an unweighted field depending on x1 only")
    lat = g.lattice
    if not np.allclose(lat.basis, 2 * np.pi * np.eye(lat.dim)):
        raise ValueError("the 1D route assumes the lattice 2 pi Z^d")
    cuts = tuple(case.params.get("breakpoints", ()))
    return (
        LayeredCell(g.profile, case.symbol, cuts, **(cell_kw or {})),
        LayeredBands(g.profile, case.symbol, cuts, **(band_kw or {})),
    )


def layered_oracle_1d(g_fn, symbol: BlochSymbol, breakpoints: Sequence[float] = (), **kw) -> np.ndarray:
    """Effective matrix of a field depending on x1 only, by 1D quadrature."""
    return LayeredCell(g_fn, symbol, breakpoints, **kw).g0


# ---------------------------------------------------------------------------
# two-phase isotropic medium: explicit formulas
# ---------------------------------------------------------------------------

ISO_B, ISO_C = 100.0, 624.0


def _isotropic_qr(a: float, b: float = ISO_B, c: float = ISO_C) -> tuple[float, float]:
    q = np.sqrt((a - b + c + 1) * (a - b + 1))
    r = np.sqrt((a + b + c + 1) * (a + b + 1))
    return float(q), float(r)


def isotropic_B(a: float, b: float = ISO_B, c: float = ISO_C) -> float:
    q, r = _isotropic_qr(a, b, c)
    return (6 * (a + b) * q + 2 * (a - b) * r - 4 * q * r) / (r + 3 * q)


def isotropic_E(a: float, b: float = ISO_B, c: float = ISO_C) -> float:
    q, r = _isotropic_qr(a, b, c)
    return (6 * b * r - 6 * b * q - 12 * b * b + 4 * q * r) / (r + 3 * q)


def isotropic_A(a: float, b: float = ISO_B, c: float = ISO_C) -> float:
    q, r = _isotropic_qr(a, b, c)
    return 1.0 / (1 / (4 * q) + 3 / (4 * r))


def isotropic_root(b: float = ISO_B, c: float = ISO_C, bracket=(130.0, 150.0)) -> float:
    """The value of a for which B = -C/4, i.e. the germ is diagonal for every theta."""
    C = 4 * np.sqrt(c + 1)
    return float(optimize.brentq(lambda a: isotropic_B(a, b, c) + C / 4, *bracket, xtol=1e-14, rtol=1e-15))


def isotropic_constants(a: float, b: float = ISO_B, c: float = ISO_C) -> dict[str, float]:
    A, B, E = isotropic_A(a, b, c), isotropic_B(a, b, c), isotropic_E(a, b, c)
    C = 4 * np.sqrt(c + 1)
    return {"A": A, "B": B, "C": C, "E": E, "theta1_sq": (E - C / 4) / (A + E - C / 2)}


def isotropic_lambda22(x, c: float = ISO_C) -> np.ndarray:
    """Closed-form (2,2) corrector entry on [0, 2 pi), continuous and zero-mean."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(c + 1)
    branch = np.where(x < np.pi / 2, 0.0, np.where(x < 1.5 * np.pi, np.pi, 2 * np.pi))
    return 2j * (np.arctan(np.tan(x) / s) + branch - x)


def isotropic_quadrature(a: float, b: float = ISO_B, c: float = ISO_C) -> dict[str, complex]:
    """S, T and the degenerate-direction coefficient from explicit 1D integrals."""
    consts = isotropic_constants(a, b, c)
    A = consts["A"]
    cuts = [0.0, np.pi / 2, 1.5 * np.pi, 2 * np.pi]

    def mean(fn):
        tot = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            tot += integrate.quad(fn, lo, hi, limit=400, epsabs=1e-9, epsrel=1e-11)[0]
        return tot / (2 * np.pi)

    def moduli(x):
        return isotropic_moduli(np.array([x]), a, b, c)

    def ratio(x):
        K, mu = moduli(x)
        return float(((K - mu) / (K + mu))[0])

    rho = mean(ratio)

    def lam(x):
        return float(isotropic_lambda22(np.array([x]), c).imag[0])

    def s_integrand(x):
        return ratio(x) * lam(x)

    def t_integrand(x):
        K, mu = moduli(x)
        return float((4 * K * mu / (K + mu))[0] + ratio(x) * rho * A) * lam(x)

    S = 1j * A * mean(s_integrand)
    T = 1j * mean(t_integrand)
    th1 = consts["theta1_sq"]
    t1, t2 = np.sqrt(th1), np.sqrt(1 - th1)
    off = S * t1**2 * t2 + np.conj(T) * t2**3
    return {"S": S, "T": T, "mu_hat": 0.5 * abs(off), **consts}


def isotropic_layered_cell(a: float, **kw) -> LayeredCell:
    from .fields import symbol_elasticity

    def g_fn(x):
        K, mu = isotropic_moduli(x, a)
        return isotropic_tensor(K, mu)

    return LayeredCell(g_fn, symbol_elasticity(2), breakpoints=(np.pi / 2,), **kw)
