"""Threshold characteristics along a direction theta.

The lowest band functions of the fiber operator at k = t theta behave like
``gamma_l t^2 + mu_l t^3 + O(t^4)``.  The ``gamma_l`` are eigenvalues of the germ
``S(theta) = b(theta)* g0 b(theta)`` (generalised with weight Q_bar) and the
``mu_l`` come from the third-order operator ``N(theta) = b(theta)* L(theta) b(theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cell import WeightedConstants, hermitian_part
from .fiber import CLUSTER_GAP, assemble, cluster_runs, quadrature_gram, refined_eigenpairs, symbols_at
from .fields import BlochSymbol

INTERACTION_TOL = 1e-10


class BranchTrackingError(RuntimeError):
    pass


def germ_matrix(g0: np.ndarray, b: BlochSymbol, theta) -> np.ndarray:
    bt = b(np.asarray(theta, dtype=float))
    return hermitian_part(bt.conj().T @ g0 @ bt)


def generalized_spectrum(S: np.ndarray, Q_bar: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Ascending gamma with Q_bar-orthonormal eigenvectors (columns)."""
    if Q_bar is None:
        return np.linalg.eigh(hermitian_part(S))
    return sla.eigh(hermitian_part(S), hermitian_part(np.atleast_2d(Q_bar)))


def matrix_L(cell, b: BlochSymbol, theta, shift: np.ndarray | None = None, g0: np.ndarray | None = None) -> np.ndarray:
    """L(theta) = M + M^*, M = mean(g_tilde^* b(theta) Lambda); optionally shifted by Lambda_Q0."""
    M = cell.corrector_product(theta)
    if shift is not None:
        g0 = cell.g0 if g0 is None else g0
        M = M + g0 @ b(np.asarray(theta, dtype=float)) @ shift
    return M + M.conj().T


@dataclass
class NSplit:
    N: np.ndarray
    N0: np.ndarray
    Nstar: np.ndarray
    mus: np.ndarray
    zetas: np.ndarray  # rotated inside clusters so that N is diagonal there
    clusters: list[np.ndarray]
    c_circ: float
    ambiguous: bool = False
    alternative: "NSplit | None" = None


def _split(N, gammas, zetas, Qb, clusters, c_star) -> NSplit:
    n = len(gammas)
    z = zetas.astype(complex)
    mus = np.zeros(n)
    projections = []
    for idx in clusters:
        Z = zetas[:, idx]
        block = hermitian_part(Z.conj().T @ N @ Z)
        w, U = np.linalg.eigh(block)
        z[:, idx] = Z @ U
        mus[idx] = w
        projections.append(Z @ Z.conj().T @ Qb)
    N0 = sum(P.conj().T @ N @ P for P in projections)
    c_circ = np.inf
    for a in range(len(clusters)):
        for c in range(len(clusters)):
            if a == c:
                continue
            if np.linalg.norm(projections[a].conj().T @ N @ projections[c], 2) > INTERACTION_TOL:
                gap = abs(gammas[clusters[a][0]] - gammas[clusters[c][0]]) / n
                c_circ = min(c_circ, c_star, gap)
    return NSplit(N, N0, N - N0, mus, z, clusters, float(c_circ))


def operator_N(
    L: np.ndarray,
    b: BlochSymbol,
    theta,
    gammas: np.ndarray,
    zetas: np.ndarray,
    Q_bar: np.ndarray | None = None,
    c_star: float = np.inf,
    gap_tol: float = CLUSTER_GAP,
) -> NSplit:
    """N = b(theta)* L b(theta), its cluster split and the coefficients mu_l."""
    bt = b(np.asarray(theta, dtype=float))
    N = hermitian_part(bt.conj().T @ L @ bt)
    Qb = np.eye(len(gammas)) if Q_bar is None else np.atleast_2d(Q_bar)
    clusters = cluster_runs(gammas, gap_tol)
    out = _split(N, gammas, zetas, Qb, clusters, c_star)
    # flag near-threshold gaps and report the other reading as well
    rel = [
        (gammas[i + 1] - gammas[i]) / max(abs(gammas[i]), abs(gammas[i + 1]), 1e-300) for i in range(len(gammas) - 1)
    ]
    near = [r for r in rel if gap_tol / 10 <= r <= 10 * gap_tol]
    if near:
        alt_tol = 10 * gap_tol if any(r > gap_tol for r in near) else gap_tol / 10
        alt_clusters = cluster_runs(gammas, alt_tol * 1.0000001)
        out.ambiguous = True
        out.alternative = _split(N, gammas, zetas, Qb, alt_clusters, c_star)
    return out


@dataclass
class GermPackage:
    theta: np.ndarray
    S: np.ndarray
    Q_bar: np.ndarray
    gammas: np.ndarray
    zetas: np.ndarray
    L: np.ndarray
    N_hat: np.ndarray
    N_Q: np.ndarray
    N0: np.ndarray
    Nstar: np.ndarray
    mus: np.ndarray
    clusters: list[np.ndarray]
    c_circ: float
    ambiguous: bool = False
    split: NSplit | None = field(default=None, repr=False)


def germ_package(
    cell,
    b: BlochSymbol,
    theta,
    weights: WeightedConstants | None = None,
    c_star: float = np.inf,
    gap_tol: float = CLUSTER_GAP,
) -> GermPackage:
    theta = np.asarray(theta, dtype=float)
    S = germ_matrix(cell.g0, b, theta)
    Q_bar = np.eye(b.n) if weights is None else weights.Q_bar
    gammas, zetas = generalized_spectrum(S, None if weights is None else Q_bar)
    L = matrix_L(cell, b, theta)
    bt = b(theta)
    N_hat = hermitian_part(bt.conj().T @ L @ bt)
    LQ = L if weights is None else matrix_L(cell, b, theta, shift=weights.Lambda_Q0)
    split = operator_N(LQ, b, theta, gammas, zetas, Q_bar if weights is not None else None, c_star, gap_tol)
    return GermPackage(
        theta=theta,
        S=S,
        Q_bar=Q_bar,
        gammas=gammas,
        zetas=split.zetas,
        L=L,
        N_hat=N_hat,
        N_Q=split.N,
        N0=split.N0,
        Nstar=split.Nstar,
        mus=split.mus,
        clusters=split.clusters,
        c_circ=split.c_circ,
        ambiguous=split.ambiguous,
        split=split,
    )


# ---------------------------------------------------------------------------
# numerical check of the expansion against Bloch bands
# ---------------------------------------------------------------------------


@dataclass
class ThresholdFit:
    theta: np.ndarray
    t: np.ndarray
    bands: np.ndarray  # (len(t), n) eigenvalues of the compressed operator, per germ index
    gamma_fit: np.ndarray
    mu_fit: np.ndarray
    residual: float
    labels: np.ndarray  # germ index paired with each fitted value
    gamma_germ: np.ndarray
    mu_germ: np.ndarray
    coefficients: np.ndarray = field(default=None, repr=False)  # (degree+1, n, n) fitted matrices

    @property
    def gamma_error(self) -> float:
        return float(np.max(np.abs(self.gamma_fit - self.gamma_germ) / np.abs(self.gamma_germ)))

    @property
    def mu_error(self) -> float:
        return float(np.max(np.abs(self.mu_fit - self.mu_germ)))


def _zero_block(bundle) -> np.ndarray:
    return bundle.zero_block


def lowest_bands(bundle, k, count: int, modes: np.ndarray | None = None, refine: bool = True):
    """Lowest eigenpairs of the fiber block that contains the zero mode.

    With ``refine`` the pairs are recomputed by Rayleigh-Ritz with the stiffness
    in factored form, which keeps relative accuracy near the bottom of the spectrum.
    """
    modes = _zero_block(bundle) if modes is None else modes
    op = assemble(bundle.g, bundle.symbol, k, bundle.cutoff, Q=bundle.Q, modes=modes)
    if op.mass is None:
        vals, vecs = sla.eigh(op.matrix, subset_by_index=[0, count - 1])
    else:
        vals, vecs = sla.eigh(op.matrix, op.mass, subset_by_index=[0, count - 1])
    if refine:
        vals, vecs = refined_eigenpairs(op, bundle.g, bundle.symbol, vecs)
    return vals, vecs, op


class GalerkinBands:
    """Band source backed by the Fourier-Galerkin zero-mode block of a bundle."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.modes = _zero_block(bundle)
        self.r0 = bundle.lattice.r0
        self._z = int(np.flatnonzero(np.all(self.modes == 0, axis=1))[0])

    def bands(self, k, count: int):
        vals, vecs, op = lowest_bands(self.bundle, k, count, self.modes)
        return vals, vecs, op.mass

    def gram(self, k, W: np.ndarray) -> np.ndarray:
        bd = self.bundle
        sym = symbols_at(bd.symbol, bd.lattice, self.modes, k)
        return quadrature_gram(bd.g, self.modes, sym @ W.reshape(len(self.modes), bd.n, -1))

    def constant(self, vectors: np.ndarray) -> np.ndarray:
        n = self.bundle.n
        ref = np.zeros((len(self.modes) * n, vectors.shape[1]), dtype=complex)
        ref[self._z * n : (self._z + 1) * n, :] = vectors
        return ref


FIT_DEGREE = 4
FIT_WINDOW = 1 / 32  # fraction of r0 covered by the default samples


def _mass_apply(M, X):
    return X if M is None else M @ X


def _analytic_basis(V: np.ndarray, M, Z0: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(V) that depends analytically on the parameter.

    The columns are the projections of ``Z0`` onto span(V), orthonormalised
    symmetrically, so they vary smoothly even where eigenvalues cross.
    """
    W = V @ (V.conj().T @ _mass_apply(M, Z0))
    G = hermitian_part(W.conj().T @ _mass_apply(M, W))
    w, U = np.linalg.eigh(G)
    if w.min() < 1e-6 * w.max():
        raise BranchTrackingError("band subspace has lost contact with the germ eigenvectors")
    return W @ (U / np.sqrt(w)) @ U.conj().T


def threshold_fit(
    source, theta, t_samples=None, germ: GermPackage | None = None, degree: int = FIT_DEGREE
) -> ThresholdFit:
    """Fit the lowest bands along theta and pair the coefficients with the germ.

    The fiber operator is compressed to the span of the n lowest Bloch
    eigenvectors, in the analytic basis obtained by projecting the germ
    eigenvectors (as constant functions).  Its entries divided by t^2 are
    fitted by polynomials in t; gamma and mu are the eigenvalues of the cluster
    blocks of the t^0 and t^1 coefficients.  The compressed operator stays
    analytic when branches cross or nearly cross, which the eigenvalues
    themselves do not.

    ``source`` is a bundle (Fourier-Galerkin bands) or any object with
    ``bands(k, count)``, ``gram(k, W)``, ``constant(vectors)`` and ``r0``.
    """
    theta = np.asarray(theta, dtype=float)
    if hasattr(source, "cell"):
        if germ is None:
            germ = germ_package(source.cell, source.symbol, theta, source.weights, source.c_star)
        source = GalerkinBands(source)
    elif germ is None:
        raise ValueError("pass the germ package that goes with this band source")
    r0 = source.r0
    if t_samples is None:
        t_samples = FIT_WINDOW * r0 * np.arange(1, 21) / 20
    t = np.sort(np.asarray(t_samples, dtype=float))
    if len(t) < 4 or t[0] <= 0 or t[-1] > r0 / 2 * (1 + 1e-12):
        raise ValueError("need at least 4 samples in (0, r0/2]")
    if len(t) < degree + 2:
        raise ValueError(f"need at least {degree + 2} samples for a degree-{degree} fit")
    n = len(germ.gammas)
    Z0 = source.constant(germ.zetas)
    compressed = np.empty((len(t), n, n), dtype=complex)
    bands = np.empty((len(t), n))
    prev = None
    for i, ti in enumerate(t):
        k = ti * theta
        _, V, M = source.bands(k, n)
        W = _analytic_basis(V, M, Z0)
        if prev is not None:
            # the subspace must move continuously; a jump means another band entered
            s = np.linalg.svd(prev.conj().T @ _mass_apply(M, W), compute_uv=False)
            if s.min() < 0.5:
                raise BranchTrackingError(f"lost continuity of the band subspace at t = {ti:g}")
        prev = W
        B = hermitian_part(source.gram(k, W))
        compressed[i] = B
        bands[i] = np.linalg.eigvalsh(B)
    y = compressed.reshape(len(t), -1) / t[:, None] ** 2
    V = np.vander(t, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    fit_res = float(np.abs(V @ coef - y).max() / np.abs(y).max())
    coef = coef.reshape(degree + 1, n, n)
    gamma_fit = np.empty(n)
    mu_fit = np.empty(n)
    for idx in germ.clusters:
        blk = np.ix_(idx, idx)
        gamma_fit[idx] = np.linalg.eigvalsh(hermitian_part(coef[0][blk]))
        mu_fit[idx] = np.linalg.eigvalsh(hermitian_part(coef[1][blk]))
    return ThresholdFit(
        theta=theta,
        t=t,
        bands=bands,
        gamma_fit=gamma_fit,
        mu_fit=mu_fit,
        residual=fit_res,
        labels=np.arange(n),
        gamma_germ=germ.gammas,
        mu_germ=germ.mus,
        coefficients=coef,
    )
