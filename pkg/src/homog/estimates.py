"""Operator error estimates for the homogenized wave propagator, measured numerically.

The central quantity is the fiber discrepancy

    || (cos(tau/eps A(k)^{1/2}) - cos(tau/eps A0(k)^{1/2})) R(k, eps)^{s/2} ||

with ``R(k, eps) = eps^2 (|D + k|^2 + eps^2)^{-1}``.  For weighted media the
cosines are those of the pairs (A, Toeplitz(Q)) and (A0, Q_bar), which equal
f cos(.) f^{-1} and f0 cos(.) f0^{-1} for the sandwiched operators.

Because the smoothing weight is diagonal in the Fourier modes and A0(k) is
block diagonal per mode, the discrepancy splits over the coupling components
of A(k); the norm is the largest block norm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar

from .bundle import Bundle
from .fiber import EigenDecomposition, assemble, coupling_component, eigendecompose, mode_box, operator_function, symbols_at
from .germ import germ_package
from .lattice import KGrid

PHASE_LIMIT = 0.1  # rad, largest tolerated phase drift of a retained eigenvalue
WEIGHT_FLOOR = 1e-2  # smoothing weight below which an eigenvalue is not retained
SIMPSON_TOL = 1e-6


class PhaseResolutionError(ValueError):
    """The cutoff cannot resolve the phases tau/eps sqrt(lambda) of the retained bands."""


class SharpnessRefused(ValueError):
    """The sharpness construction needs a nonzero third-order coefficient."""


@dataclass(frozen=True)
class ErrorSample:
    k: np.ndarray
    eps: float
    tau: float
    s: float
    fiber_error: float
    cutoff: int
    weighted: bool = False


def _smoothing(freq2: np.ndarray, eps: float, s: float) -> np.ndarray:
    return (eps**2 / (freq2 + eps**2)) ** (s / 2)


def _effective_cosines(symbols: np.ndarray, g0: np.ndarray, Q_bar: np.ndarray | None, phase: float) -> np.ndarray:
    """cos(phase sqrt(Q_bar^{-1} b* g0 b)) for every mode, shape (D, n, n)."""
    S = np.conj(np.swapaxes(symbols, 1, 2)) @ g0[None] @ symbols
    if Q_bar is None:
        w, U = np.linalg.eigh(0.5 * (S + np.conj(np.swapaxes(S, 1, 2))))
        c = np.cos(phase * np.sqrt(np.clip(w, 0.0, None)))
        return (U * c[:, None, :]) @ np.conj(np.swapaxes(U, 1, 2))
    qw, qU = np.linalg.eigh(Q_bar)
    left = (qU / np.sqrt(qw)) @ qU.conj().T
    right = (qU * np.sqrt(qw)) @ qU.conj().T
    C = left[None] @ S @ left[None]
    w, U = np.linalg.eigh(0.5 * (C + np.conj(np.swapaxes(C, 1, 2))))
    c = np.cos(phase * np.sqrt(np.clip(w, 0.0, None)))
    return left[None] @ ((U * c[:, None, :]) @ np.conj(np.swapaxes(U, 1, 2))) @ right[None]


class FiberSpectrum:
    """Lazy per-block spectral data of A(k) and A0(k) at one quasimomentum.

    Blocks are decomposed on first use, so evaluations at several (eps, tau, s)
    share one eigendecomposition per block and skip blocks whose smoothing
    weight cannot beat the current maximum.
    """

    def __init__(self, bundle: Bundle, k):
        self.bundle = bundle
        self.k = np.asarray(k, dtype=float).reshape(bundle.lattice.dim)
        lat = bundle.lattice
        self.box = mode_box(lat.dim, bundle.cutoff)
        xi = lat.frequencies(self.box) + self.k[None, :]
        self.freq2 = np.sum(xi**2, axis=1)
        self.blocks = [np.asarray(c) for c in bundle.components]
        self._min_freq2 = np.array([self.freq2[c].min() for c in self.blocks])
        self._decomp: dict[int, object] = {}
        self.weighted = bundle.Q is not None
        if self.weighted:
            qmax = bundle.Q.sup_norm()
            qmin = 1.0 / bundle.Q.inverse_sup_norm()
            qb = np.linalg.eigvalsh(np.atleast_2d(bundle.Q_bar))
            # cosines of pairs are contractions in the energy norms only
            self.contraction = math.sqrt(qmax / qmin) + math.sqrt(qb.max() / qb.min())
        else:
            self.contraction = 2.0

    def decomposition(self, i: int):
        if i not in self._decomp:
            bd = self.bundle
            modes = self.box[self.blocks[i]]
            op = assemble(bd.g, bd.symbol, self.k, bd.cutoff, Q=bd.Q, modes=modes)
            sym = symbols_at(bd.symbol, bd.lattice, modes, self.k)
            self._decomp[i] = (eigendecompose(op), sym)
        return self._decomp[i]

    def block_error(self, i: int, eps: float, tau: float, s: float) -> float:
        bd = self.bundle
        dec, sym = self.decomposition(i)
        phase = tau / eps
        exact = operator_function(dec, lambda lam: np.cos(phase * np.sqrt(lam)))
        eff = _effective_cosines(sym, np.asarray(bd.g0, dtype=complex), bd.Q_bar, phase)
        diff = exact - sla.block_diag(*eff)
        weight = np.repeat(_smoothing(self.freq2[self.blocks[i]], eps, s), bd.n)
        return float(np.linalg.norm(diff * weight[None, :], 2))

    def error(self, eps: float, tau: float, s: float) -> float:
        if eps <= 0:
            raise ValueError("eps must be positive")
        if tau == 0:
            return 0.0
        bound = self.contraction * _smoothing(self._min_freq2, eps, s)
        best = 0.0
        for i in np.argsort(-bound):
            if bound[i] <= best:
                break
            best = max(best, self.block_error(int(i), eps, tau, s))
        return best


def phase_drift(bundle: Bundle, k, eps: float, tau: float, s: float, weight_floor: float = WEIGHT_FLOOR) -> float:
    """Largest tau/eps |sqrt(lambda_N) - sqrt(lambda_2N)| over the retained bands of the zero block.

    A band is retained when the smoothing weight at its frequency scale is above
    ``weight_floor``; bands below it contribute less than twice the floor.
    """
    from .bundle import prepare

    lat = bundle.lattice
    k = np.asarray(k, dtype=float).reshape(lat.dim)
    # frequencies with weight above the floor: |xi|^2 <= eps^2 (floor^{-2/s} - 1)
    xi_max = eps * math.sqrt(max(weight_floor ** (-2.0 / s) - 1.0, 0.0)) if s > 0 else np.inf
    lam_cap = bundle.symbol.alpha1 * bundle.g.sup_norm() * (xi_max**2 + 1e-300)
    if bundle.Q is not None:
        lam_cap *= bundle.Q.inverse_sup_norm()
    fine = prepare(bundle.case, 2 * bundle.cutoff)

    def low(bd):
        op = assemble(bd.g, bd.symbol, k, bd.cutoff, Q=bd.Q, modes=bd.zero_block)
        return eigendecompose(op).clamped()

    coarse_vals = low(bundle)
    fine_vals = low(fine)
    keep = coarse_vals <= max(lam_cap, coarse_vals[: bundle.n].max())
    count = int(keep.sum())
    diff = np.abs(np.sqrt(coarse_vals[:count]) - np.sqrt(fine_vals[:count]))
    return float(abs(tau) / eps * diff.max()) if count else 0.0


def fiber_error(
    bundle: Bundle,
    k,
    eps: float,
    tau: float,
    s: float,
    sandwiched: bool | None = None,
    spectrum: FiberSpectrum | None = None,
    check_phase: bool = False,
) -> ErrorSample:
    """Discrepancy of the two cosines at quasimomentum k, smoothed by R(k, eps)^{s/2}.

    ``sandwiched`` defaults to whether the case carries a density; asking for it
    on an unweighted case is an error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if s < 0:
        raise ValueError("s must be non-negative")
    weighted = bundle.Q is not None
    if sandwiched and not weighted:
        raise ValueError("sandwiched error needs a case with a density Q")
    if sandwiched is False and weighted:
        raise ValueError("a weighted case only has the sandwiched error")
    if check_phase:
        drift = phase_drift(bundle, k, eps, tau, s)
        if drift >= PHASE_LIMIT:
            raise PhaseResolutionError(
                f"phase drift {drift:.3g} rad at cutoff {bundle.cutoff}; try cutoff {2 * bundle.cutoff} or larger"
            )
    spec = spectrum if spectrum is not None else FiberSpectrum(bundle, k)
    value = spec.error(eps, tau, s)
    return ErrorSample(spec.k, float(eps), float(tau), float(s), value, bundle.cutoff, weighted)


# ---------------------------------------------------------------------------
# sup over the Brillouin zone and rates
# ---------------------------------------------------------------------------


@dataclass
class GlobalError:
    value: float
    k: np.ndarray
    grid_value: float
    grid_k: np.ndarray
    refinement_delta: float
    samples: list[ErrorSample] = field(default_factory=list, repr=False)


def _grid_spacing(kgrid: KGrid) -> float:
    pts = kgrid.points
    if len(pts) < 2:
        return 0.0
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    d[d == 0] = np.inf
    return float(d.min())


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def global_errors(
    bundle: Bundle,
    kgrid: KGrid,
    eps_list: Sequence[float],
    tau,
    s: float,
    refine: bool = True,
    workers: int = 1,
) -> list[GlobalError]:
    """Max over the k-grid of the fiber error for several eps, sharing decompositions.

    ``tau`` is a number or a sequence matching ``eps_list``.  With ``refine``
    the maximum is polished by a bounded 1D search along the ray through the
    grid argmax, within one grid spacing of it.
    """
    eps_list = [float(e) for e in eps_list]
    taus = [float(tau)] * len(eps_list) if np.ndim(tau) == 0 else [float(t) for t in tau]
    if len(taus) != len(eps_list):
        raise ValueError("tau list must match eps list")

    def at_k(k):
        spec = FiberSpectrum(bundle, k)
        return [spec.error(e, t, s) for e, t in zip(eps_list, taus)]

    table = np.array(_map(at_k, list(kgrid.points), workers))  # (K, E)
    h = _grid_spacing(kgrid)
    lat = bundle.lattice
    out = []
    for j, (e, t) in enumerate(zip(eps_list, taus)):
        i = int(np.argmax(table[:, j]))
        k_best = kgrid.points[i].copy()
        grid_val = float(table[i, j])
        best_val, best_k = grid_val, k_best
        r = float(np.linalg.norm(k_best))
        if refine and h > 0 and r > 0:
            theta = k_best / r

            def neg(tt):
                kk = tt * theta
                if not lat.in_zone(kk):
                    return 0.0
                return -FiberSpectrum(bundle, kk).error(e, t, s)

            res = minimize_scalar(neg, bounds=(max(r - h, 1e-9), r + h), method="bounded", options={"xatol": 1e-4 * max(h, 1e-9)})
            if -res.fun > best_val:
                best_val, best_k = float(-res.fun), res.x * theta
        samples = [
            ErrorSample(kgrid.points[i2], e, t, s, float(table[i2, j]), bundle.cutoff, bundle.Q is not None)
            for i2 in range(len(kgrid.points))
        ]
        out.append(GlobalError(best_val, np.asarray(best_k), grid_val, k_best, best_val - grid_val, samples))
    return out


def global_error(bundle: Bundle, kgrid: KGrid, eps: float, tau: float, s: float, refine: bool = True, workers: int = 1) -> GlobalError:
    """Approximate ess-sup over the zone of the fiber error, with its argmax."""
    return global_errors(bundle, kgrid, [eps], tau, s, refine, workers)[0]


@dataclass
class RateReport:
    eps: np.ndarray
    errors: np.ndarray
    argmax: np.ndarray
    slope: float
    intercept: float
    expectation: str  # "at-least" or "at-most"
    threshold: float
    passed: bool
    s: float
    tau: float | str
    refinement: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "errors": self.errors.tolist(),
            "argmax": self.argmax.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "expectation": self.expectation,
            "threshold": self.threshold,
            "passed": self.passed,
            "s": self.s,
            "tau": self.tau,
            "refinement": None if self.refinement is None else self.refinement.tolist(),
        }


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def _check_eps_list(eps_list) -> np.ndarray:
    eps = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    if len(eps) < 4:
        raise ValueError("a rate fit needs at least 4 eps values")
    if eps[0] / eps[-1] < 4 * (1 - 1e-12):
        raise ValueError("eps values must span at least two octaves")
    return eps


def rate_experiment(
    bundle: Bundle,
    s: float,
    tau: float,
    eps_list: Sequence[float],
    kgrid: KGrid,
    expectation: str = "at-least",
    threshold: float = 0.95,
    refine: bool = True,
    workers: int = 1,
) -> RateReport:
    """Global error over eps and its log-log slope.

    ``expectation`` "at-least" passes when slope >= threshold (a predicted O(eps)
    rate); "at-most" passes when slope <= threshold (a predicted failure).
    """
    if expectation not in ("at-least", "at-most"):
        raise ValueError("expectation must be 'at-least' or 'at-most'")
    eps = _check_eps_list(eps_list)
    res = global_errors(bundle, kgrid, eps, tau, s, refine, workers)
    errors = np.array([r.value for r in res])
    slope, intercept = loglog_slope(eps, errors)
    passed = slope >= threshold if expectation == "at-least" else slope <= threshold
    return RateReport(
        eps=eps,
        errors=errors,
        argmax=np.array([r.k for r in res]),
        slope=slope,
        intercept=intercept,
        expectation=expectation,
        threshold=threshold,
        passed=bool(passed),
        s=float(s),
        tau=float(tau),
        refinement=np.array([r.refinement_delta for r in res]),
    )


# ---------------------------------------------------------------------------
# sharpness
# ---------------------------------------------------------------------------


@dataclass
class SharpnessReport:
    theta: np.ndarray
    indices: np.ndarray  # effective indices base * k
    base: int
    gamma: float
    mu: float
    eps: np.ndarray
    t: np.ndarray
    q: np.ndarray
    growth: float  # q at the largest index over q at the smallest
    spread: float  # q_max / q_min
    s: float
    passed: bool


def sharpness_probe(
    bundle: Bundle,
    theta0,
    tau: float,
    s: float,
    k_indices: Sequence[int] = (2, 4, 8),
    base: int | None = None,
    zone_fraction: float = 0.25,
    growth_threshold: float = 2.0,
    bounded_threshold: float = 1.5,
) -> SharpnessReport:
    """q_k = E(eps_k)/eps_k along eps_k = gamma^{3/2} |tau| / (2 pi k^2 |mu|) at k = t_k theta0.

    On this sequence t_k = gamma/(k |mu|) and the two cosines are exactly out of
    phase to leading order.  When the smallest t_k falls outside ``zone_fraction``
    times r0 every index is multiplied by the smallest integer ``base`` that
    brings it inside; ratios between indices are unchanged.  For s < 2 the
    probe passes when q grows by ``growth_threshold``; for s = 2 it passes
    when q_max/q_min stays within ``bounded_threshold``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    theta0 = theta0 / np.linalg.norm(theta0)
    if s > 2:
        raise ValueError("the probe is defined for s <= 2")
    if tau == 0:
        raise ValueError("tau must be nonzero")
    pkg = germ_package(bundle.cell, bundle.symbol, theta0, bundle.weights, bundle.c_star)
    l = int(np.argmax(np.abs(pkg.mus)))
    gamma, mu = float(pkg.gammas[l]), float(pkg.mus[l])
    if abs(mu) <= 1e-12 * max(gamma, 1.0):
        raise SharpnessRefused(f"mu vanishes at theta = {theta0.tolist()}; the construction needs mu != 0")
    idx = np.asarray(sorted(int(k) for k in k_indices))
    if idx[0] < 1:
        raise ValueError("indices must be positive")
    r0 = bundle.lattice.r0
    if base is None:
        base = max(1, math.ceil(gamma / (idx[0] * abs(mu) * zone_fraction * r0)))
    eff = base * idx
    eps = gamma**1.5 * abs(tau) / (2 * np.pi * eff**2 * abs(mu))
    t = gamma / (eff * abs(mu))
    q = np.array([FiberSpectrum(bundle, ti * theta0).error(e, tau, s) / e for ti, e in zip(t, eps)])
    growth = float(q[-1] / q[0])
    spread = float(q.max() / q.min())
    passed = growth >= growth_threshold if s < 2 else spread <= bounded_threshold
    return SharpnessReport(theta0, eff, int(base), gamma, mu, eps, t, q, growth, spread, float(s), bool(passed))


# ---------------------------------------------------------------------------
# Cauchy problem on the 2 pi torus with eps = 1/M
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusData:
    """Trigonometric data on the torus: Fourier coefficients (K, n) at integer modes (K, d)."""

    modes: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        modes = np.atleast_2d(np.asarray(self.modes, dtype=np.int64))
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if len(modes) != len(coeffs):
            raise ValueError("one coefficient row per mode")
        if len({tuple(m) for m in modes}) != len(modes):
            raise ValueError("modes must be distinct")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)

    def sobolev_norm(self, s: float) -> float:
        w = (1.0 + np.sum(self.modes.astype(float) ** 2, axis=1)) ** (s / 2)
        return float(np.sqrt(np.sum((w[:, None] * np.abs(self.coeffs)) ** 2)))

    def scaled(self, factor) -> "TorusData":
        return TorusData(self.modes, self.coeffs * factor)

    @staticmethod
    def zero(dim: int, n: int) -> "TorusData":
        return TorusData(np.zeros((0, dim), dtype=np.int64), np.zeros((0, n), dtype=complex))


@dataclass(frozen=True)
class PiecewiseForce:
    """F(x, t) = values[i] on breaks[i] <= t < breaks[i+1], all pieces on the same modes."""

    breaks: np.ndarray
    modes: np.ndarray
    values: np.ndarray  # (P, K, n)

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if breaks.ndim != 1 or len(breaks) != len(values) + 1 or np.any(np.diff(breaks) <= 0):
            raise ValueError("need increasing breaks, one more than pieces")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "modes", np.atleast_2d(np.asarray(self.modes, dtype=np.int64)))

    def l1_norm(self, s: float, tau: float) -> float:
        """||F||_{L_1((0, tau); H^s)}."""
        total = 0.0
        for i, v in enumerate(self.values):
            lo, hi = max(self.breaks[i], 0.0), min(self.breaks[i + 1], tau)
            if hi > lo:
                total += (hi - lo) * TorusData(self.modes, v).sobolev_norm(s)
        return total


@dataclass
class CauchyResult:
    error: float  # L2 error divided by the data norm
    raw_error: float
    data_norm: float
    M: int
    tau: float
    s: float
    v_eps: np.ndarray  # (K, n) coefficients on ``modes``
    v0: np.ndarray
    modes: np.ndarray


def _residue(modes: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Split n = r + M j with r in (-M/2, M/2]."""
    r = np.mod(modes, M)
    r = np.where(r > M // 2, r - M, r)
    return r, (modes - r) // M


def _duhamel_weights(fn_sin, breaks, tau: float, tol: float = SIMPSON_TOL) -> list[np.ndarray]:
    """Per piece, int over [a, b] cap [0, tau] of sin((tau - u) w)/w du by composite Simpson.

    ``fn_sin(u)`` returns the vector of sin((tau-u) w)/w.  The number of
    subintervals is doubled until the result changes by less than ``tol`` relative.
    """
    out = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        lo, hi = max(a, 0.0), min(b, tau)
        if hi <= lo:
            out.append(None)
            continue
        m = 16
        prev = None
        while True:
            u = np.linspace(lo, hi, m + 1)
            vals = np.array([fn_sin(ui) for ui in u])
            cur = simpson(vals, x=u, axis=0)
            if prev is not None and np.max(np.abs(cur - prev)) <= tol * max(np.max(np.abs(cur)), 1e-300):
                break
            if m > 1 << 16:
                break
            prev, m = cur, 2 * m
        out.append(cur)
    return out


def _evolve(decomp, phi: np.ndarray, psi: np.ndarray, tau: float, force=None, mass=None) -> np.ndarray:
    """cos(tau W) phi + W^{-1} sin(tau W) psi + Duhamel term, with W = sqrt(M^{-1} A).

    ``decomp`` holds eigenpairs of the pair (A, M) with M-orthonormal vectors;
    ``force`` is a list of (breaks, per-piece vectors) already multiplied by M^{-1}.
    """
    lam = decomp.clamped()
    V = decomp.vectors
    Vh = V.conj().T if mass is None else V.conj().T @ mass
    root = np.sqrt(lam)
    a = Vh @ phi
    b = Vh @ psi
    out = np.cos(tau * root) * a
    sinc = np.where(root * abs(tau) > 1e-12, np.sin(tau * root) / np.where(root > 0, root, 1.0), tau)
    out = out + sinc * b
    if force is not None:
        breaks, pieces = force

        def fn_sin(u):
            x = tau - u
            return np.where(root * abs(x) > 1e-12, np.sin(x * root) / np.where(root > 0, root, 1.0), x)

        weights = _duhamel_weights(fn_sin, breaks, tau)
        for wgt, piece in zip(weights, pieces):
            if wgt is not None:
                out = out + wgt * (Vh @ piece)
    return V @ out


def _coeff_map(data: TorusData | None) -> dict:
    if data is None:
        return {}
    return {tuple(int(x) for x in m): c for m, c in zip(data.modes, data.coeffs)}


def _vector(cmap: dict, modes: np.ndarray, n: int) -> np.ndarray:
    vec = np.zeros((len(modes), n), dtype=complex)
    for i, m in enumerate(modes):
        c = cmap.get(tuple(int(x) for x in m))
        if c is not None:
            vec[i] = c
    return vec.reshape(-1)


def _data_modes(phi: TorusData, psi: TorusData, force: PiecewiseForce | None) -> np.ndarray:
    sets = [d.modes for d in (phi, psi) if len(d.modes)]
    if force is not None:
        sets.append(force.modes)
    if not sets:
        raise ValueError("data norm is zero")
    return np.unique(np.concatenate(sets), axis=0)


def _validate_M(eps: float) -> int:
    M = round(1.0 / eps) if eps > 0 else 0
    if M < 1 or abs(M * eps - 1.0) > 1e-12:
        raise ValueError(f"eps = {eps} is not 1/M for an integer M")
    return int(M)


def _check_torus(bundle: Bundle) -> None:
    lat = bundle.lattice
    if not np.allclose(lat.basis, 2 * np.pi * np.eye(lat.dim)):
        raise ValueError("the torus path assumes the lattice 2 pi Z^d")


def _prepare_data(bundle, phi, psi, force, tau, s):
    n, d = bundle.n, bundle.lattice.dim
    psi = psi if psi is not None else TorusData.zero(d, n)
    data_norm = phi.sobolev_norm(s) + psi.sobolev_norm(s) + (force.l1_norm(s, tau) if force is not None else 0.0)
    if data_norm == 0:
        raise ValueError("data norm is zero")
    return psi, data_norm


def torus_modes(bundle: Bundle, data_modes: np.ndarray, M: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Residue classes of the data with the torus modes each class couples to.

    Returns pairs (r, j) with torus modes r + M j; the j are the coupling
    component of the data inside the cutoff box, sorted by flat index.
    """
    r = np.mod(data_modes, M)
    r = np.where(r > M // 2, r - M, r)
    j = (data_modes - r) // M
    if np.any(np.abs(j) > bundle.cutoff):
        raise ValueError("data modes fall outside the cutoff box of their residue class")
    fields = [bundle.g] + ([bundle.Q] if bundle.Q is not None else [])
    out = []
    for rr in np.unique(r, axis=0):
        sel = np.all(r == rr, axis=1)
        comp = coupling_component(fields, bundle.cutoff, bundle.lattice.dim, seed=j[sel])
        out.append((rr, comp))
    return out


def _effective_solution(bundle: Bundle, modes: np.ndarray, phi, psi, force, tau: float) -> np.ndarray:
    """Constant-coefficient solution per torus mode: symbol b(n)* g0 b(n), mass Q_bar."""
    n = bundle.n
    Qb = None if bundle.Q_bar is None else np.atleast_2d(bundle.Q_bar)
    sym = bundle.symbol(modes.astype(float)).astype(complex)
    pv, sv = _coeff_map(phi), _coeff_map(psi)
    fv = [] if force is None else [_coeff_map(TorusData(force.modes, v)) for v in force.values]
    out = np.zeros((len(modes), n), dtype=complex)
    for i, m in enumerate(modes):
        A = sym[i].conj().T @ bundle.g0 @ sym[i]
        dec = eigendecompose(0.5 * (A + A.conj().T), mass=Qb)
        key = tuple(int(x) for x in m)
        zero = np.zeros(n, dtype=complex)
        f = None
        if force is not None:
            pieces = [p.get(key, zero) for p in fv]
            if Qb is not None:
                pieces = [np.linalg.solve(Qb, p) for p in pieces]
            f = (force.breaks, pieces)
        out[i] = _evolve(dec, pv.get(key, zero), sv.get(key, zero), tau, f, Qb)
    return out


def _solve_blocks(bundle, blocks, phi, psi, force, tau):
    """Exact-in-time solution on each block; blocks are (torus modes, decomposition, mass)."""
    n = bundle.n
    pv, sv = _coeff_map(phi), _coeff_map(psi)
    fv = [] if force is None else [_coeff_map(TorusData(force.modes, v)) for v in force.values]
    modes_out, sol_out = [], []
    for modes, dec, mass in blocks:
        f = None
        if force is not None:
            pieces = [_vector(p, modes, n) for p in fv]
            if mass is not None:
                pieces = [np.linalg.solve(mass, p) for p in pieces]
            f = (force.breaks, pieces)
        sol = _evolve(dec, _vector(pv, modes, n), _vector(sv, modes, n), tau, f, mass)
        modes_out.append(modes)
        sol_out.append(sol.reshape(len(modes), n))
    return np.concatenate(modes_out), np.concatenate(sol_out)


def _compare(bundle, modes_eps, v_eps, phi, psi, force, tau, s, data_norm, M) -> CauchyResult:
    """L2 distance to the effective solution; v0 lives on the data modes only."""
    data = _data_modes(phi, psi, force)
    v0_data = _effective_solution(bundle, data, phi, psi, force, tau)
    v0 = np.zeros_like(v_eps)
    index = {tuple(int(x) for x in m): i for i, m in enumerate(modes_eps)}
    for m, c in zip(data, v0_data):
        v0[index[tuple(int(x) for x in m)]] = c
    order = np.lexsort(modes_eps.T[::-1])
    raw = float(np.linalg.norm(v_eps - v0))
    return CauchyResult(raw / data_norm, raw, data_norm, M, float(tau), float(s), v_eps[order], v0[order], modes_eps[order])


def cauchy_error(
    bundle: Bundle,
    phi: TorusData,
    psi: TorusData | None = None,
    force: PiecewiseForce | None = None,
    tau: float = 1.0,
    eps: float = 0.125,
    s: float = 2.0,
) -> CauchyResult:
    """||v_eps(tau) - v_0(tau)||_{L2} / (||phi||_{H^s} + ||psi||_{H^s} + ||F||_{L1 H^s}).

    On the 2 pi torus with eps = 1/M the operator with coefficients g(M x)
    preserves the residue classes n = r + M j, and on the class of r it is
    M^2 times the fiber A(r/M) acting on the modes j.  Each class is solved
    exactly in time; the Duhamel term uses composite Simpson.  For a weighted
    case the equation is Q(M x) z'' = -A z + F with effective mass Q_bar.
    """
    M = _validate_M(eps)
    _check_torus(bundle)
    psi, data_norm = _prepare_data(bundle, phi, psi, force, tau, s)
    blocks = []
    for rr, comp in torus_modes(bundle, _data_modes(phi, psi, force), M):
        op = assemble(bundle.g, bundle.symbol, rr / M, bundle.cutoff, Q=bundle.Q, modes=comp)
        dec = eigendecompose(op)
        dec = EigenDecomposition(dec.values * M**2, dec.vectors, dec.clusters, dec.mass, dec.scale * M**2)
        blocks.append((rr[None, :] + M * comp, dec, op.mass))
    modes, v_eps = _solve_blocks(bundle, blocks, phi, psi, force, tau)
    return _compare(bundle, modes, v_eps, phi, psi, force, tau, s, data_norm, M)


def dense_torus_operator(bundle: Bundle, modes: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Stiffness and mass of the torus operator with coefficients g(M x), on arbitrary torus modes.

    Entry (p, q) is b(p)* g_hat((p - q)/M) b(q) when M divides p - q and zero
    otherwise, built entry by entry without the residue splitting.
    """
    n = bundle.n
    sym = bundle.symbol(modes.astype(float)).astype(complex)
    K = len(modes)
    A = np.zeros((K * n, K * n), dtype=complex)
    Mass = None if bundle.Q is None else np.zeros((K * n, K * n), dtype=complex)
    for p in range(K):
        for q in range(K):
            diff = modes[p] - modes[q]
            if np.any(np.mod(diff, M)):
                continue
            nu = diff // M
            A[p * n : (p + 1) * n, q * n : (q + 1) * n] = sym[p].conj().T @ bundle.g.fourier(nu) @ sym[q]
            if Mass is not None:
                Mass[p * n : (p + 1) * n, q * n : (q + 1) * n] = bundle.Q.fourier(nu)
    A = 0.5 * (A + A.conj().T)
    if Mass is not None:
        Mass = 0.5 * (Mass + Mass.conj().T)
    return A, Mass


def cauchy_error_dense(
    bundle: Bundle,
    phi: TorusData,
    psi: TorusData | None = None,
    force: PiecewiseForce | None = None,
    tau: float = 1.0,
    eps: float = 0.125,
    s: float = 2.0,
) -> CauchyResult:
    """The same quantity as :func:`cauchy_error`, by one dense evolution on the union of modes."""
    M = _validate_M(eps)
    _check_torus(bundle)
    psi, data_norm = _prepare_data(bundle, phi, psi, force, tau, s)
    classes = torus_modes(bundle, _data_modes(phi, psi, force), M)
    modes = np.concatenate([rr[None, :] + M * comp for rr, comp in classes])
    A, Mass = dense_torus_operator(bundle, modes, M)
    dec = eigendecompose(A, mass=Mass)
    modes, v_eps = _solve_blocks(bundle, [(modes, dec, Mass)], phi, psi, force, tau)
    return _compare(bundle, modes, v_eps, phi, psi, force, tau, s, data_norm, M)


def torus_operator_norm(bundle: Bundle, eps: float, tau: float, s: float, line=None, workers: int = 1) -> GlobalError:
    """Norm of cos(tau A_eps^{1/2}) - cos(tau A_0^{1/2}) from H^s to L2 on the 2 pi torus, eps = 1/M.

    The torus weight (1 + |n|^2)^{-s/2} at n = r + M j equals the fiber
    smoothing R(r/M, eps)^{s/2} at mode j, so the norm is the largest fiber
    error over the quasimomenta r/M.  With an integer direction ``line`` only
    the residues r = m * line are used, which is the norm on data whose modes
    lie in those classes.
    """
    M = _validate_M(eps)
    _check_torus(bundle)
    d = bundle.lattice.dim
    res = np.arange(-((M - 1) // 2), M // 2 + 1)
    if line is None:
        pts = np.array(np.meshgrid(*[res] * d, indexing="ij")).reshape(d, -1).T
    else:
        direction = np.asarray(line, dtype=np.int64).reshape(d)
        pts = np.mod(res[:, None] * direction[None, :], M)
        pts = np.unique(np.where(pts > M // 2, pts - M, pts), axis=0)
    grid = KGrid(points=pts / M, includes_zero=True)
    return global_errors(bundle, grid, [eps], tau, s, refine=False, workers=workers)[0]
