"""Periodic coefficient fields, differential-operator symbols and the example gallery.

A :class:`CoefficientField` stores samples of a matrix-valued periodic function on
a uniform grid over the unit cell together with its discrete Fourier coefficients
``c_nu = mean(g(x) exp(-i <b_nu, x>))``.  Integer frequency labels ``nu`` refer to
the dual basis of the lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .lattice import Lattice, cubic_lattice, sphere_directions

Sampler = Callable[[np.ndarray], np.ndarray]
MAX_MEAN_DOUBLINGS = 6  # grid refinements for means of non-polynomial functions of a field


class FieldValidationError(ValueError):
    pass


class AliasingError(ValueError):
    """The grid of a field cannot resolve the frequencies a computation needs."""


# ---------------------------------------------------------------------------
# symbols b(xi) = sum_l b_l xi_l
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochSymbol:
    matrices: np.ndarray  # (d, m, n)
    alpha0: float
    alpha1: float
    name: str = ""

    @property
    def dim(self) -> int:
        return self.matrices.shape[0]

    @property
    def m(self) -> int:
        return self.matrices.shape[1]

    @property
    def n(self) -> int:
        return self.matrices.shape[2]

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.tensordot(xi, self.matrices, axes=([-1], [0]))

    def is_real(self) -> bool:
        return bool(np.all(np.abs(self.matrices.imag) == 0))


def ellipticity_bounds(matrices: np.ndarray, samples: int = 721) -> tuple[float, float]:
    """Extremes of the spectrum of b(theta)* b(theta) over the unit sphere.

    Dense deterministic sampling followed by local polishing with scipy.
    """
    from scipy.optimize import minimize

    d = matrices.shape[0]

    def spec(theta):
        bt = np.tensordot(theta / np.linalg.norm(theta), matrices, axes=([0], [0]))
        ev = np.linalg.eigvalsh(bt.conj().T @ bt)
        return ev[0], ev[-1]

    if d == 1:
        lo, hi = spec(np.array([1.0]))
        return float(lo), float(hi)
    dirs = sphere_directions(d, samples if d == 2 else 4 * samples)
    vals = np.array([spec(t) for t in dirs])
    i_lo, i_hi = int(np.argmin(vals[:, 0])), int(np.argmax(vals[:, 1]))
    lo = minimize(lambda t: spec(t)[0], dirs[i_lo], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15}).fun
    hi = -minimize(lambda t: -spec(t)[1], dirs[i_hi], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15}).fun
    return float(min(lo, vals[i_lo, 0])), float(max(hi, vals[i_hi, 1]))


def make_symbol(matrices, name: str = "", alpha0: float | None = None, alpha1: float | None = None) -> BlochSymbol:
    mats = np.asarray(matrices, dtype=complex)
    if mats.ndim != 3 or mats.shape[1] < mats.shape[2]:
        raise ValueError("symbol matrices must have shape (d, m, n) with m >= n")
    if alpha0 is None or alpha1 is None:
        lo, hi = ellipticity_bounds(mats)
        alpha0 = lo if alpha0 is None else alpha0
        alpha1 = hi if alpha1 is None else alpha1
    if alpha0 <= 0:
        raise FieldValidationError("symbol is not elliptic: rank b(theta) < n somewhere")
    return BlochSymbol(matrices=mats, alpha0=float(alpha0), alpha1=float(alpha1), name=name)


def symbol_gradient(d: int) -> BlochSymbol:
    """b(xi) = xi as a column, i.e. the operator D* g D."""
    if d < 1:
        raise ValueError("d must be >= 1")
    mats = np.zeros((d, d, 1), dtype=complex)
    for l in range(d):
        mats[l, l, 0] = 1.0
    return make_symbol(mats, name=f"gradient{d}d", alpha0=1.0, alpha1=1.0)


def symbol_elasticity(d: int) -> BlochSymbol:
    """Symmetric-gradient symbol with rows ordered as in the strain vector.

    d=2 rows: (xi1, 0), (xi2/2, xi1/2), (0, xi2).
    d=3 rows: 11, 12, 22, 23, 33, 13 strain components.
    """
    if d == 2:
        pairs = [(0, 0), (0, 1), (1, 1)]
    elif d == 3:
        pairs = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (0, 2)]
    else:
        raise ValueError(f"elasticity symbol is defined for d in (2, 3), got {d}")
    m = len(pairs)
    mats = np.zeros((d, m, d), dtype=complex)
    for row, (j, l) in enumerate(pairs):
        if j == l:
            mats[j, row, j] = 1.0
        else:
            # 1/2 (xi_l u_j + xi_j u_l)
            mats[l, row, j] = 0.5
            mats[j, row, l] = 0.5
    return make_symbol(mats, name=f"elasticity{d}d")


def symbol_hill(d: int) -> BlochSymbol:
    """Divergence row followed by the rotation rows (j, l), j < l."""
    if d not in (2, 3):
        raise ValueError(f"Hill symbol is defined for d in (2, 3), got {d}")
    pairs = [(j, l) for j in range(d) for l in range(j + 1, d)]
    m = 1 + len(pairs)
    mats = np.zeros((d, m, d), dtype=complex)
    for j in range(d):
        mats[j, 0, j] = 1.0
    for row, (j, l) in enumerate(pairs, start=1):
        mats[l, row, j] = 1.0
        mats[j, row, l] = -1.0
    return make_symbol(mats, name=f"hill{d}d", alpha0=1.0, alpha1=1.0)


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


def grid_shape_of(grid_size, dim: int) -> tuple[int, ...]:
    shape = (int(grid_size),) * dim if np.ndim(grid_size) == 0 else tuple(int(v) for v in grid_size)
    if len(shape) != dim:
        raise ValueError(f"grid shape {shape} does not match dimension {dim}")
    return shape


def cell_grid(lat: Lattice, grid_size) -> np.ndarray:
    """Physical grid points, shape grid_shape + (d,); ``grid_size`` is an int or per-axis sizes."""
    axes = [np.arange(n) / n for n in grid_shape_of(grid_size, lat.dim)]
    frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return frac @ lat.basis


@dataclass(frozen=True)
class CoefficientField:
    lattice: Lattice
    samples: np.ndarray  # (N,)*d + (rows, cols)
    coefficients: np.ndarray  # same shape, DFT normalised by N**d
    hermitian: bool = False
    positive: bool = False
    real_entries: bool = False
    bandlimited: bool = False
    name: str = ""
    sampler: Sampler | None = field(default=None, repr=False, compare=False)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.samples.shape[: self.dim]

    @property
    def grid_size(self) -> int:
        return max(self.grid_shape)

    @cached_property
    def axis_bands(self) -> np.ndarray:
        """Largest |nu_a| carrying a non-negligible coefficient, per axis."""
        sup = self.support()
        return np.abs(sup).max(axis=0) if len(sup) else np.zeros(self.dim, dtype=np.int64)

    @cached_property
    def exact_axes(self) -> np.ndarray:
        """Axes along which the DFT coefficients are the true ones (no aliasing)."""
        if self.bandlimited:
            return np.ones(self.dim, dtype=bool)
        return self.axis_bands == 0

    @property
    def rows(self) -> int:
        return self.samples.shape[-2]

    @property
    def cols(self) -> int:
        return self.samples.shape[-1]

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def flat_samples(self) -> np.ndarray:
        return self.samples.reshape(-1, self.rows, self.cols)

    def fourier(self, nu) -> np.ndarray:
        """Coefficients at integer frequencies ``nu`` of shape (..., d).

        Frequencies the grid cannot represent unambiguously return zero for
        band-limited fields; for other fields they wrap (quadrature Galerkin).
        """
        nu = np.asarray(nu, dtype=np.int64)
        shape = self.grid_shape
        idx = tuple(np.mod(nu[..., i], shape[i]) for i in range(self.dim))
        out = self.coefficients[idx]
        exact = self.exact_axes
        if np.any(exact):
            outside = np.any((np.abs(nu) > self.axis_bands) & exact, axis=-1)
            if np.any(outside):
                out = np.where(outside[..., None, None], 0.0, out)
        return out

    def max_frequency(self, tol: float = 1e-13) -> int:
        sup = self.support(tol)
        return int(np.abs(sup).max()) if len(sup) else 0

    def support(self, tol: float = 1e-13) -> np.ndarray:
        """Integer frequencies carrying non-negligible coefficients."""
        mag = np.abs(self.coefficients).max(axis=(-2, -1))
        scale = max(float(mag.max()), 1e-300)
        hits = np.argwhere(mag > tol * scale)
        ng = np.array(self.grid_shape)
        return np.where(hits > ng // 2, hits - ng, hits).astype(np.int64)

    def check_resolution(self, cutoff: int) -> None:
        """Toeplitz blocks of a Galerkin matrix need coefficients up to 2*cutoff."""
        for a, ng in enumerate(self.grid_shape):
            if self.exact_axes[a]:
                if 2 * self.axis_bands[a] < ng:
                    continue
                raise AliasingError(f"{self.name or 'field'}: declared band-limited but grid {ng} is too coarse on axis {a}")
            if ng < 4 * cutoff + 1:
                raise AliasingError(
                    f"{self.name or 'field'}: grid {ng} on axis {a} cannot resolve cutoff {cutoff}; "
                    f"need >= {4 * cutoff + 1}"
                )

    def mean(self) -> np.ndarray:
        return self.coefficients[(0,) * self.dim].copy()

    def harmonic_mean(self) -> np.ndarray:
        """(mean g^{-1})^{-1} by grid quadrature.

        For a band-limited field with a sampler, g^{-1} is analytic but not a
        trig polynomial, so the grid is doubled until the mean settles.
        """
        inv_mean = np.linalg.inv(self.flat_samples()).mean(axis=0)
        if self.bandlimited and self.sampler is not None:
            shape = np.array(self.grid_shape)
            for _ in range(MAX_MEAN_DOUBLINGS):
                shape = np.where(self.axis_bands > 0, 2 * shape, shape)
                x = cell_grid(self.lattice, tuple(int(v) for v in shape)).reshape(-1, self.dim)
                vals = np.asarray(self.sampler(x), dtype=complex)
                finer = np.linalg.inv(vals).mean(axis=0)
                done = np.abs(finer - inv_mean).max() <= 1e-14 * np.abs(finer).max()
                inv_mean = finer
                if done:
                    break
        return np.linalg.inv(inv_mean)

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.flat_samples(), ord=2, axis=(1, 2)).max())

    def inverse_sup_norm(self) -> float:
        s = np.linalg.svd(self.flat_samples(), compute_uv=False)
        return float((1.0 / s[:, -1]).max())

    def padded_samples(self, shape) -> np.ndarray:
        """Samples on a finer grid along the exact axes, by zero-padding the spectrum.

        Axes that are not exact keep their size; the trigonometric interpolant is
        exact along the others, so refining them changes no Fourier coefficient.
        """
        shape = grid_shape_of(shape, self.dim)
        old = self.grid_shape
        if shape == old:
            return self.samples
        coef = self.coefficients
        for a, (n_old, n_new) in enumerate(zip(old, shape)):
            if n_new == n_old:
                continue
            if not self.exact_axes[a] or n_new < 2 * self.axis_bands[a] + 1:
                raise AliasingError(f"cannot refine axis {a} from {n_old} to {n_new}")
            band = int(self.axis_bands[a])
            nu = np.arange(-band, band + 1)
            moved = np.zeros(coef.shape[:a] + (n_new,) + coef.shape[a + 1 :], dtype=complex)
            src = [slice(None)] * coef.ndim
            dst = [slice(None)] * coef.ndim
            src[a] = np.mod(nu, n_old)
            dst[a] = np.mod(nu, n_new)
            moved[tuple(dst)] = coef[tuple(src)]
            coef = moved
        axes = tuple(range(self.dim))
        vals = np.fft.ifftn(coef, axes=axes) * float(np.prod(shape))
        return vals.real if self.real_entries else vals

    def evaluate(self, x) -> np.ndarray:
        """Resample the trigonometric interpolant at physical points x (..., d)."""
        x = np.asarray(x, dtype=float)
        sup = self.support(tol=0.0 if self.bandlimited else 1e-15)
        coef = self.fourier(sup)
        phase = np.exp(1j * (x @ self.lattice.frequencies(sup).T))
        return np.tensordot(phase, coef, axes=([-1], [0]))

    def profile(self, x1) -> np.ndarray:
        """The exact field along x1 for a layered field built from a sampler."""
        if self.sampler is None:
            raise FieldValidationError("field has no sampler")
        x1 = np.asarray(x1, dtype=float)
        pts = np.zeros(x1.shape + (self.dim,))
        pts[..., 0] = x1
        return np.asarray(self.sampler(pts))

    def is_layered(self) -> bool:
        """True when the field depends on the first dual coordinate only."""
        sup = self.support()
        return bool(np.all(sup[:, 1:] == 0)) if self.dim > 1 else True

    def resampled(self, grid_size) -> "CoefficientField":
        if self.sampler is None:
            raise FieldValidationError("field has no sampler to resample from")
        return field_from_closure(
            self.sampler,
            grid_size,
            self.lattice,
            hermitian=self.hermitian,
            positive=self.positive,
            real_entries=self.real_entries,
            bandlimited=self.bandlimited,
            name=self.name,
        )

    def pointwise(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "", **flags) -> "CoefficientField":
        """Apply ``fn`` to every sample matrix (batched) and wrap the result."""
        vals = fn(self.flat_samples())
        vals = vals.reshape(self.samples.shape[:-2] + vals.shape[-2:])
        return _from_samples(self.lattice, vals, name=name, **flags)


def _from_samples(
    lat: Lattice,
    vals: np.ndarray,
    *,
    hermitian: bool = False,
    positive: bool = False,
    real_entries: bool = False,
    bandlimited: bool = False,
    name: str = "",
    sampler: Sampler | None = None,
) -> CoefficientField:
    vals = np.asarray(vals, dtype=complex)
    d = lat.dim
    axes = tuple(range(d))
    coef = np.fft.fftn(vals, axes=axes) / float(np.prod(vals.shape[:d]))
    flat = vals.reshape(-1, vals.shape[-2], vals.shape[-1])
    scale = max(1.0, float(np.abs(flat).max()))
    if hermitian:
        if flat.shape[1] != flat.shape[2]:
            raise FieldValidationError(f"{name}: hermitian flag on a non-square field")
        asym = float(np.abs(flat - np.conj(np.swapaxes(flat, 1, 2))).max())
        if asym > 1e-12 * scale:
            raise FieldValidationError(f"{name}: samples are not Hermitian (asymmetry {asym:.3g})")
        flat = 0.5 * (flat + np.conj(np.swapaxes(flat, 1, 2)))
        vals = flat.reshape(vals.shape)
        coef = np.fft.fftn(vals, axes=axes) / float(np.prod(vals.shape[:d]))
    if positive:
        if not hermitian:
            raise FieldValidationError(f"{name}: positivity requires a Hermitian field")
        lo = float(np.linalg.eigvalsh(flat)[:, 0].min())
        if lo <= 0:
            raise FieldValidationError(f"{name}: field is not positive definite (min eigenvalue {lo:.3g})")
    if real_entries:
        if float(np.abs(flat.imag).max()) > 1e-12 * scale:
            raise FieldValidationError(f"{name}: real_entries declared but samples are complex")
        vals = vals.real.astype(complex)
        coef = np.fft.fftn(vals, axes=axes) / float(np.prod(vals.shape[:d]))
    return CoefficientField(
        lattice=lat,
        samples=vals,
        coefficients=coef,
        hermitian=hermitian,
        positive=positive,
        real_entries=real_entries,
        bandlimited=bandlimited,
        name=name,
        sampler=sampler,
    )


def field_from_closure(
    sampler: Sampler,
    grid_size,
    lat: Lattice,
    *,
    hermitian: bool = False,
    positive: bool = False,
    real_entries: bool = False,
    bandlimited: bool = False,
    name: str = "",
) -> CoefficientField:
    """Sample ``sampler(x) -> (..., rows, cols)`` on the grid and cache its DFT."""
    if min(grid_shape_of(grid_size, lat.dim)) < 4:
        raise ValueError("grid_size must be >= 4")
    x = cell_grid(lat, grid_size)
    vals = np.asarray(sampler(x), dtype=complex)
    if vals.shape[: lat.dim] != x.shape[:-1] or vals.ndim != lat.dim + 2:
        raise FieldValidationError(f"{name}: sampler must return shape {x.shape[:-1]} + (rows, cols)")
    return _from_samples(
        lat,
        vals,
        hermitian=hermitian,
        positive=positive,
        real_entries=real_entries,
        bandlimited=bandlimited,
        name=name,
        sampler=sampler,
    )


def constant_field(matrix, lat: Lattice, grid_size: int = 8, name: str = "constant") -> CoefficientField:
    mat = np.atleast_2d(np.asarray(matrix, dtype=complex))
    herm = mat.shape[0] == mat.shape[1] and np.allclose(mat, mat.conj().T, atol=1e-14)
    pos = herm and bool(np.linalg.eigvalsh(mat)[0] > 0)

    def sampler(x):
        return np.broadcast_to(mat, x.shape[:-1] + mat.shape).copy()

    return field_from_closure(
        sampler,
        grid_size,
        lat,
        hermitian=herm,
        positive=pos,
        real_entries=bool(np.all(mat.imag == 0)),
        bandlimited=True,
        name=name,
    )


def field_from_trig(
    coefficients: Mapping[tuple[int, ...], np.ndarray],
    lat: Lattice,
    grid_size: int | None = None,
    *,
    hermitian: bool = True,
    positive: bool = True,
    name: str = "trig",
) -> CoefficientField:
    """Trigonometric polynomial ``sum_nu C_nu exp(i <b_nu, x>)``."""
    freqs = {tuple(int(v) for v in np.atleast_1d(k)): np.atleast_2d(np.asarray(c, dtype=complex)) for k, c in coefficients.items()}
    band = max((max(abs(v) for v in k) for k in freqs), default=0)
    if grid_size is None:
        grid_size = max(8, 4 * band + 4)
    nus = np.array(list(freqs), dtype=float).reshape(len(freqs), lat.dim)
    mats = np.stack(list(freqs.values()))
    real = all(
        np.allclose(freqs.get(tuple(-v for v in k), np.zeros_like(c)), np.conj(c), atol=1e-15) for k, c in freqs.items()
    )

    def sampler(x):
        phase = np.exp(1j * (x @ lat.frequencies(nus).T))
        return np.tensordot(phase, mats, axes=([-1], [0]))

    return field_from_closure(
        sampler,
        grid_size,
        lat,
        hermitian=hermitian,
        positive=positive,
        real_entries=real,
        bandlimited=True,
        name=name,
    )


def random_trig_field(
    lat: Lattice,
    size: int,
    degree: int,
    rng: np.random.Generator,
    *,
    amplitude: float = 0.3,
    real: bool = False,
    grid_size: int | None = None,
    name: str = "random",
) -> CoefficientField:
    """Random positive Hermitian trig polynomial, identity-dominated.

    Off-zero coefficients are scaled so that their total spectral norm is at
    most ``amplitude``; the field is then bounded below by ``0.8 - amplitude``.
    """
    box = itertools.product(range(-degree, degree + 1), repeat=lat.dim)
    half = [nu for nu in box if nu > tuple(-v for v in nu)]
    raw = {}
    for nu in half:
        c = rng.standard_normal((size, size))
        if real:
            c = 0.5 * (c + c.T)  # keeps the samples real symmetric
        else:
            c = c + 1j * rng.standard_normal((size, size))
        raw[nu] = c
    total = 2 * sum(np.linalg.norm(c, 2) for c in raw.values()) or 1.0
    base = rng.standard_normal((size, size))
    if not real:
        base = base + 1j * rng.standard_normal((size, size))
    base = 0.5 * (base + base.conj().T)
    # identity plus a perturbation of norm 0.2: the mean term is >= 0.8
    coefs: dict[tuple[int, ...], np.ndarray] = {(0,) * lat.dim: np.eye(size) + 0.2 * base / max(np.linalg.norm(base, 2), 1e-12)}
    for nu, c in raw.items():
        coefs[nu] = amplitude * c / total
        coefs[tuple(-v for v in nu)] = coefs[nu].conj().T
    return field_from_trig(coefs, lat, grid_size, name=name)


# ---------------------------------------------------------------------------
# example gallery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reference:
    value: object
    tol: float
    provenance: str  # PAPER, TRIVIAL or DERIVED
    note: str = ""


@dataclass(frozen=True)
class ExampleCase:
    name: str
    lattice: Lattice
    symbol: BlochSymbol
    g: CoefficientField
    Q: CoefficientField | None = None
    reference: Mapping[str, Reference] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def weighted(self) -> bool:
        return self.Q is not None


def example_acoustics_complex(c: float = 0.1, grid_size: int = 64) -> ExampleCase:
    """Acoustics operator D* g D with g = [[1, i beta'], [-i beta', 1]].

    beta(x1) = c (sin x1 + cos 2 x1); the threshold operator is -alpha/pi theta2^3
    with alpha = int beta (beta')^2 = -(3 pi / 2) c^3.
    """
    if not 0 < c < 1 / 3:
        raise ValueError("c must lie in (0, 1/3) for g to stay positive")
    lat = cubic_lattice(2)

    def sampler(x):
        dbeta = c * (np.cos(x[..., 0]) - 2 * np.sin(2 * x[..., 0]))
        out = np.zeros(x.shape[:-1] + (2, 2), dtype=complex)
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 0, 1] = 1j * dbeta
        out[..., 1, 0] = -1j * dbeta
        return out

    g = field_from_closure(sampler, grid_size, lat, hermitian=True, positive=True, bandlimited=True, name="acoustics-g")
    alpha = -1.5 * np.pi * c**3
    ref = {
        "alpha": Reference(alpha, 1e-12, "PAPER", "alpha = -(3 pi/2) c^3"),
        "N_coefficient": Reference(-alpha / np.pi, 1e-5, "PAPER", "N(theta) = -alpha/pi * theta2^3"),
    }
    return ExampleCase("acoustics-complex", lat, symbol_gradient(2), g, reference=ref, params={"c": c})


def example_acoustics_weighted(grid_size: int = 64) -> ExampleCase:
    """Real layered acoustic medium with density Q(x1) = 1 + cos(x1)/2."""
    lat = cubic_lattice(2)

    def g_sampler(x):
        x1 = x[..., 0]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 2 + np.sin(x1)
        out[..., 0, 1] = out[..., 1, 0] = 0.5 * np.sin(x1)
        out[..., 1, 1] = 1.5 + 0.5 * np.cos(x1)
        return out

    def q_sampler(x):
        return (1 + 0.5 * np.cos(x[..., 0]))[..., None, None]

    g = field_from_closure(g_sampler, grid_size, lat, hermitian=True, positive=True, real_entries=True, bandlimited=True, name="acoustics-weighted-g")
    Q = field_from_closure(q_sampler, grid_size, lat, hermitian=True, positive=True, real_entries=True, bandlimited=True, name="density")
    ref = {"Q_bar": Reference(1.0, 1e-12, "TRIVIAL", "mean of cos vanishes")}
    return ExampleCase("acoustics-weighted", lat, symbol_gradient(2), g, Q=Q, reference=ref)


def example_layered_scalar(grid_size: int = 32) -> ExampleCase:
    """d = 1, g(x) = 2 + sin x.  Effective coefficient is the harmonic mean sqrt(3)."""
    lat = cubic_lattice(1)
    g = field_from_closure(
        lambda x: (2 + np.sin(x[..., 0]))[..., None, None],
        grid_size,
        lat,
        hermitian=True,
        positive=True,
        real_entries=True,
        bandlimited=True,
        name="layered-scalar-g",
    )
    ref = {"g0": Reference(np.sqrt(3.0), 1e-10, "DERIVED", "harmonic mean of 2 + sin x")}
    return ExampleCase("layered-1d", lat, symbol_gradient(1), g, reference=ref)


def example_layered_elasticity(grid_size=(64, 4)) -> ExampleCase:
    """Layered 2D medium with g = diag(1, g2(x1), g3(x1)) and the strain symbol.

    g2 = 4 / (1 + sin(x1)/2) has harmonic mean 4 and g3 = 1 + cos(x1)/2 has
    mean 1, so g0 = diag(1, 4, 1) and the germ eigenvalues 1 +- t1 t2 cross on
    the coordinate axes.
    """
    lat = cubic_lattice(2)

    def sampler(x):
        x1 = x[..., 0]
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 4.0 / (1 + 0.5 * np.sin(x1))
        out[..., 2, 2] = 1 + 0.5 * np.cos(x1)
        return out

    g = field_from_closure(sampler, grid_size, lat, hermitian=True, positive=True, real_entries=True, name="layered-elasticity-g")
    ref = {
        "g2_harmonic": Reference(4.0, 1e-8, "PAPER", "harmonic mean of g2 is 4"),
        "g3_mean": Reference(1.0, 1e-12, "PAPER", "mean of g3 is 1"),
        "g0": Reference(np.diag([1.0, 4.0, 1.0]), 1e-8, "PAPER", "g0 = diag(1, 4, 1)"),
    }
    return ExampleCase("layered-elasticity", lat, symbol_elasticity(2), g, reference=ref)


ISO_JUMP = 100.0
ISO_SHEAR = 624.0


def isotropic_moduli(x1: np.ndarray, a: float, b: float = ISO_JUMP, c: float = ISO_SHEAR):
    """Bulk-like modulus K (two phases) and shear modulus mu on the period [0, 2 pi).

    K = a - b on [0, pi/2) and a + b on [pi/2, 2 pi); the value at the two jump
    points is the average of the one-sided limits.
    """
    x = np.mod(x1, 2 * np.pi)
    K = np.where(x < np.pi / 2, a - b, a + b).astype(float)
    tol = 1e-12
    jump = (np.abs(x - np.pi / 2) < tol) | (np.abs(x) < tol) | (np.abs(x - 2 * np.pi) < tol)
    K = np.where(jump, a, K)
    mu = 1 + c * np.cos(x) ** 2
    return K, mu


def isotropic_tensor(K, mu) -> np.ndarray:
    out = np.zeros(np.shape(K) + (3, 3))
    out[..., 0, 0] = out[..., 2, 2] = K + mu
    out[..., 0, 2] = out[..., 2, 0] = K - mu
    out[..., 1, 1] = 4 * mu
    return out


def example_isotropic_elasticity(a: float | None = None, grid_size=(260, 4)) -> ExampleCase:
    """Two-phase layered isotropic medium whose germ is degenerate along one direction."""
    from .cell import isotropic_root, isotropic_constants

    lat = cubic_lattice(2)
    if a is None:
        a = isotropic_root()
    consts = isotropic_constants(a)

    def sampler(x):
        K, mu = isotropic_moduli(x[..., 0], a)
        return isotropic_tensor(K, mu)

    g = field_from_closure(sampler, grid_size, lat, hermitian=True, positive=True, real_entries=True, name="isotropic-g")
    ref = {
        "a": Reference(145.6581, 5e-4, "PAPER", "root of the B = -C/4 condition"),
        "theta1_sq": Reference(0.5394, 5e-4, "PAPER", "degenerate direction"),
        "S_abs": Reference(65.6650, 5e-3, "PAPER", "purely imaginary"),
        "T_abs": Reference(76.2833, 5e-3, "PAPER", "purely imaginary"),
        "mu_hat": Reference(0.09850, 5e-4, "PAPER", "threshold coefficient at the degenerate direction"),
        "C": Reference(100.0, 1e-12, "PAPER", "C = 4 sqrt(c + 1)"),
    }
    params = {"a": a, "breakpoints": (np.pi / 2,), **consts}
    return ExampleCase("isotropic-elasticity", lat, symbol_elasticity(2), g, reference=ref, params=params)


def example_hill_body(beta: Callable[[np.ndarray], np.ndarray] | None = None, mu0: float = 1.0, d: int = 2, grid_size: int = 64) -> ExampleCase:
    """Hill body: g = diag(beta(x), mu0/2, ...) with the divergence/rotation symbol."""
    if mu0 <= 0:
        raise ValueError("mu0 must be positive")
    if beta is None:
        beta = lambda x: 2 + np.sin(x[..., 0])  # noqa: E731
    lat = cubic_lattice(d)
    sym = symbol_hill(d)

    def sampler(x):
        out = np.zeros(x.shape[:-1] + (sym.m, sym.m))
        out[..., 0, 0] = beta(x)
        for j in range(1, sym.m):
            out[..., j, j] = mu0 / 2
        return out

    g = field_from_closure(sampler, grid_size, lat, hermitian=True, positive=True, real_entries=True, name="hill-g")
    beta_h = 1.0 / np.mean(1.0 / beta(cell_grid(lat, grid_size)))
    g0 = np.diag([beta_h] + [mu0 / 2] * (sym.m - 1))
    ref = {"g0": Reference(g0, 1e-8, "PAPER", "g0 coincides with the harmonic mean of g")}
    return ExampleCase("hill-body", lat, sym, g, reference=ref, params={"mu0": mu0})


def example_constant(matrix=None, d: int = 2) -> ExampleCase:
    lat = cubic_lattice(d)
    mat = np.eye(d) if matrix is None else np.asarray(matrix)
    g = constant_field(mat, lat)
    return ExampleCase("constant", lat, symbol_gradient(d), g, reference={"g0": Reference(mat, 1e-12, "TRIVIAL", "g0 = g")})


EXAMPLES: dict[str, Callable[..., ExampleCase]] = {
    "acoustics-complex": example_acoustics_complex,
    "acoustics-weighted": example_acoustics_weighted,
    "layered-1d": example_layered_scalar,
    "layered-elasticity": example_layered_elasticity,
    "isotropic-elasticity": example_isotropic_elasticity,
    "hill-body": example_hill_body,
    "constant": example_constant,
}


def get_example(name: str, **kwargs) -> ExampleCase:
    try:
        factory = EXAMPLES[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(sorted(EXAMPLES))}") from None
    return factory(**kwargs)
