"""Lattice geometry: generating and dual bases, Brillouin-zone radius, k-grids.

The dual basis is normalised so that ``<b_l, a_j> = 2*pi*delta_jl``.  Fourier
modes of a periodic function are labelled by integer coordinates ``nu`` with
respect to the dual basis, so the physical frequency is ``nu @ dual_basis``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

# Box of integer dual coordinates searched for r0 and zone membership.
ZONE_SEARCH = 3


class DegenerateLatticeError(ValueError):
    """Raised when the generating vectors are not linearly independent."""


class OutOfZoneError(ValueError):
    """Raised when a radial sweep would leave the closed Brillouin zone."""


def integer_box(dim: int, radius: int) -> np.ndarray:
    """All integer vectors with coordinates in ``[-radius, radius]``, lexicographic."""
    axis = range(-radius, radius + 1)
    return np.array(list(itertools.product(axis, repeat=dim)), dtype=np.int64).reshape(-1, dim)


@dataclass(frozen=True)
class Lattice:
    basis: np.ndarray
    dual_basis: np.ndarray
    cell_volume: float
    dual_cell_volume: float
    r0: float

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def frequencies(self, nu: np.ndarray) -> np.ndarray:
        """Map integer dual coordinates (..., d) to physical frequencies."""
        return np.asarray(nu, dtype=float) @ self.dual_basis

    def dual_vectors(self, radius: int = ZONE_SEARCH, nonzero: bool = True) -> np.ndarray:
        box = integer_box(self.dim, radius)
        if nonzero:
            box = box[np.any(box != 0, axis=1)]
        return self.frequencies(box)

    def in_zone(self, k, tol: float = 1e-12) -> np.ndarray:
        """Membership of k (shape (d,) or (p, d)) in the closed Brillouin zone."""
        pts = np.atleast_2d(np.asarray(k, dtype=float))
        dual = self.dual_vectors()
        own = np.linalg.norm(pts, axis=1)
        other = np.linalg.norm(pts[:, None, :] - dual[None, :, :], axis=2)
        ok = np.all(own[:, None] <= other + tol, axis=1)
        return ok if np.ndim(k) > 1 else bool(ok[0])

    def fold(self, k: np.ndarray) -> np.ndarray:
        """Shift points by dual vectors to the representative of least norm."""
        pts = np.atleast_2d(np.asarray(k, dtype=float))
        shifts = self.dual_vectors(nonzero=False)
        cand = pts[:, None, :] - shifts[None, :, :]
        norms = np.linalg.norm(cand, axis=2)
        # prefer the unshifted point on ties so boundary points stay put
        zero_idx = int(np.flatnonzero(np.all(shifts == 0.0, axis=1))[0])
        best = np.argmin(norms, axis=1)
        keep = norms[np.arange(len(pts)), zero_idx] <= norms[np.arange(len(pts)), best] + 1e-12
        best = np.where(keep, zero_idx, best)
        return cand[np.arange(len(pts)), best]


def make_lattice(basis) -> Lattice:
    """Build a lattice from generating vectors given as the rows of ``basis``."""
    a = np.atleast_2d(np.asarray(basis, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise DegenerateLatticeError(f"basis must be square, got shape {a.shape}")
    vol = abs(float(np.linalg.det(a)))
    if not np.isfinite(vol) or vol <= 1e-14 * max(1.0, float(np.abs(a).max()) ** a.shape[0]):
        raise DegenerateLatticeError("generating vectors are linearly dependent")
    dual = TWO_PI * np.linalg.inv(a).T
    dual_vol = abs(float(np.linalg.det(dual)))
    box = integer_box(a.shape[0], ZONE_SEARCH)
    box = box[np.any(box != 0, axis=1)]
    r0 = 0.5 * float(np.min(np.linalg.norm(box @ dual, axis=1)))
    return Lattice(basis=a, dual_basis=dual, cell_volume=vol, dual_cell_volume=dual_vol, r0=r0)


def cubic_lattice(dim: int, period: float = TWO_PI) -> Lattice:
    return make_lattice(period * np.eye(dim))


@dataclass(frozen=True)
class KGrid:
    points: np.ndarray
    includes_zero: bool
    directions: list[np.ndarray] = field(default_factory=list)
    radial_t: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.points)


def brillouin_grid(lat: Lattice, resolution: int) -> KGrid:
    """Uniform grid over the dual cell, folded into the closed Brillouin zone.

    Fractional dual coordinates run over ``linspace(-1/2, 1/2, resolution)``;
    k = 0 is always added.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    frac = np.linspace(-0.5, 0.5, resolution) if resolution > 1 else np.array([-0.5])
    coords = np.array(list(itertools.product(frac, repeat=lat.dim)))
    pts = lat.fold(coords @ lat.dual_basis)
    if not np.any(np.all(np.abs(pts) < 1e-14, axis=1)):
        pts = np.vstack([np.zeros(lat.dim), pts])
    pts = np.unique(np.round(pts, 14), axis=0)
    return KGrid(points=pts, includes_zero=True)


def radial_samples(lat: Lattice, theta, t_max: float | None = None, count: int = 8) -> np.ndarray:
    """Points ``t*theta`` with t uniform in (0, t_max]; default t_max = r0/2."""
    theta = np.asarray(theta, dtype=float)
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ValueError("theta must be a unit vector")
    if t_max is None:
        t_max = 0.5 * lat.r0
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if t_max > lat.r0 * (1 + 1e-12):
        raise OutOfZoneError(f"t_max={t_max:g} exceeds r0={lat.r0:g}")
    t = t_max * np.arange(1, count + 1) / count
    return t[:, None] * theta[None, :]


def sphere_directions(dim: int, count: int, half: bool = False) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors.

    ``half=True`` keeps one representative of each +-theta pair, which is
    enough for quantities that are even or odd under theta -> -theta.
    """
    if dim == 1:
        return np.array([[1.0]]) if half else np.array([[1.0], [-1.0]])
    if dim == 2:
        span = np.pi if half else 2 * np.pi
        ang = span * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    z = 1 - (i / count) * (1 if half else 2)
    phi = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(np.clip(1 - z * z, 0, None))
    out = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    if dim > 3:
        raise ValueError("sphere_directions supports dim <= 3")
    return out


def random_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
