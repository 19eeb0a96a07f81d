"""End-to-end checks of each shipped example against its reference values.

Every pipeline returns rows of (quantity, measured, reference, tolerance,
provenance); the provenance tag is copied from the example registry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bundle import Bundle, prepare
from .cell import LayeredCell, isotropic_quadrature, isotropic_root, layered_route
from .fields import Reference, get_example
from .germ import germ_package, threshold_fit
from .lattice import sphere_directions


@dataclass(frozen=True)
class Row:
    example: str
    quantity: str
    measured: object
    reference: object
    tol: float
    provenance: str
    relative: bool = False
    note: str = ""

    @property
    def deviation(self) -> float:
        m = np.asarray(self.measured, dtype=complex)
        r = np.asarray(self.reference, dtype=complex)
        dev = float(np.max(np.abs(m - r))) if m.size else 0.0
        if self.relative:
            dev /= max(float(np.max(np.abs(r))), 1e-300)
        return dev

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tol)

    HEADER = ("example", "quantity", "measured", "reference", "tol", "deviation", "provenance", "passed")

    def cells(self) -> tuple:
        def short(v):
            a = np.asarray(v)
            return a.item() if a.size == 1 else " ".join(f"{x:.9g}" for x in a.real.ravel())

        return (self.example, self.quantity, short(self.measured), short(self.reference), self.tol, self.deviation,
                f"[{self.provenance}]", self.passed)


def _ref_row(example: str, key: str, ref: Reference, measured, quantity: str | None = None, relative=False) -> Row:
    return Row(example, quantity or key, measured, ref.value, ref.tol, ref.provenance, relative, ref.note)


def _fit_rows(bundle: Bundle, name: str, directions: int = 8) -> list[Row]:
    """Threshold fit from Bloch bands against the germ along ``directions`` directions."""
    dirs = sphere_directions(bundle.lattice.dim, directions, half=True) if bundle.lattice.dim > 1 else np.array([[1.0]])
    g_err = mu_err = 0.0
    for theta in dirs:
        fit = threshold_fit(bundle, theta)
        g_err = max(g_err, fit.gamma_error)
        mu_err = max(mu_err, fit.mu_error)
    return [
        Row(name, "band fit gamma rel. error", g_err, 0.0, 1e-4, "DERIVED", note="fit of Bloch bands vs germ"),
        Row(name, "band fit mu abs. error", mu_err, 0.0, 1e-3, "DERIVED", note="fit of Bloch bands vs germ"),
    ]


def _g0_row(bundle: Bundle, name: str) -> Row:
    return _ref_row(name, "g0", bundle.case.reference["g0"], bundle.g0)


def reproduce_isotropic(cutoff: int = 16, fit: bool = True) -> list[Row]:
    name = "isotropic-elasticity"
    case = get_example(name)
    ref = case.reference
    a = isotropic_root()
    q = isotropic_quadrature(a)
    rows = [
        _ref_row(name, "a", ref["a"], a),
        _ref_row(name, "theta1_sq", ref["theta1_sq"], q["theta1_sq"]),
        _ref_row(name, "S_abs", ref["S_abs"], abs(q["S"])),
        _ref_row(name, "T_abs", ref["T_abs"], abs(q["T"])),
        Row(name, "Re S, Re T", [q["S"].real, q["T"].real], [0.0, 0.0], 1e-8, "PAPER", note="purely imaginary"),
        _ref_row(name, "mu_hat", ref["mu_hat"], q["mu_hat"]),
    ]
    if fit:
        p = case.params
        th1 = np.sqrt(p["theta1_sq"])
        theta = np.array([th1, np.sqrt(1 - th1**2)])
        lc, lb = layered_route(case)
        fitted = threshold_fit(lb, theta, germ=germ_package(lc, case.symbol, theta))
        rows.append(_ref_row(name, "mu_hat", ref["mu_hat"], float(np.max(np.abs(fitted.mu_fit))), "mu_hat from band fit"))
        rows += _fit_rows(prepare(case, cutoff), name)
    return rows


def reproduce_layered_elasticity(cutoff: int = 64, fit: bool = True) -> list[Row]:
    name = "layered-elasticity"
    case = get_example(name)
    bd = prepare(case, cutoff)
    rows = [_g0_row(bd, name)]
    dirs = sphere_directions(2, 32)
    dev = 0.0
    for th in dirs:
        p = germ_package(bd.cell, bd.symbol, th)
        expect = np.sort([1 - th[0] * th[1], 1 + th[0] * th[1]])
        dev = max(dev, float(np.max(np.abs(np.sort(p.gammas) - expect))))
    rows.append(Row(name, "germ eigenvalues 1 +- t1 t2 (32 directions)", dev, 0.0, 1e-8, "PAPER"))
    # mu = |mean(Lambda22 g3)| / 2 from an independent 1D cell solve
    lc = LayeredCell(lambda x: case.g.sampler(np.stack([x, np.zeros_like(x)], -1)), case.symbol)
    mu_ref = 0.5 * abs(lc.mean(lc.Lambda[:, 1, 1] * (1 + 0.5 * np.cos(lc.x))))
    for label, th in (("theta(1)", (0.0, 1.0)), ("theta(2)", (0.0, -1.0))):
        p = germ_package(bd.cell, bd.symbol, th)
        rows.append(Row(name, f"mu at {label}", np.sort(p.mus), [-mu_ref, mu_ref], 1e-8, "PAPER", note="+-|mean(Lambda22 g3)|/2"))
        rows.append(Row(name, f"||N - N0|| at {label}", np.linalg.norm(p.Nstar, 2), 0.0, 1e-8, "PAPER"))
    for label, th in (("theta(3)", (1.0, 0.0)), ("theta(4)", (-1.0, 0.0))):
        p = germ_package(bd.cell, bd.symbol, th)
        rows.append(Row(name, f"||N|| at {label}", np.linalg.norm(p.N_Q, 2), 0.0, 1e-8, "PAPER"))
    # the split jumps: off the axis the germ eigenvalues separate and N0 vanishes
    near = np.array([np.sin(1e-3), np.cos(1e-3)])
    p = germ_package(bd.cell, bd.symbol, near)
    rows.append(Row(name, "||N0|| next to theta(1)", np.linalg.norm(p.N0, 2), 0.0, 1e-8, "PAPER", note="N0 jumps from mu to 0"))
    if fit:
        rows += _fit_rows(prepare(case, 16), name)
    return rows


def reproduce_acoustics_complex(cutoff: int = 64, fit: bool = True) -> list[Row]:
    name = "acoustics-complex"
    rows = []
    for c in (0.1, 0.2):
        case = get_example(name, c=c)
        bd = prepare(case, cutoff)
        coef = case.reference["N_coefficient"]
        dirs = sphere_directions(2, 16)
        measured = np.array([germ_package(bd.cell, bd.symbol, th).N_hat[0, 0].real for th in dirs])
        expect = coef.value * dirs[:, 1] ** 3
        rows.append(Row(name, f"N(theta) = -alpha/pi t2^3, c={c}", measured, expect, coef.tol, coef.provenance, relative=True))
        if fit and c == 0.2:
            rows += _fit_rows(prepare(case, 16), name)
    return rows


def reproduce_acoustics_weighted(cutoff: int = 32, fit: bool = True) -> list[Row]:
    name = "acoustics-weighted"
    case = get_example(name)
    bd = prepare(case, cutoff)
    rows = [_ref_row(name, "Q_bar", case.reference["Q_bar"], bd.Q_bar)]
    worst = 0.0
    for th in sphere_directions(2, 16):
        p = germ_package(bd.cell, bd.symbol, th, bd.weights, bd.c_star)
        worst = max(worst, float(np.abs(p.N_Q).max()))
    rows.append(Row(name, "max |N_Q(theta)| (16 directions)", worst, 0.0, 1e-8, "PAPER", note="real symmetric g"))
    if fit:
        rows += _fit_rows(prepare(case, 16), name)
    return rows


def reproduce_layered_1d(cutoff: int = 32, fit: bool = True) -> list[Row]:
    name = "layered-1d"
    bd = prepare(get_example(name), cutoff)
    rows = [_g0_row(bd, name)]
    if fit:
        rows += _fit_rows(bd, name)
    return rows


def reproduce_hill_body(cutoff: int = 32, fit: bool = True) -> list[Row]:
    name = "hill-body"
    bd = prepare(get_example(name), cutoff)
    rows = [_g0_row(bd, name)]
    if fit:
        rows += _fit_rows(prepare(bd.case, 16), name)
    return rows


def reproduce_constant(cutoff: int = 8, fit: bool = True) -> list[Row]:
    name = "constant"
    bd = prepare(get_example(name), cutoff)
    rows = [_g0_row(bd, name)]
    if fit:
        rows += _fit_rows(bd, name)
    return rows


PIPELINES: dict[str, Callable[..., list[Row]]] = {
    "isotropic-elasticity": reproduce_isotropic,
    "layered-elasticity": reproduce_layered_elasticity,
    "acoustics-complex": reproduce_acoustics_complex,
    "acoustics-weighted": reproduce_acoustics_weighted,
    "layered-1d": reproduce_layered_1d,
    "hill-body": reproduce_hill_body,
    "constant": reproduce_constant,
}


def reproduce(name: str, cutoff: int | None = None, fit: bool = True) -> list[Row]:
    try:
        pipeline = PIPELINES[name]
    except KeyError:
        raise KeyError(f"no pipeline for {name!r}; known: {', '.join(sorted(PIPELINES))}") from None
    return pipeline(fit=fit) if cutoff is None else pipeline(cutoff=cutoff, fit=fit)
