"""An example prepared for spectral work: cell solution, weights and block structure."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .cell import CellSolution, WeightedConstants, solve_cell, weighted_constants
from .fiber import coupling_component, coupling_components, lower_bound_constant
from .fields import ExampleCase


@dataclass
class Bundle:
    case: ExampleCase
    cutoff: int
    cell: CellSolution
    weights: WeightedConstants | None
    c_star: float

    @property
    def lattice(self):
        return self.case.lattice

    @property
    def symbol(self):
        return self.case.symbol

    @property
    def g(self):
        return self.case.g

    @property
    def Q(self):
        return self.case.Q

    @property
    def g0(self) -> np.ndarray:
        return self.cell.g0

    @property
    def n(self) -> int:
        return self.case.symbol.n

    @property
    def Q_bar(self) -> np.ndarray | None:
        return None if self.weights is None else self.weights.Q_bar

    @cached_property
    def components(self) -> list[np.ndarray]:
        fields = [self.g] + ([self.Q] if self.Q is not None else [])
        return coupling_components(fields, self.cutoff, self.lattice.dim)

    @cached_property
    def zero_block(self) -> np.ndarray:
        """Modes coupled to the zero mode; the only block carrying the low bands."""
        fields = [self.g] + ([self.Q] if self.Q is not None else [])
        return coupling_component(fields, self.cutoff, self.lattice.dim)


def prepare(case: ExampleCase, cutoff: int) -> Bundle:
    g = case.g
    need = 4 * cutoff + 1
    shape = tuple(n if exact or n >= need else need + 3 for n, exact in zip(g.grid_shape, g.exact_axes))
    if shape != g.grid_shape and g.sampler is not None:
        g = g.resampled(shape)
        case = type(case)(**{**case.__dict__, "g": g})
    cell = solve_cell(case.g, case.symbol, cutoff)
    weights = weighted_constants(cell, Q=case.Q) if case.Q is not None else None
    return Bundle(case, cutoff, cell, weights, lower_bound_constant(case.symbol, case.g, case.Q))
