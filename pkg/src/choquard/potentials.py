"""Confining multi-well potentials V(x) = min_i mu_i |x - x_i|^(q_i)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid

__all__ = ["Well", "CombineRule", "PotentialSpec", "evaluate_potential", "moment"]


class CombineRule(enum.Enum):
    MIN_OF_WELLS = "MinOfWells"


@dataclass(frozen=True)
class Well:
    center: tuple[float, ...]
    mu: float
    q: float

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError(f"well strength must be positive, got {self.mu}")
        if not (self.q > 0):
            raise ValueError(f"well power must be positive, got {self.q}")


@dataclass(frozen=True)
class PotentialSpec:
    """Wells (center, mu_i, q_i) combined by the pointwise minimum.

    V >= 0, V(x_i) = 0, and near each isolated center
    V(x)/|x - x_i|^(q_i) -> mu_i.
    """

    wells: tuple[Well, ...]
    combine_rule: CombineRule = CombineRule.MIN_OF_WELLS

    def __post_init__(self):
        if not self.wells:
            raise ValueError("potential needs at least one well")
        dims = {len(w.center) for w in self.wells}
        if len(dims) != 1:
            raise ValueError("well centers have inconsistent dimensions")
        centers = [w.center for w in self.wells]
        if len(set(centers)) != len(centers):
            raise ValueError("well centers must be pairwise distinct")

    @property
    def dim(self) -> int:
        return len(self.wells[0].center)

    @property
    def q_max(self) -> float:
        return max(w.q for w in self.wells)


def evaluate_potential(vspec: PotentialSpec, grid: Grid) -> Field:
    """Sample V on the grid by the MinOfWells rule."""
    if vspec.dim != grid.dim:
        raise ValueError(
            f"potential dimension {vspec.dim} does not match grid dimension {grid.dim}"
        )
    out = None
    for w in vspec.wells:
        v = w.mu * grid.radius(w.center) ** w.q
        out = v if out is None else np.minimum(out, v)
    return Field(grid, out)


def moment(u: Field, center: tuple[float, ...], q: float) -> float:
    """Quadrature of |x - center|^q |u|^2."""
    r = u.grid.radius(center)
    return float(u.grid.cell_weight * np.sum(r**q * u.values**2))
