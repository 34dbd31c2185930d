"""Uniform periodic box grids and real sample fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "Field", "lp_norm", "inner", "boundary_mass"]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the box [-L/2, L/2)^N, M points per axis.

    Attributes
    ----------
    dim : int
        Space dimension N, one of {1, 2, 3}.
    points_per_axis : int
        M, a power of two, at least 8.
    box_length : float
        Side length L > 0.
    """

    dim: int
    points_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not _is_power_of_two(self.points_per_axis) or self.points_per_axis < 8:
            raise ValueError(
                f"points_per_axis must be a power of two >= 8, got {self.points_per_axis}"
            )
        if not (self.box_length > 0):
            raise ValueError(f"box_length must be positive, got {self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_weight(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    def axis_coords(self) -> np.ndarray:
        """Sample positions along one axis, [-L/2, L/2) inclusive-exclusive."""
        m = self.points_per_axis
        return (np.arange(m) - m // 2) * self.spacing

    def coords(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of coordinates, one array per axis, 'ij' indexing."""
        x = self.axis_coords()
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def radius(self, center=None) -> np.ndarray:
        """|x - center| on the grid; center defaults to the origin."""
        if center is None:
            center = (0.0,) * self.dim
        sq = np.zeros(self.shape)
        for ax, xi in enumerate(self.coords()):
            sq += (xi - center[ax]) ** 2
        return np.sqrt(sq)


@dataclass
class Field:
    """Real samples on a Grid, C order (last axis fastest)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def check_finite(self) -> "Field":
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("field contains non-finite samples")
        return self


def lp_norm(f: Field, r: float) -> float:
    """Quadrature-weighted L^r norm, r >= 1.  Uses numpy pairwise summation."""
    if r < 1:
        raise ValueError(f"order must be >= 1, got {r}")
    w = f.grid.cell_weight
    return float((w * np.sum(np.abs(f.values) ** r)) ** (1.0 / r))


def inner(f: Field, g: Field) -> float:
    """Quadrature-weighted L^2 inner product."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return float(f.grid.cell_weight * np.sum(f.values * g.values))


def boundary_mass(f: Field) -> float:
    """Fraction of the squared mass in the outer 10% shell of the box.

    The shell is {x : max_i |x_i| >= 0.9 * L/2}; returns 0 for the zero field.
    """
    total = float(np.sum(f.values**2))
    if total == 0.0:
        return 0.0
    cut = 0.9 * (f.grid.box_length / 2.0)
    x = f.grid.axis_coords()
    edge = np.abs(x) >= cut
    mask = np.zeros(f.grid.shape, dtype=bool)
    for ax in range(f.grid.dim):
        shape = [1] * f.grid.dim
        shape[ax] = f.grid.points_per_axis
        mask |= edge.reshape(shape)
    return float(np.sum(f.values[mask] ** 2) / total)
