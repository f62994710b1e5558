"""Cell-centred box grids, scalar fields and Neumann spectral calculus.

Nodes sit at cell centres ``(j + 1/2) * h`` so that the even (half-sample)
reflection of a grid function is exactly what the type-II cosine transform
assumes. The 3-point Laplacian with homogeneous Neumann conditions is then
diagonal in that basis with eigenvalues

    -lambda_k = -sum_i (2 / h_i**2) * (1 - cos(pi * k_i / N_i)),

so Poisson/Helmholtz solves, the inverse Neumann Laplacian and the
negative-order norm all reduce to pointwise division in transform space.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft

from .errors import GridMismatchError

# |mean| above this is a caller bug when a mean-free input is required.
MEAN_REJECT_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Rectangular tensor-product grid with cell-centred nodes.

    Args:
        points: number of cells per axis (each >= 4).
        extents: physical side lengths per axis (each > 0).
    """

    points: tuple[int, ...]
    extents: tuple[float, ...]

    def __post_init__(self):
        points = tuple(int(p) for p in self.points)
        extents = tuple(float(e) for e in self.extents)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "extents", extents)
        if len(points) not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(points)}")
        if len(extents) != len(points):
            raise ValueError("points and extents must have the same length")
        if any(p < 4 for p in points):
            raise ValueError(f"need at least 4 points per axis, got {points}")
        if not all(np.isfinite(e) and e > 0 for e in extents):
            raise ValueError(f"extents must be positive, got {extents}")

    @classmethod
    def box(cls, points: int, dim: int = 2, extent: float = 1.0) -> "Grid":
        """Uniform cube ``(0, extent)^dim`` with ``points`` cells per axis."""
        return cls((points,) * dim, (extent,) * dim)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / p for e, p in zip(self.extents, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def axes(self) -> list[np.ndarray]:
        """Cell-centre coordinates along each axis."""
        return [(np.arange(p) + 0.5) * h for p, h in zip(self.points, self.spacing)]

    def nodes(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar values on a grid. The value array is copied and made read-only."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.size != self.grid.size:
            raise ValueError(
                f"expected {self.grid.size} values for grid {self.grid.points}, got {vals.size}"
            )
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "Field":
        """Sample ``func(x1, ..., xn)`` at the cell centres."""
        vals = np.broadcast_to(func(*grid.nodes()), grid.shape)
        return cls(grid, vals)

    def _coerce(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


def check_same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid.points} vs {f.grid.points}")
    return grid


class SpectralPlan:
    """Type-II cosine transform and Neumann Laplacian eigenvalues for a grid.

    Works on raw arrays so the time steppers can avoid wrapping every
    intermediate in a :class:`Field`.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        lam = np.zeros(grid.shape)
        for axis, (n, h) in enumerate(zip(grid.points, grid.spacing)):
            lam1 = (2.0 / h**2) * (1.0 - np.cos(np.pi * np.arange(n) / n))
            shape = [1] * grid.dim
            shape[axis] = n
            lam = lam + lam1.reshape(shape)
        lam.flags.writeable = False
        # eigenvalues of -Delta_h, lam[0,...,0] == 0
        self.lam = lam

    def forward(self, values: np.ndarray) -> np.ndarray:
        return sfft.dctn(values, type=2, norm="ortho")

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.idctn(coeffs, type=2, norm="ortho")

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        return self.inverse(-self.lam * self.forward(values))

    def helmholtz(self, shift, stiffness, biharmonic, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(shift - stiffness*Lap + biharmonic*Lap^2) u = rhs``."""
        symbol = shift + stiffness * self.lam + biharmonic * self.lam**2
        return self.inverse(self.forward(rhs) / symbol)


@lru_cache(maxsize=32)
def spectral_plan(grid: Grid) -> SpectralPlan:
    return SpectralPlan(grid)


class DualNormWorkspace:
    """Inverse Neumann Laplacian on mean-free grid functions.

    Holds the reciprocal eigenvalue table with the zero mode set to 0.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.plan = spectral_plan(grid)
        inv = np.zeros(grid.shape)
        nz = self.plan.lam > 0
        inv[nz] = 1.0 / self.plan.lam[nz]
        inv.flags.writeable = False
        self.inverse_symbol = inv

    def solve(self, values: np.ndarray) -> np.ndarray:
        return self.plan.inverse(self.inverse_symbol * self.plan.forward(values))


def _grid_weight(grid: Grid) -> float:
    return grid.cell_volume


def integrate(f: Field) -> float:
    """Midpoint-rule integral over the box."""
    return float(f.values.sum() * _grid_weight(f.grid))


def inner(f: Field, g: Field) -> float:
    check_same_grid(f, g)
    return float(np.vdot(f.values, g.values) * _grid_weight(f.grid))


def mean(f: Field) -> float:
    return float(f.values.mean())


def laplacian_neumann(f: Field) -> Field:
    return Field(f.grid, spectral_plan(f.grid).laplacian(f.values))


def solve_helmholtz(symbol_shift: float, stiffness: float, biharmonic: float, rhs: Field) -> Field:
    """Solve ``(symbol_shift*I - stiffness*Lap_h + biharmonic*Lap_h^2) u = rhs``.

    Raises:
        ValueError: if ``symbol_shift <= 0`` or a coefficient is negative.
    """
    if not symbol_shift > 0:
        raise ValueError(f"symbol_shift must be positive, got {symbol_shift}")
    if stiffness < 0 or biharmonic < 0:
        raise ValueError("stiffness and biharmonic coefficients must be non-negative")
    plan = spectral_plan(rhs.grid)
    return Field(rhs.grid, plan.helmholtz(symbol_shift, stiffness, biharmonic, rhs.values))


def inverse_neumann_laplacian(f: Field, ws: DualNormWorkspace) -> Field:
    """Mean-free ``u`` with ``-Lap_h u = f``; ``f`` must already be mean-free."""
    check_same_grid(f, ws)
    m = mean(f)
    if abs(m) > MEAN_REJECT_TOL:
        raise ValueError(f"input must be mean-free (|mean| = {abs(m):.3e})")
    return Field(f.grid, ws.solve(f.values))


def forward_differences(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Per-axis forward differences; the last face mirrors onto itself (zero flux)."""
    grads = []
    for axis, h in enumerate(grid.spacing):
        d = np.diff(values, axis=axis, append=np.take(values, [-1], axis=axis)) / h
        grads.append(d)
    return grads


def grad_norm_sq_array(values: np.ndarray, grid: Grid) -> float:
    return float(sum(np.sum(d * d) for d in forward_differences(values, grid)) * grid.cell_volume)


def norm_l2(f: Field) -> float:
    return float(np.sqrt(np.sum(f.values**2) * f.grid.cell_volume))


def norm_grad(f: Field) -> float:
    """L2 norm of the discrete gradient; equals sqrt(<-Lap_h f, f>)."""
    return float(np.sqrt(grad_norm_sq_array(f.values, f.grid)))


def norm_h1(f: Field) -> float:
    return float(np.hypot(norm_l2(f), norm_grad(f)))


def dual_norm(f: Field, ws: DualNormWorkspace) -> float:
    """Negative-order norm ``sqrt(|grad (-Lap)^-1 (f - f_mean)|^2 + f_mean^2)``."""
    check_same_grid(f, ws)
    m = mean(f)
    fluct = f.values - m
    # |grad u|^2 = <f - m, u> for u = (-Lap_h)^-1 (f - m)
    u = ws.solve(fluct)
    energy = max(float(np.vdot(fluct, u)) * f.grid.cell_volume, 0.0)
    return float(np.hypot(np.sqrt(energy), m))


def as_field(grid: Grid, values: Sequence[float] | np.ndarray) -> Field:
    return Field(grid, np.asarray(values, dtype=float))
