"""The convolution operator ``L_eps psi(x) = int_Omega J_eps(x-y) (psi(x) - psi(y)) dy``.

Discretised with the midpoint rule on the grid, so

    (L psi)_i = a_i psi_i - sum_j w J_eps(x_i - x_j) psi_j,   a_i = sum_j w J_eps(x_i - x_j),

with the convolution done by zero-padded FFTs (interactions never leave the box).
"""

from __future__ import annotations

import numpy as np

from .catalog import CosinePolynomial
from .errors import GridMismatchError
from .grid import Field, norm_l2
from .kernel import Kernel


class NonlocalOperator:
    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        self.grid = kernel.grid
        self._a = kernel.a_eps.values
        self._neumann_symbol = None

    @property
    def epsilon(self) -> float:
        return self.kernel.epsilon

    @property
    def max_a_eps(self) -> float:
        return float(self._a.max())

    def _check(self, psi: Field):
        if psi.grid != self.grid:
            raise GridMismatchError(
                f"field on grid {psi.grid.points} but operator built for {self.grid.points}"
            )

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        return self._a * values - self.kernel.convolve(values)

    def apply(self, psi: Field) -> Field:
        self._check(psi)
        return Field(self.grid, self.apply_array(psi.values))

    def energy_array(self, values: np.ndarray) -> float:
        return 0.5 * float(np.vdot(values, self.apply_array(values))) * self.grid.cell_volume

    def energy(self, psi: Field) -> float:
        """``E_eps(psi) = 1/2 <psi, L_eps psi>``, the quarter double integral."""
        self._check(psi)
        return self.energy_array(psi.values)

    def laplacian_residual(self, c: CosinePolynomial) -> float:
        """``||L_eps c + Lap c||_L2`` with the Laplacian taken exactly."""
        field = c.field(self.grid)
        return norm_l2(self.apply(field) + c.laplacian(self.grid))

    def neumann_symbol(self) -> np.ndarray:
        """Cosine-transform symbol of the evenly reflected kernel operator.

        Reflecting the kernel across every face makes the operator diagonal in
        the type-II cosine basis. It dominates ``L_eps`` (the difference is
        the positive semidefinite form of the image interactions), which makes
        it a good preconditioner.
        """
        if self._neumann_symbol is None:
            k = self.kernel
            w = self.grid.cell_volume
            table = k.samples * w
            for axis, (n, r) in enumerate(zip(self.grid.points, k.radius_cells)):
                m = np.arange(-r, r + 1)
                cos = np.cos(np.pi * np.outer(np.arange(n), m) / n)
                table = np.moveaxis(np.tensordot(cos, table, axes=([1], [axis])), 0, axis)
            sym = float(k.samples.sum() * w) - table
            sym[(0,) * self.grid.dim] = 0.0
            self._neumann_symbol = sym
        return self._neumann_symbol


def build_operator(kernel: Kernel) -> NonlocalOperator:
    return NonlocalOperator(kernel)
