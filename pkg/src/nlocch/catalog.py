"""Cosine polynomials: smooth test functions with zero normal derivative on box faces.

A term ``a * prod_i cos(pi * k_i * x_i / L_i)`` is written ``a@k1,k2`` in
configuration files; terms are joined with ``+``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid


@dataclass(frozen=True)
class CosinePolynomial:
    """Finite sum of tensor cosine modes.

    Attributes:
        terms: tuple of ``(amplitude, wavenumbers)`` pairs.
    """

    terms: tuple[tuple[float, tuple[int, ...]], ...]

    def __post_init__(self):
        terms = tuple((float(a), tuple(int(k) for k in ks)) for a, ks in self.terms)
        if not terms:
            raise ValueError("cosine polynomial needs at least one term")
        dims = {len(ks) for _, ks in terms}
        if len(dims) != 1:
            raise ValueError("all terms must have the same number of wavenumbers")
        if any(k < 0 for _, ks in terms for k in ks):
            raise ValueError("wavenumbers must be non-negative")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def mode(cls, *wavenumbers: int, amplitude: float = 1.0) -> "CosinePolynomial":
        return cls(((amplitude, tuple(wavenumbers)),))

    @classmethod
    def parse(cls, text: str) -> "CosinePolynomial":
        terms = []
        # a "+" right after an exponent marker belongs to the number
        for chunk in re.split(r"(?<![eE])\+", text):
            chunk = chunk.strip()
            if not chunk:
                raise ValueError(f"empty term in {text!r}")
            amp, sep, ks = chunk.partition("@")
            if not sep:
                raise ValueError(f"term {chunk!r} must look like 'amplitude@k1,k2'")
            terms.append((float(amp), tuple(int(k) for k in ks.split(","))))
        return cls(tuple(terms))

    def format(self) -> str:
        return " + ".join(f"{a!r}@{','.join(str(k) for k in ks)}" for a, ks in self.terms)

    @property
    def dim(self) -> int:
        return len(self.terms[0][1])

    def _check(self, grid: Grid):
        if grid.dim != self.dim:
            raise ValueError(f"{self.dim}-D test function on a {grid.dim}-D grid")

    def _wave(self, ks, grid: Grid):
        return [np.pi * k / L for k, L in zip(ks, grid.extents)]

    def values(self, grid: Grid) -> np.ndarray:
        self._check(grid)
        x = grid.nodes()
        out = np.zeros(grid.shape)
        for a, ks in self.terms:
            term = np.full(grid.shape, a)
            for xi, w in zip(x, self._wave(ks, grid)):
                term = term * np.cos(w * xi)
            out += term
        return out

    def laplacian_values(self, grid: Grid) -> np.ndarray:
        """Exact continuum Laplacian sampled at the nodes."""
        self._check(grid)
        x = grid.nodes()
        out = np.zeros(grid.shape)
        for a, ks in self.terms:
            waves = self._wave(ks, grid)
            term = np.full(grid.shape, -a * sum(w * w for w in waves))
            for xi, w in zip(x, waves):
                term = term * np.cos(w * xi)
            out += term
        return out

    def field(self, grid: Grid) -> Field:
        return Field(grid, self.values(grid))

    def laplacian(self, grid: Grid) -> Field:
        return Field(grid, self.laplacian_values(grid))

    def dirichlet_energy(self, extents) -> float:
        """Exact ``1/2 * int |grad psi|^2`` over the box with the given extents."""
        combined: dict[tuple[int, ...], float] = {}
        for a, ks in self.terms:
            combined[ks] = combined.get(ks, 0.0) + a
        total = 0.0
        for ks, a in combined.items():
            k2 = sum((np.pi * k / L) ** 2 for k, L in zip(ks, extents))
            vol = np.prod([L if k == 0 else L / 2 for k, L in zip(ks, extents)])
            total += a * a * k2 * vol
        return 0.5 * float(total)


DEFAULT_OPERATOR_CATALOG = (
    CosinePolynomial.mode(1, 0),
    CosinePolynomial.mode(1, 2),
    CosinePolynomial(((1.0, (2, 0)), (1.0, (0, 3)))),
)
