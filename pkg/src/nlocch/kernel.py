"""Radial mollifier profiles and the sampled interaction kernel.

The profile is the compactly supported bump

    rho_1(r) = c_n * r**2 * exp(-1 / (1 - r**2)),   |r| < 1,

rescaled as ``rho_eps(r) = eps**-n * rho_1(r / eps)``. The induced kernel
``J_eps(x) = rho_eps(|x|) / |x|**2 = c_n * eps**-(n+2) * exp(-1/(1-|x/eps|**2))``
is smooth, so midpoint sums over the lattice converge quickly.

``c_n`` is fixed by the moment condition ``int_0^inf rho_1(r) r**(n-1) dr = 2/C_n``
with ``C_n`` the integral of ``sigma_1**2`` over the unit sphere. That
normalisation makes the second moment ``int J_eps(z) z_1**2 dz`` equal to 2,
which is exactly what ``L_eps -> -Lap`` needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .errors import ResolutionError
from .grid import Field, Grid

MOMENT_TOL = 1e-8


def c_n_constant(n: int) -> float:
    """Integral of ``sigma_1**2`` over the unit sphere S^{n-1}: |S^{n-1}| / n."""
    if n not in (1, 2, 3):
        raise ValueError(f"n must be 1, 2 or 3, got {n}")
    surface = 2.0 * pi ** (n / 2) / gamma(n / 2)
    return surface / n


def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _radial_moment(n: int, scale: float = 1.0) -> float:
    # int_0^1 scale * r^2 * bump(r) * r^(n-1) dr
    val, _ = integrate.quad(
        lambda r: scale * r ** (n + 1) * float(_bump(r)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200
    )
    return val


@dataclass(frozen=True)
class MollifierProfile:
    """Normalised bump profile for dimension ``dim``.

    Attributes:
        dim: spatial dimension n.
        c_n: normalisation constant of the profile (not the sphere constant).
        sphere_constant: ``C_n``.
        moment_residual: ``|int rho_1 r^(n-1) - 2/C_n|`` recomputed after normalisation.
    """

    dim: int
    c_n: float
    sphere_constant: float
    moment_residual: float
    shape: str = "smooth_bump"

    def rho1(self, r):
        r = np.asarray(r, dtype=float)
        return self.c_n * r**2 * _bump(r)

    def rho(self, r, epsilon: float):
        return epsilon ** (-self.dim) * self.rho1(np.asarray(r, dtype=float) / epsilon)

    def j_eps(self, radius, epsilon: float):
        """``J_eps`` as a function of ``|x|`` (the 1/|x|^2 factor is cancelled analytically)."""
        s = np.asarray(radius, dtype=float) / epsilon
        return self.c_n * epsilon ** (-self.dim - 2) * _bump(s)

    def moment(self) -> float:
        return _radial_moment(self.dim, self.c_n)


def build_profile(n: int) -> MollifierProfile:
    sphere = c_n_constant(n)
    raw = _radial_moment(n)
    c = 2.0 / (sphere * raw)
    residual = abs(_radial_moment(n, c) - 2.0 / sphere)
    if residual > MOMENT_TOL:
        raise ArithmeticError(f"moment normalisation failed for n={n}: residual {residual:.2e}")
    return MollifierProfile(dim=n, c_n=c, sphere_constant=sphere, moment_residual=residual)


class PaddedConvolution:
    """Linear (non-circular) convolution of grid data with a fixed stencil.

    Computes ``out_i = sum_j K[i - j] * u_j`` for the stencil ``K`` indexed by
    offsets ``-R..R`` per axis. Both operands are zero padded to at least
    ``N + 2R`` per axis before the real FFT, so nothing wraps around.
    """

    def __init__(self, stencil: np.ndarray, shape: tuple[int, ...]):
        self.shape = tuple(shape)
        self.radius = tuple((s - 1) // 2 for s in stencil.shape)
        self.fft_shape = tuple(
            sfft.next_fast_len(n + 2 * r, real=True) for n, r in zip(self.shape, self.radius)
        )
        self._kernel_hat = sfft.rfftn(stencil, s=self.fft_shape)
        self._window = tuple(slice(r, r + n) for r, n in zip(self.radius, self.shape))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        u_hat = sfft.rfftn(values, s=self.fft_shape)
        full = sfft.irfftn(u_hat * self._kernel_hat, s=self.fft_shape)
        return full[self._window]


@dataclass(frozen=True, eq=False)
class Kernel:
    """Sampled ``J_eps`` on a grid's difference lattice.

    Attributes:
        samples: ``J_eps(z)`` for lattice offsets ``z = m*h`` with ``|m_i| <= radius_cells[i]``.
        a_eps: ``int_Omega J_eps(x - y) dy`` at every node (midpoint rule).
        mass: discrete total mass ``sum_z J_eps(z) * cell_volume``.
    """

    epsilon: float
    profile: MollifierProfile
    grid: Grid
    samples: np.ndarray
    radius_cells: tuple[int, ...]
    a_eps: Field
    mass: float
    convolution: PaddedConvolution

    @property
    def peak(self) -> float:
        return float(self.samples[tuple(self.radius_cells)])

    @property
    def min_a_eps_eps2(self) -> float:
        return float(self.a_eps.values.min() * self.epsilon**2)

    def offsets(self) -> tuple[np.ndarray, ...]:
        axes = [np.arange(-r, r + 1) * h for r, h in zip(self.radius_cells, self.grid.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def convolve(self, values: np.ndarray) -> np.ndarray:
        """``(J_eps * (u 1_Omega))`` at the nodes, midpoint quadrature."""
        return self.convolution(values)

    def metadata(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "c_n": self.profile.c_n,
            "mass": self.mass,
            "min_a_eps": float(self.a_eps.values.min()),
            "max_a_eps": float(self.a_eps.values.max()),
        }


def build_kernel(profile: MollifierProfile, epsilon: float, grid: Grid) -> Kernel:
    """Sample ``J_eps`` and precompute ``a_eps``.

    Raises:
        ResolutionError: if ``epsilon < 2 * max(spacing)``.
    """
    if profile.dim != grid.dim:
        raise ValueError(f"profile is {profile.dim}-D but grid is {grid.dim}-D")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    hmax = max(grid.spacing)
    if epsilon < 2.0 * hmax:
        raise ResolutionError(
            f"epsilon={epsilon} under-resolved: need epsilon >= 2*max(spacing) = {2 * hmax}"
        )
    # offsets beyond N-1 never pair two nodes of the grid
    radius = tuple(
        min(int(np.ceil(epsilon / h)), n - 1) for h, n in zip(grid.spacing, grid.points)
    )
    axes = [np.arange(-r, r + 1) * h for r, h in zip(radius, grid.spacing)]
    z = np.meshgrid(*axes, indexing="ij")
    dist = np.sqrt(sum(zi**2 for zi in z))
    samples = profile.j_eps(dist, epsilon)
    # exact lattice symmetry z -> -z
    samples = 0.5 * (samples + samples[tuple(slice(None, None, -1) for _ in radius)])
    samples.flags.writeable = False
    w = grid.cell_volume
    conv = PaddedConvolution(samples * w, grid.shape)
    a_eps = Field(grid, conv(np.ones(grid.shape)))
    return Kernel(
        epsilon=float(epsilon),
        profile=profile,
        grid=grid,
        samples=samples,
        radius_cells=radius,
        a_eps=a_eps,
        mass=float(samples.sum() * w),
        convolution=conv,
    )
