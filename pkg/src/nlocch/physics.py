"""Potentials, interpolation functions, reaction terms and model parameters.

Structural requirements on these ingredients (non-negativity, growth and
semiconvexity of the potential, range and Lipschitz bound of the
interpolation) are checked on a sample grid when a spec is constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .grid import Field, check_same_grid

SAMPLE_RANGE = (-10.0, 10.0)
SAMPLE_POINTS = 10_000


def _samples():
    return np.linspace(*SAMPLE_RANGE, SAMPLE_POINTS)


@dataclass(frozen=True)
class PotentialSpec:
    """Potential ``Psi`` with derivatives and growth/semiconvexity constants.

    Construction fails if, on the sample grid, ``Psi < 0``,
    ``Psi'' < -c3``, or ``Psi < quartic_c1*|s|^4 - quartic_c2``.
    """

    name: str
    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]
    d2psi: Callable[[np.ndarray], np.ndarray]
    c3: float
    quartic_c1: float
    quartic_c2: float

    def __post_init__(self):
        report = self.check()
        bad = [k for k, ok in report.items() if k.endswith("_ok") and not ok]
        if bad:
            raise ValueError(f"potential {self.name!r} violates sampled bounds: {bad}")

    def check(self) -> dict:
        s = _samples()
        psi, dpsi, d2 = self.psi(s), self.dpsi(s), self.d2psi(s)
        finite = bool(np.all(np.isfinite(psi)) and np.all(np.isfinite(dpsi)) and np.all(np.isfinite(d2)))
        growth_gap = float(np.min(psi - (self.quartic_c1 * s**4 - self.quartic_c2)))
        return {
            "finite_ok": finite,
            "min_psi": float(psi.min()),
            "nonnegative_ok": bool(psi.min() >= 0.0),
            "min_d2psi": float(d2.min()),
            "semiconvex_ok": bool(d2.min() >= -self.c3),
            "growth_margin": growth_gap,
            "growth_ok": growth_gap >= 0.0,
        }


@dataclass(frozen=True)
class InterpolationSpec:
    name: str
    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray]
    lipschitz: float

    def __post_init__(self):
        report = self.check()
        if not (report["range_ok"] and report["lipschitz_ok"]):
            raise ValueError(f"interpolation {self.name!r} violates sampled bounds: {report}")

    def check(self) -> dict:
        s = _samples()
        hv, dh = self.h(s), self.dh(s)
        return {
            "min_h": float(hv.min()),
            "max_h": float(hv.max()),
            "range_ok": bool(hv.min() >= 0.0 and hv.max() <= 1.0),
            "max_abs_dh": float(np.abs(dh).max()),
            "lipschitz_ok": bool(np.abs(dh).max() <= self.lipschitz),
        }


def _dw(s):
    return 0.25 * (1.0 - s * s) ** 2


def _dw_prime(s):
    return s**3 - s


def _dw_second(s):
    return 3.0 * s * s - 1.0


def _tanh_ramp(s):
    return 0.5 * (1.0 + np.tanh(2.0 * s))


def _tanh_ramp_prime(s):
    return 1.0 - np.tanh(2.0 * s) ** 2


def double_well() -> PotentialSpec:
    """``Psi(s) = (1 - s^2)^2 / 4``."""
    return PotentialSpec(
        name="double_well",
        psi=_dw,
        dpsi=_dw_prime,
        d2psi=_dw_second,
        c3=1.0,
        quartic_c1=1.0 / 8.0,
        quartic_c2=1.0,
    )


def smooth_interpolation() -> InterpolationSpec:
    """``h(s) = (1 + tanh(2s)) / 2``; ``h' = 1 - tanh(2s)^2`` peaks at 1."""
    return InterpolationSpec(
        name="tanh",
        h=_tanh_ramp,
        dh=_tanh_ramp_prime,
        lipschitz=1.0,
    )


POTENTIALS = {"double_well": double_well}
INTERPOLATIONS = {"tanh": smooth_interpolation}

# constant, or callable (t, grid) -> array of nodal values
SigmaSource = Union[float, Callable]


@dataclass(frozen=True)
class ModelParams:
    """Rates P (proliferation), A (apoptosis), B (supply), C (consumption) and ``sigma_s``."""

    P: float = 0.5
    A: float = 0.25
    B: float = 1.0
    C: float = 1.0
    sigma_s: SigmaSource = 1.0
    potential: PotentialSpec = field(default_factory=double_well)
    interp: InterpolationSpec = field(default_factory=smooth_interpolation)

    def __post_init__(self):
        for name in ("P", "A", "B", "C"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a non-negative constant, got {v}")
        if not callable(self.sigma_s) and not 0.0 <= float(self.sigma_s) <= 1.0:
            raise ValueError(f"sigma_s must lie in [0, 1], got {self.sigma_s}")

    def sigma_s_values(self, t: float, grid) -> np.ndarray:
        if callable(self.sigma_s):
            vals = np.broadcast_to(np.asarray(self.sigma_s(t, grid), dtype=float), grid.shape)
            if vals.min() < 0.0 or vals.max() > 1.0:
                raise ValueError(f"sigma_s(t={t}) leaves [0, 1]")
            return vals
        return np.full(grid.shape, float(self.sigma_s))


def reaction_phi_array(params: ModelParams, phi: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return (params.P * sigma - params.A) * params.interp.h(phi)


def reaction_sigma_array(params: ModelParams, phi, sigma, sigma_s) -> np.ndarray:
    return params.B * (sigma_s - sigma) - params.C * sigma * params.interp.h(phi)


def reaction_phi(params: ModelParams, phi: Field, sigma: Field) -> Field:
    """``(P*sigma - A) * h(phi)`` nodewise."""
    grid = check_same_grid(phi, sigma)
    return Field(grid, reaction_phi_array(params, phi.values, sigma.values))


def reaction_sigma(params: ModelParams, phi: Field, sigma: Field, sigma_s: Field) -> Field:
    """``B*(sigma_s - sigma) - C*sigma*h(phi)`` nodewise."""
    grid = check_same_grid(phi, sigma, sigma_s)
    return Field(grid, reaction_sigma_array(params, phi.values, sigma.values, sigma_s.values))
