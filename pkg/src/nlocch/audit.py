"""Constructive checks of the structural assumptions on the model ingredients."""

from __future__ import annotations

from .kernel import MOMENT_TOL, build_profile
from .physics import ModelParams


def moment_checks(dims=(1, 2, 3)) -> list[dict]:
    out = []
    for n in dims:
        prof = build_profile(n)
        out.append(
            {
                "check": f"moment_n{n}",
                "c_n": prof.c_n,
                "sphere_constant": prof.sphere_constant,
                "target": 2.0 / prof.sphere_constant,
                "residual": prof.moment_residual,
                "ok": prof.moment_residual <= MOMENT_TOL,
            }
        )
    return out


def potential_checks(params: ModelParams) -> dict:
    pot = params.potential
    rep = pot.check()
    return {
        "check": f"potential_{pot.name}",
        "c3": pot.c3,
        "quartic_c1": pot.quartic_c1,
        "quartic_c2": pot.quartic_c2,
        **rep,
        "ok": bool(rep["finite_ok"] and rep["nonnegative_ok"] and rep["semiconvex_ok"] and rep["growth_ok"]),
    }


def interpolation_checks(params: ModelParams) -> dict:
    h = params.interp
    rep = h.check()
    return {"check": f"interpolation_{h.name}", "lipschitz": h.lipschitz, **rep,
            "ok": bool(rep["range_ok"] and rep["lipschitz_ok"])}


def parameter_checks(params: ModelParams) -> dict:
    sigma_ok = callable(params.sigma_s) or 0.0 <= float(params.sigma_s) <= 1.0
    rates_ok = all(getattr(params, k) >= 0 for k in ("P", "A", "B", "C"))
    return {
        "check": "rates",
        "P": params.P,
        "A": params.A,
        "B": params.B,
        "C": params.C,
        "sigma_s": params.sigma_s if not callable(params.sigma_s) else "callable",
        "ok": bool(sigma_ok and rates_ok),
    }


def run_audit(params: ModelParams | None = None) -> list[dict]:
    """All checks as a list of dicts, each with a boolean ``ok``."""
    params = params or ModelParams()
    return moment_checks() + [potential_checks(params), interpolation_checks(params), parameter_checks(params)]

