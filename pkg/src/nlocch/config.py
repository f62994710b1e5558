"""Experiment configuration: a sectioned ``key = value`` text format.

Grammar (INI-like, parsed with :mod:`configparser`)::

    [grid]
    dim = 2
    points = 128, 128
    extents = 1.0, 1.0

    [model]
    P = 0.5
    ...

Lists are comma separated. Cosine polynomials use ``amplitude@k1,k2`` terms
joined by ``+``; catalog entries are separated by ``;``. Every key is
documented in ``KEYS`` with its default. :func:`serialize` writes the
canonical form, and ``serialize(parse(text)) == text`` for canonical text.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .catalog import DEFAULT_OPERATOR_CATALOG, CosinePolynomial
from .errors import ConfigError
from .grid import Grid
from .lab import SweepPlan
from .physics import INTERPOLATIONS, POTENTIALS, ModelParams
from .solver_local import SolverConfig

# section -> key -> default (as canonical text)
KEYS = {
    "grid": {
        "dim": "2",
        "points": "128, 128",
        "extents": "1.0, 1.0",
    },
    "model": {
        "P": "0.5",
        "A": "0.25",
        "B": "1.0",
        "C": "1.0",
        "sigma_s": "1.0",
        "potential": "double_well",
        "interpolation": "tanh",
    },
    "sweep": {
        "epsilons": "",
        "t_end": "0.5",
        "dt_base": "0.0001",
        "c_dt": "none",
        "snapshot_stride": "20",
        "scheme": "implicit",
        "local_stabilization": "auto",
        "nonlocal_stabilization": "auto",
        "cg_tol": "1e-10",
        "catalog": "; ".join(c.format() for c in DEFAULT_OPERATOR_CATALOG),
        "energy_probe": "1.0@1,0",
    },
    "io": {
        "output": "results",
        "formats": "csv, json",
    },
    "initial": {
        "phi0": "0.2@1,1",
        "sigma0": "0.8",
        "phi0_shift": "0.0",
    },
}

FORMATS = ("csv", "json")


@dataclass
class ExperimentConfig:
    dim: int = 2
    points: tuple = (128, 128)
    extents: tuple = (1.0, 1.0)
    P: float = 0.5
    A: float = 0.25
    B: float = 1.0
    C: float = 1.0
    sigma_s: float = 1.0
    potential: str = "double_well"
    interpolation: str = "tanh"
    epsilons: tuple = ()
    t_end: float = 0.5
    dt_base: float = 1e-4
    c_dt: Optional[float] = None
    snapshot_stride: int = 20
    scheme: str = "implicit"
    local_stabilization: Optional[float] = None
    nonlocal_stabilization: Optional[float] = None
    cg_tol: float = 1e-10
    catalog: tuple = DEFAULT_OPERATOR_CATALOG
    energy_probe: CosinePolynomial = field(default_factory=lambda: CosinePolynomial.mode(1, 0))
    output: str = "results"
    formats: tuple = FORMATS
    phi0: CosinePolynomial = field(default_factory=lambda: CosinePolynomial.mode(1, 1, amplitude=0.2))
    sigma0: Union[float, CosinePolynomial] = 0.8
    phi0_shift: float = 0.0
    _lines: dict = field(default_factory=dict, repr=False, compare=False)

    # ------------------------------------------------------------ derived

    def grid(self) -> Grid:
        return Grid(self.points, self.extents)

    def params(self) -> ModelParams:
        return ModelParams(
            P=self.P,
            A=self.A,
            B=self.B,
            C=self.C,
            sigma_s=self.sigma_s,
            potential=POTENTIALS[self.potential](),
            interp=INTERPOLATIONS[self.interpolation](),
        )

    def local_cfg(self) -> SolverConfig:
        return SolverConfig(
            dt=self.dt_base,
            t_end=self.t_end,
            stabilization=self.local_stabilization,
            snapshot_stride=self.snapshot_stride,
        )

    def nonlocal_cfg(self) -> SolverConfig:
        return SolverConfig(
            dt=self.dt_base,
            t_end=self.t_end,
            stabilization=self.nonlocal_stabilization,
            snapshot_stride=self.snapshot_stride,
            scheme=self.scheme,
            cg_tol=self.cg_tol,
        )

    def positivity_gate(self):
        if self.dt_base * self.C > 1.0:
            raise self._error(
                f"positivity gate violated: dt_base*C = {self.dt_base * self.C:g} > 1", "sweep", "dt_base"
            )

    def sweep_plan(self) -> SweepPlan:
        self.positivity_gate()
        try:
            return SweepPlan(
                epsilons=self.epsilons,
                grid=self.grid(),
                params=self.params(),
                local_cfg=self.local_cfg(),
                nonlocal_cfg=self.nonlocal_cfg(),
                phi0=self.phi0,
                sigma0=self.sigma0,
                catalog=self.catalog,
                energy_probe=self.energy_probe,
                c_dt=self.c_dt,
                phi0_shift=self.phi0_shift,
            )
        except ConfigError as exc:
            section, _, key = (exc.field or "").partition(".")
            if exc.line is None and key:
                raise ConfigError(exc.message, field=exc.field, line=self._lines.get((section, key))) from exc
            raise

    def _error(self, message, section, key):
        return ConfigError(message, field=f"{section}.{key}", line=self._lines.get((section, key)))

    def resolved(self) -> dict:
        """Plain-dict view with every key filled in (embedded in reports)."""
        out = {}
        for section, keys in _values(self).items():
            out[section] = dict(keys)
        return out


# ----------------------------------------------------------------- parsing


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _opt_float(text, none_word):
    return None if text.strip().lower() == none_word else float(text)


def _sigma0(text):
    return CosinePolynomial.parse(text) if "@" in text else float(text)


def _catalog(text):
    return tuple(CosinePolynomial.parse(chunk) for chunk in text.split(";") if chunk.strip())


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to 1-based line numbers for diagnostics."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = no
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index[(section, m.group(1).strip())] = no
    return index


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text.

    Raises:
        ConfigError: with the offending ``section.key`` and line number.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive (P, A, B, C)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}", line=getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)
    cfg = ExperimentConfig(_lines=lines)

    def err(msg, section, key=None):
        fieldname = f"{section}.{key}" if key else section
        return ConfigError(msg, field=fieldname, line=lines.get((section, key)))

    for section in cp.sections():
        if section not in KEYS:
            raise err(f"unknown section [{section}]", section)
        for key in cp[section]:
            if key not in KEYS[section]:
                raise err(f"unknown key {key!r}", section, key)

    def get(section, key):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        return KEYS[section][key]

    converters = {
        ("grid", "dim"): ("dim", int),
        ("grid", "points"): ("points", _ints),
        ("grid", "extents"): ("extents", _floats),
        ("model", "P"): ("P", float),
        ("model", "A"): ("A", float),
        ("model", "B"): ("B", float),
        ("model", "C"): ("C", float),
        ("model", "sigma_s"): ("sigma_s", float),
        ("model", "potential"): ("potential", str),
        ("model", "interpolation"): ("interpolation", str),
        ("sweep", "epsilons"): ("epsilons", _floats),
        ("sweep", "t_end"): ("t_end", float),
        ("sweep", "dt_base"): ("dt_base", float),
        ("sweep", "c_dt"): ("c_dt", lambda s: _opt_float(s, "none")),
        ("sweep", "snapshot_stride"): ("snapshot_stride", int),
        ("sweep", "scheme"): ("scheme", str),
        ("sweep", "local_stabilization"): ("local_stabilization", lambda s: _opt_float(s, "auto")),
        ("sweep", "nonlocal_stabilization"): ("nonlocal_stabilization", lambda s: _opt_float(s, "auto")),
        ("sweep", "cg_tol"): ("cg_tol", float),
        ("sweep", "catalog"): ("catalog", _catalog),
        ("sweep", "energy_probe"): ("energy_probe", CosinePolynomial.parse),
        ("io", "output"): ("output", str),
        ("io", "formats"): ("formats", lambda s: tuple(x.strip() for x in s.split(",") if x.strip())),
        ("initial", "phi0"): ("phi0", CosinePolynomial.parse),
        ("initial", "sigma0"): ("sigma0", _sigma0),
        ("initial", "phi0_shift"): ("phi0_shift", float),
    }
    for (section, key), (attr, conv) in converters.items():
        raw = get(section, key)
        if section == "sweep" and key == "epsilons" and not raw:
            continue
        try:
            setattr(cfg, attr, conv(raw))
        except (TypeError, ValueError) as exc:
            raise err(f"cannot parse {raw!r}: {exc}", section, key) from exc

    _validate(cfg, err)
    return cfg


def _validate(cfg: ExperimentConfig, err):
    if not cfg.epsilons:
        raise err("epsilons required", "sweep", "epsilons")
    if cfg.dim not in (1, 2, 3):
        raise err(f"dim must be 1, 2 or 3, got {cfg.dim}", "grid", "dim")
    if len(cfg.points) != cfg.dim:
        raise err(f"expected {cfg.dim} point counts", "grid", "points")
    if len(cfg.extents) != cfg.dim:
        raise err(f"expected {cfg.dim} extents", "grid", "extents")
    if any(p < 4 for p in cfg.points):
        raise err("need at least 4 points per axis", "grid", "points")
    if any(not (e > 0 and math.isfinite(e)) for e in cfg.extents):
        raise err("extents must be positive", "grid", "extents")
    for name in ("P", "A", "B", "C"):
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v >= 0):
            raise err(f"{name} = {v} rejected: model rates must be non-negative constants (non-negativity assumption)", "model", name)
    if not 0.0 <= cfg.sigma_s <= 1.0:
        raise err(f"sigma_s = {cfg.sigma_s} rejected: need 0 <= sigma_s <= 1", "model", "sigma_s")
    if cfg.potential not in POTENTIALS:
        raise err(f"unknown potential {cfg.potential!r} (known: {sorted(POTENTIALS)})", "model", "potential")
    if cfg.interpolation not in INTERPOLATIONS:
        raise err(
            f"unknown interpolation {cfg.interpolation!r} (known: {sorted(INTERPOLATIONS)})",
            "model",
            "interpolation",
        )
    if any(e <= 0 for e in cfg.epsilons):
        raise err("epsilons must be positive", "sweep", "epsilons")
    if not cfg.t_end > 0:
        raise err("t_end must be positive", "sweep", "t_end")
    if not cfg.dt_base > 0:
        raise err("dt_base must be positive", "sweep", "dt_base")
    if cfg.c_dt is not None and not cfg.c_dt > 0:
        raise err("c_dt must be positive or 'none'", "sweep", "c_dt")
    if cfg.snapshot_stride < 1:
        raise err("snapshot_stride must be >= 1", "sweep", "snapshot_stride")
    if cfg.scheme not in ("implicit", "stabilized"):
        raise err(f"scheme must be 'implicit' or 'stabilized', got {cfg.scheme!r}", "sweep", "scheme")
    if not 0 < cfg.cg_tol < 1:
        raise err("cg_tol must lie in (0, 1)", "sweep", "cg_tol")
    for poly, key in [(cfg.energy_probe, "energy_probe")] + [(c, "catalog") for c in cfg.catalog]:
        if poly.dim != cfg.dim:
            raise err(f"test function {poly.format()!r} is not {cfg.dim}-D", "sweep", key)
    if cfg.phi0.dim != cfg.dim:
        raise err("phi0 dimension does not match the grid", "initial", "phi0")
    if isinstance(cfg.sigma0, CosinePolynomial):
        if cfg.sigma0.dim != cfg.dim:
            raise err("sigma0 dimension does not match the grid", "initial", "sigma0")
        bound = sum(abs(a) for a, _ in cfg.sigma0.terms)
        if bound > 1.0 or _constant_part(cfg.sigma0) - _oscillating_part(cfg.sigma0) < 0.0:
            raise err("sigma0 must stay within [0, 1]", "initial", "sigma0")
    elif not 0.0 <= cfg.sigma0 <= 1.0:
        raise err("sigma0 must lie in [0, 1]", "initial", "sigma0")
    bad = [f for f in cfg.formats if f not in FORMATS]
    if bad or not cfg.formats:
        raise err(f"formats must be a subset of {FORMATS}", "io", "formats")
    # structural problems surface here with field names
    try:
        cfg.grid()
    except ValueError as exc:
        raise err(str(exc), "grid", "points") from exc


def _constant_part(poly: CosinePolynomial) -> float:
    return sum(a for a, ks in poly.terms if not any(ks))


def _oscillating_part(poly: CosinePolynomial) -> float:
    return sum(abs(a) for a, ks in poly.terms if any(ks))


# ------------------------------------------------------------- serialising


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _values(cfg: ExperimentConfig) -> dict:
    sigma0 = cfg.sigma0.format() if isinstance(cfg.sigma0, CosinePolynomial) else _fmt_float(cfg.sigma0)
    return {
        "grid": [
            ("dim", str(cfg.dim)),
            ("points", ", ".join(str(p) for p in cfg.points)),
            ("extents", ", ".join(_fmt_float(e) for e in cfg.extents)),
        ],
        "model": [
            ("P", _fmt_float(cfg.P)),
            ("A", _fmt_float(cfg.A)),
            ("B", _fmt_float(cfg.B)),
            ("C", _fmt_float(cfg.C)),
            ("sigma_s", _fmt_float(cfg.sigma_s)),
            ("potential", cfg.potential),
            ("interpolation", cfg.interpolation),
        ],
        "sweep": [
            ("epsilons", ", ".join(_fmt_float(e) for e in cfg.epsilons)),
            ("t_end", _fmt_float(cfg.t_end)),
            ("dt_base", _fmt_float(cfg.dt_base)),
            ("c_dt", "none" if cfg.c_dt is None else _fmt_float(cfg.c_dt)),
            ("snapshot_stride", str(cfg.snapshot_stride)),
            ("scheme", cfg.scheme),
            ("local_stabilization", "auto" if cfg.local_stabilization is None else _fmt_float(cfg.local_stabilization)),
            (
                "nonlocal_stabilization",
                "auto" if cfg.nonlocal_stabilization is None else _fmt_float(cfg.nonlocal_stabilization),
            ),
            ("cg_tol", _fmt_float(cfg.cg_tol)),
            ("catalog", "; ".join(c.format() for c in cfg.catalog)),
            ("energy_probe", cfg.energy_probe.format()),
        ],
        "io": [
            ("output", cfg.output),
            ("formats", ", ".join(cfg.formats)),
        ],
        "initial": [
            ("phi0", cfg.phi0.format()),
            ("sigma0", sigma0),
            ("phi0_shift", _fmt_float(cfg.phi0_shift)),
        ],
    }


def serialize(cfg: ExperimentConfig) -> str:
    blocks = []
    for section, items in _values(cfg).items():
        lines = [f"[{section}]"] + [f"{k} = {v}" for k, v in items]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
