"""Run configuration: a line-based ``key = value`` format with sections.

Example::

    # hydrogen-like atom in a uniform field
    lambda = 1.0
    mode = full

    [grid]
    n = 24
    L = 12.0

    [nucleus]
    z = 1
    position = 0 0 0

    [field]
    kind = uniform
    b0 = 0.05
    axis = z

Rules: ``#`` starts a comment line; a ``[section]`` header prefixes the keys
that follow (``[eig]`` then ``tol = 1e-8`` sets ``eig.tol``); a key that
already contains a dot is taken as a full name; ``[nucleus]`` may repeat,
one block per nucleus; every other key may appear once.  Vectors are
whitespace-separated numbers.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .grid import Grid, build_grid
from .spin import MU_B, ExternalFields, MagneticField
from .xc import SLATER_CX

__all__ = ["RunConfig", "parse_config", "render_config", "load_config", "MODES", "STARTS"]

MODES = ("full", "collinear", "unpolarized", "infinity", "noninteracting")
STARTS = ("default", "aligned", "both")
XC_NAMES = ("xalpha", "none")
PRECONDITIONERS = ("kinetic", "diagonal")
FIELD_KINDS = ("none", "uniform", "gaussian", "file")
_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; every field has its final value."""

    n: int
    L: float
    lam: float
    origin: Optional[tuple] = None
    nuclei: tuple = ()
    field: MagneticField = field(default_factory=MagneticField)
    mode: str = "full"
    xc: str = "xalpha"
    c_x: float = SLATER_CX
    mu: float = MU_B
    softening_a: Optional[float] = None
    poisson_tol: float = 1e-10
    poisson_max_iter: int = 5000
    eig_k_extra: int = 8
    eig_tol: float = 1e-8
    eig_max_iter: int = 500
    eig_seed: int = 0
    eig_preconditioner: str = "kinetic"
    mix_beta: float = 0.3
    scf_tol_rho: float = 1e-6
    scf_tol_e: float = 1e-7
    scf_max_iter: int = 300
    deg_tol: float = 1e-6
    starts: str = "default"
    sweep_lambdas: tuple = ()
    sweep_tol_bind: float = 1e-4

    def __post_init__(self):
        if self.softening_a is None:
            object.__setattr__(self, "softening_a", 0.5 * self.L / (self.n + 1))

    def grid(self) -> Grid:
        return build_grid(self.n, self.L, self.origin)

    def external(self) -> ExternalFields:
        return ExternalFields(self.nuclei, self.field, self.softening_a, self.mu)

    @property
    def Z(self) -> int:
        return int(sum(z for z, _ in self.nuclei))

    def replace(self, **changes) -> "RunConfig":
        """Copy with ``changes`` applied and re-validated."""
        out = dataclasses.replace(self, **changes)
        validate(out)
        return out


# full key -> (RunConfig field, kind)
_SCHEMA = {
    "lambda": ("lam", "float"),
    "mode": ("mode", MODES),
    "xc": ("xc", XC_NAMES),
    "xc.c_x": ("c_x", "float"),
    "mu": ("mu", "float"),
    "softening_a": ("softening_a", "float"),
    "grid.n": ("n", "int"),
    "grid.L": ("L", "float"),
    "grid.origin": ("origin", "vec3"),
    "poisson.tol": ("poisson_tol", "float"),
    "poisson.max_iter": ("poisson_max_iter", "int"),
    "eig.k_extra": ("eig_k_extra", "int"),
    "eig.tol": ("eig_tol", "float"),
    "eig.max_iter": ("eig_max_iter", "int"),
    "eig.seed": ("eig_seed", "int"),
    "eig.preconditioner": ("eig_preconditioner", PRECONDITIONERS),
    "mix.beta": ("mix_beta", "float"),
    "scf.tol_rho": ("scf_tol_rho", "float"),
    "scf.tol_e": ("scf_tol_e", "float"),
    "scf.max_iter": ("scf_max_iter", "int"),
    "deg_tol": ("deg_tol", "float"),
    "starts": ("starts", STARTS),
    "sweep.lambdas": ("sweep_lambdas", "floats"),
    "sweep.tol_bind": ("sweep_tol_bind", "float"),
}
_FIELD_SCHEMA = {
    "kind": FIELD_KINDS,
    "b0": "float",
    "axis": "axis",
    "center": "vec3",
    "width": "float",
    "amplitude": "float",
    "path": "str",
}
_NUCLEUS_SCHEMA = {"z": "int", "position": "vec3"}
_REQUIRED = ("grid.n", "grid.L", "lambda")


def _convert(raw: str, kind, key: str, line: int):
    try:
        if isinstance(kind, tuple):
            if raw not in kind:
                raise ValueError(f"must be one of {', '.join(kind)}")
            return raw
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not np.isfinite(v):
                raise ValueError("must be finite")
            return v
        if kind in ("vec3", "axis"):
            if kind == "axis" and raw in _AXES:
                return _AXES[raw]
            v = tuple(float(p) for p in raw.split())
            if len(v) != 3 or not all(np.isfinite(v)):
                raise ValueError("needs three finite numbers")
            return v
        if kind == "floats":
            v = tuple(float(p) for p in raw.split())
            if not v or not all(np.isfinite(v)):
                raise ValueError("needs one or more finite numbers")
            return v
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {key}: {exc}", line) from None
    raise AssertionError(kind)


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; errors carry the offending line number."""
    values = {}
    lines = {}
    nuclei = []
    field_vals = {}
    section = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section == "nucleus":
                nuclei.append(({}, lineno))
            elif section == "field":
                if "field" in lines:
                    raise ConfigError("duplicate [field] section", lineno)
                lines["field"] = lineno
            elif section not in ("grid", "xc", "poisson", "eig", "mix", "scf", "sweep", ""):
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if section == "nucleus" and "." not in key:
            block = nuclei[-1][0]
            if key not in _NUCLEUS_SCHEMA:
                raise ConfigError(f"unknown key {key!r} in [nucleus]", lineno)
            if key in block:
                raise ConfigError(f"duplicate key {key!r} in [nucleus]", lineno)
            block[key] = _convert(raw, _NUCLEUS_SCHEMA[key], key, lineno)
            continue
        if section == "field" and "." not in key:
            if key not in _FIELD_SCHEMA:
                raise ConfigError(f"unknown key {key!r} in [field]", lineno)
            if key in field_vals:
                raise ConfigError(f"duplicate key {key!r} in [field]", lineno)
            field_vals[key] = _convert(raw, _FIELD_SCHEMA[key], key, lineno)
            continue
        full = key if ("." in key or not section) else f"{section}.{key}"
        if full not in _SCHEMA:
            raise ConfigError(f"unknown key {full!r}", lineno)
        if full in lines:
            raise ConfigError(f"duplicate key {full!r} (first set on line {lines[full]})", lineno)
        name, kind = _SCHEMA[full]
        values[name] = _convert(raw, kind, full, lineno)
        lines[full] = lineno
    for key in _REQUIRED:
        if key not in lines:
            raise ConfigError(f"missing required key {key!r}")
    nuc = []
    for block, lineno in nuclei:
        for key in _NUCLEUS_SCHEMA:
            if key not in block:
                raise ConfigError(f"[nucleus] block is missing {key!r}", lineno)
        nuc.append((block["z"], block["position"]))
    values["nuclei"] = tuple(nuc)
    values["field"] = MagneticField(**field_vals)
    try:
        cfg = RunConfig(**values)
        validate(cfg)
    except ConfigError as exc:
        if exc.line is None:
            where = getattr(exc, "key", None)
            raise ConfigError(str(exc), lines.get(where)) from None
        raise
    return cfg


def _fail(msg, key=None):
    err = ConfigError(msg)
    err.key = key
    raise err


def validate(cfg: RunConfig) -> None:
    """Cross-field checks; raises :class:`ConfigError`."""
    if isinstance(cfg.n, bool) or int(cfg.n) != cfg.n or cfg.n < 2:
        _fail(f"grid.n must be an integer >= 2, got {cfg.n!r}", "grid.n")
    if not cfg.L > 0:
        _fail("grid.L must be positive", "grid.L")
    if not cfg.lam > 0:
        _fail("lambda must be positive", "lambda")
    if cfg.mode not in MODES:
        _fail(f"unknown mode {cfg.mode!r}", "mode")
    if cfg.xc not in XC_NAMES:
        _fail(f"unknown xc {cfg.xc!r}", "xc")
    if cfg.starts not in STARTS:
        _fail(f"unknown starts {cfg.starts!r}", "starts")
    if cfg.eig_preconditioner not in PRECONDITIONERS:
        _fail(f"unknown preconditioner {cfg.eig_preconditioner!r}", "eig.preconditioner")
    for key in ("poisson.tol", "eig.tol", "scf.tol_rho", "scf.tol_e", "deg_tol", "sweep.tol_bind", "xc.c_x", "mu"):
        name = _SCHEMA[key][0]
        if not getattr(cfg, name) > 0:
            _fail(f"{key} must be positive", key)
    for key in ("poisson.max_iter", "eig.max_iter", "scf.max_iter"):
        if getattr(cfg, _SCHEMA[key][0]) < 1:
            _fail(f"{key} must be >= 1", key)
    if cfg.eig_k_extra < 0:
        _fail("eig.k_extra must be >= 0", "eig.k_extra")
    if cfg.eig_seed < 0:
        _fail("eig.seed must be >= 0", "eig.seed")
    if not 0 < cfg.mix_beta <= 1:
        _fail("mix.beta must lie in (0, 1]", "mix.beta")
    if cfg.softening_a < 0:
        _fail("softening_a must be >= 0", "softening_a")
    if any(not lam > 0 for lam in cfg.sweep_lambdas):
        _fail("sweep.lambdas must be positive", "sweep.lambdas")
    grid = cfg.grid()
    for z, pos in cfg.nuclei:
        if z < 1:
            _fail(f"nuclear charge must be >= 1, got {z}")
        if not grid.contains(pos):
            _fail(f"nucleus at {pos} lies outside the box")
    f = cfg.field
    if f.kind != "none":
        if np.linalg.norm(f.axis) == 0:
            _fail("field axis must be non-zero")
        if f.kind == "gaussian" and not f.width > 0:
            _fail("gaussian field width must be positive")
        if f.kind == "file" and not f.path:
            _fail("field kind 'file' needs a path")
    if cfg.mode == "collinear" and f.kind in ("uniform", "gaussian") and not f.is_zero():
        d = np.asarray(f.axis, dtype=float)
        if abs(d[0]) > 0 or abs(d[1]) > 0:
            _fail("collinear mode couples only B_z; the field has x or y components", "mode")
    k = int(np.ceil(cfg.lam)) + cfg.eig_k_extra
    if 4 * k > 2 * grid.size:
        _fail(f"lambda + eig.k_extra needs {k} eigenpairs, too many for a {cfg.n}^3 grid", "lambda")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(float(x)) for x in v)
    return str(v)


def render_config(cfg: RunConfig) -> str:
    """Render a config so that ``parse_config(render_config(c)) == c``."""
    top, sections = [], {}
    for key, (name, _) in _SCHEMA.items():
        val = getattr(cfg, name)
        if val is None or (name == "sweep_lambdas" and not val):
            continue
        if "." in key:
            sec, sub = key.split(".", 1)
            sections.setdefault(sec, []).append(f"{sub} = {_fmt(val)}")
        else:
            top.append(f"{key} = {_fmt(val)}")
    out = top[:]
    for sec, body in sections.items():
        out += ["", f"[{sec}]"] + body
    for z, pos in cfg.nuclei:
        out += ["", "[nucleus]", f"z = {z}", f"position = {_fmt(pos)}"]
    f = cfg.field
    if f != MagneticField():
        out += ["", "[field]"]
        for fl in dataclasses.fields(MagneticField):
            val = getattr(f, fl.name)
            if fl.name == "path" and not val:
                continue
            out.append(f"{fl.name} = {_fmt(val)}")
    return "\n".join(out) + "\n"


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
