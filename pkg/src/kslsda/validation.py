"""Parameter checks shared by the estimator facade and user code."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_scalar

from .config import MODES, STARTS, RunConfig, validate
from .exceptions import ConfigError
from .spin import MagneticField

__all__ = ["check_choice", "check_positive", "check_nuclei", "check_field", "config_from_params"]


def check_choice(value, name: str, choices) -> str:
    if value not in choices:
        raise ConfigError(f"{name} must be one of {', '.join(choices)}, got {value!r}")
    return value


def check_positive(value, name: str, integer: bool = False, include_zero: bool = False):
    """Positive (or non-negative) finite scalar; sklearn's scalar check with our error type."""
    target = numbers.Integral if integer else numbers.Real
    try:
        check_scalar(value, name, target, min_val=0, include_boundaries="left" if include_zero else "neither")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    return value


def check_nuclei(nuclei) -> tuple:
    """Normalise ``[(z, (x, y, z)), ...]`` to nested tuples of int and floats."""
    out = []
    for item in nuclei:
        try:
            z, pos = item
            pos = tuple(float(p) for p in pos)
        except (TypeError, ValueError):
            raise ConfigError(f"nucleus must be (z, (x, y, z)), got {item!r}") from None
        if isinstance(z, bool) or int(z) != z:
            raise ConfigError(f"nuclear charge must be an integer, got {z!r}")
        if len(pos) != 3:
            raise ConfigError(f"nuclear position needs 3 coordinates, got {pos!r}")
        out.append((int(z), pos))
    return tuple(out)


def check_field(field) -> MagneticField:
    if field is None:
        return MagneticField()
    if isinstance(field, MagneticField):
        return field
    if isinstance(field, dict):
        return MagneticField(**field)
    raise ConfigError(f"field must be a MagneticField or a dict, got {type(field).__name__}")


def config_from_params(params: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig` from estimator hyper-parameters."""
    p = dict(params)
    check_positive(p["n"], "n", integer=True)
    check_positive(p["L"], "L")
    check_positive(p["lam"], "lam")
    check_choice(p["mode"], "mode", MODES)
    check_choice(p["starts"], "starts", STARTS)
    p["nuclei"] = check_nuclei(p.get("nuclei") or ())
    p["field"] = check_field(p.get("field"))
    if p.get("origin") is not None:
        p["origin"] = tuple(float(o) for o in p["origin"])
    if p.get("sweep_lambdas") is not None:
        p["sweep_lambdas"] = tuple(float(x) for x in p["sweep_lambdas"])
    else:
        p["sweep_lambdas"] = ()
    cfg = RunConfig(**p)
    validate(cfg)
    return cfg
