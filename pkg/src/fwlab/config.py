"""Flat key=value configuration files with per-stage schemas.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Unknown keys are hard errors so that typos never silently fall back to
defaults.  The FWLAB_OUTPUT_DIR environment variable overrides only
output_dir.
"""

from __future__ import annotations

import os

from .errors import ConfigError

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _parse_scalar(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in _BOOL:
        return _BOOL[low]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_scalar(raw)
    return out


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# Documented keys per stage; values are defaults (None = required).
SIMULATE_KEYS = {
    "alpha": None,
    "n_points": 2 ** 12,
    "n_cap": 2 ** 16,
    "half_length": 4.0,
    "cfl": 0.4,
    "gradient_safety": 0.05,
    "stop_gradient": -1e4,
    "epsilon": 0.1,
    "M": 1e3,
    "delta": 0.01,
    "perturb_amplitude": 0.0,
    "perturb_center": 3.5,
    "perturb_width": 2.0,
    "dispersion": True,
    "output_dir": "runs/simulate",
}

SELFSIM_KEYS = {
    "alpha": None,
    "epsilon": 0.1,
    "M": 1e3,
    "delta": 0.01,
    "n_x": 2048,
    "half_x": 12.0,
    "ds": 2e-4,
    "cfl_x": 0.4,
    "s_span": 6.5,
    "sponge_start": 0.85,
    "sponge_rate": 60.0,
    "record_interval": 0.005,
    "snapshot_interval": 0.02,
    "perturb_amplitude": 0.0,
    "perturb_center": 3.5,
    "perturb_width": 2.0,
    "dispersion": True,
    "phys_n0": 2 ** 13,
    "phys_n_cap": 2 ** 16,
    "phys_half_length": 4.0,
    "phys_cfl": 0.4,
    "phys_gradient_safety": 0.05,
    "output_dir": "runs/selfsim",
}

INITDATA_KEYS = {
    "M": 1e3,
    "epsilon": 0.1,
    "delta": 0.01,
    "perturb_amplitude": 0.0,
    "perturb_center": 3.5,
    "perturb_width": 2.0,
    "output_dir": "runs/initdata",
}

RUN_KEYS = {
    "stages": "initdata,simulate,selfsim,diagnose",
    "require": "",
    "output_dir": "runs/experiment",
}

DIAGNOSE_KEYS = {
    "holder_window_lo": 1e-3,
    "holder_window_hi": 1e-1,
    "convergence_window0": 2.0,
    "convergence_window_rate": 0.4,
    "nu_cauchy_tol": 1e-2,
}


def resolve(config: dict, schema: dict, extra_schemas: tuple[dict, ...] = ()) -> dict:
    """Fill defaults, reject unknown keys, and apply env overrides."""
    allowed: dict = {}
    for sch in (schema, *extra_schemas):
        allowed.update(sch)
    unknown = set(config) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = dict(allowed)
    out.update(config)
    missing = [k for k, v in out.items() if v is None]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(sorted(missing))}")
    env_dir = os.environ.get("FWLAB_OUTPUT_DIR")
    if env_dir and "output_dir" in out:
        out["output_dir"] = env_dir
    return out
