"""Experiment directory output: manifests, CSV and JSON artifacts.

All floating-point output is printed with 17 significant digits so runs
can be compared byte for byte; the manifest is the only file carrying
wall-clock information.  FFTs use the in-process pocketfft path, which
is deterministic for a fixed input size.
"""

from __future__ import annotations

import json
import os
import subprocess
import time

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def version_string() -> str:
    from . import __version__
    try:
        root = os.path.dirname(os.path.dirname(os.path.dirname(__file__)))
        desc = subprocess.run(["git", "describe", "--always", "--dirty"],
                              cwd=root, capture_output=True, text=True, timeout=5)
        if desc.returncode == 0:
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_csv(path: str, columns: dict[str, np.ndarray | list]):
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    length = len(arrays[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(length):
            fh.write(",".join(_fmt(a[i]) for a in arrays) + "\n")


def write_json(path: str, payload: dict):
    def default(o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.bool_,)):
            return bool(o)
        raise TypeError(f"not JSON serializable: {type(o)}")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, default=default, sort_keys=True)
        fh.write("\n")


def write_manifest(outdir: str, stage: str, config: dict, started: float,
                   termination: str = "", extra: dict | None = None):
    payload = {
        "stage": stage,
        "config": {k: config[k] for k in sorted(config)},
        "version": version_string(),
        "wall_clock_seconds": time.time() - started,
        "termination": termination,
        "rng": "none (deterministic pipeline)",
        "fft": "numpy pocketfft, fixed sizes",
    }
    if extra:
        payload.update(extra)
    write_json(os.path.join(outdir, "manifest.json"), payload)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
