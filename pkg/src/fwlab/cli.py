"""Command-line interface.

Subcommands: profile, kernel, initdata, simulate, selfsim, diagnose,
run (full pipeline), sweep.  Solver stages read a flat key=value config
file; unknown keys are rejected.  See config.py for the documented keys.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as cfgmod
from . import experiments
from .errors import FwlabError
from .initdata import AdmissibilityParams, certification_grid, certify, selfsim_values
from .runio import ensure_dir, write_json
from .spectral import SelfSimField


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fwlab",
                                description="wave-breaking laboratory for weakly "
                                            "dispersive Burgers-type equations")
    sub = p.add_subparsers(dest="command", required=True)

    prof = sub.add_parser("profile", help="profile family tables")
    prof_sub = prof.add_subparsers(dest="action", required=True)
    pt = prof_sub.add_parser("table", help="CSV of the profile and derivatives")
    pt.add_argument("--nu", type=float, default=6.0)
    pt.add_argument("--xmin", type=float, required=True)
    pt.add_argument("--xmax", type=float, required=True)
    pt.add_argument("--n", type=int, required=True)
    pt.add_argument("--out", default="-")

    ker = sub.add_parser("kernel", help="high-frequency kernel tables")
    ker_sub = ker.add_subparsers(dest="action", required=True)
    kt = ker_sub.add_parser("table", help="CSV of kernel samples and envelope")
    kt.add_argument("--alpha", type=float, required=True)
    kt.add_argument("--rmax", type=float, default=12.0)
    kt.add_argument("--n", type=int, default=100)
    kt.add_argument("--refinement", type=int, default=1)
    kt.add_argument("--out", default="-")

    ini = sub.add_parser("initdata", help="construct or certify initial data")
    ini.add_argument("action", choices=["make", "certify"])
    ini.add_argument("--M", type=float, default=1e3)
    ini.add_argument("--epsilon", type=float, default=0.1)
    ini.add_argument("--delta", type=float, default=0.01)
    ini.add_argument("--input", default=None,
                     help="CSV with X,U columns on a uniform grid (certify only)")
    ini.add_argument("--out", default="runs/initdata")

    for name in ("simulate", "selfsim"):
        sp = sub.add_parser(name, help=f"{name} stage from a config file")
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--config", required=True)

    dg = sub.add_parser("diagnose", help="diagnostics over a run directory")
    dg.add_argument("--run", required=True)
    dg.add_argument("--plots", action="store_true")
    dg.add_argument("--out", default=None)

    rn = sub.add_parser("run", help="full pipeline from a config file")
    rn.add_argument("--config", required=True)

    sw = sub.add_parser("sweep", help="cartesian sweep over comma-separated values")
    sw.add_argument("--config", required=True)
    sw.add_argument("--workers", type=int, default=2)
    return p


def _load_stage_config(args, schema) -> dict:
    cfg = cfgmod.load_config(args.config)
    if args.alpha is not None:
        cfg["alpha"] = args.alpha
    return cfgmod.resolve(cfg, schema)


def _emit_csv(path: str, write_fn):
    if path == "-":
        import io
        import tempfile
        with tempfile.NamedTemporaryFile("r", suffix=".csv", delete=False) as tmp:
            name = tmp.name
        write_fn(name)
        with open(name, encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
        os.unlink(name)
    else:
        ensure_dir(os.path.dirname(path) or ".")
        write_fn(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except FwlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "profile":
        _emit_csv(args.out, lambda p: experiments.profile_table_csv(
            p, args.nu, args.xmin, args.xmax, args.n))
        return 0

    if args.command == "kernel":
        _emit_csv(args.out, lambda p: experiments.kernel_table_csv(
            p, args.alpha, args.rmax, args.n, args.refinement))
        return 0

    if args.command == "initdata":
        params = AdmissibilityParams(M=args.M, epsilon=args.epsilon, delta=args.delta)
        outdir = ensure_dir(os.environ.get("FWLAB_OUTPUT_DIR", args.out))
        if args.action == "make" or args.input is None:
            cfg = {"M": args.M, "epsilon": args.epsilon, "delta": args.delta,
                   "output_dir": outdir}
            cfg = cfgmod.resolve(cfg, cfgmod.INITDATA_KEYS)
            summary = experiments.stage_initdata(cfg, outdir)
            print(f"admissible: {summary['admissible']}")
            return 0 if summary["admissible"] else 1
        import numpy as np
        data = np.genfromtxt(args.input, delimiter=",", names=True)
        X = data["X"]
        n = X.size
        from .spectral import GridSpec
        grid = GridSpec(n, float(-X[0]))
        U0 = SelfSimField(grid, data["U"], params.s0)
        report = certify(U0, params)
        write_json(os.path.join(outdir, "admissibility.json"),
                   {"admissible": report.admissible, "conditions": report.to_records()})
        print(f"admissible: {report.admissible}")
        return 0 if report.admissible else 1

    if args.command == "simulate":
        cfg = _load_stage_config(args, cfgmod.SIMULATE_KEYS)
        summary = experiments.stage_simulate(cfg, cfg["output_dir"])
        print(f"simulate finished: {summary['termination']}, "
              f"min slope {summary['final_min_slope']:.6g}")
        return 0

    if args.command == "selfsim":
        cfg = _load_stage_config(args, cfgmod.SELFSIM_KEYS)
        summary = experiments.stage_selfsim(cfg, cfg["output_dir"])
        print(f"selfsim finished: {summary['termination']}")
        for flag in summary["flags"]:
            print(f"flag: {flag}")
        return 0

    if args.command == "diagnose":
        outdir = args.out or os.path.join(args.run, "diagnose")
        payload = experiments.stage_diagnose(args.run, outdir, plots=args.plots)
        for name, rec in payload["bounds"].items():
            print(f"{name}: value {rec['value']:.6g} bound {rec['bound']} "
                  f"{'PASS' if rec['passed'] else 'FAIL'}")
        return 0

    if args.command == "run":
        cfg = cfgmod.load_config(args.config)
        outdir = os.environ.get("FWLAB_OUTPUT_DIR") or cfg.get("output_dir", "runs/experiment")
        return experiments.run_experiment(cfg, outdir)

    if args.command == "sweep":
        cfg = cfgmod.load_config(args.config)
        outdir = os.environ.get("FWLAB_OUTPUT_DIR") or cfg.get("output_dir", "runs/sweep")
        return experiments.run_sweep(cfg, outdir, workers=args.workers)

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
