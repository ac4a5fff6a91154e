"""Stage implementations backing the command-line entry points.

Each stage consumes a resolved flat config, writes its artifacts into
one directory (exactly one manifest per directory), and returns a small
summary dict.  The full pipeline chains initdata -> simulate -> selfsim
-> diagnose inside one experiment directory; a sweep runs independent
experiments (one sub-directory each) concurrently.
"""

from __future__ import annotations

import concurrent.futures
import itertools
import json
import math
import os
import time

import numpy as np

from . import config as cfgmod
from .diagnostics import (BlowupReport, BootstrapLog, convergence_to_profile,
                          fit_blowup_time, fit_holder_exponent, monitor_bootstrap,
                          sandwich_check, theorem_bounds)
from .driver import SelfSimRunConfig, run_selfsim
from .errors import ConfigError, InsufficientDataError
from .initdata import (AdmissibilityParams, MidFieldBump, certification_grid,
                       certify, construct_data, physical_values, selfsim_values)
from .physical import StepController, run_to_breaking
from .profiles import profile_table
from .multipliers import KernelTable
from .runio import ensure_dir, write_csv, write_json, write_manifest
from .selfsim import ModulationState
from .spectral import Field, GridSpec, SelfSimField


def params_from_config(cfg: dict) -> AdmissibilityParams:
    return AdmissibilityParams(M=float(cfg["M"]), epsilon=float(cfg["epsilon"]),
                               delta=float(cfg["delta"]))


def bump_from_config(cfg: dict) -> MidFieldBump | None:
    amp = float(cfg.get("perturb_amplitude", 0.0))
    if amp == 0.0:
        return None
    return MidFieldBump(amplitude=amp, center=float(cfg["perturb_center"]),
                        width=float(cfg["perturb_width"]))


def stage_initdata(cfg: dict, outdir: str) -> dict:
    started = time.time()
    ensure_dir(outdir)
    params = params_from_config(cfg)
    bump = bump_from_config(cfg)
    grid = certification_grid(params)
    U0 = SelfSimField(grid, selfsim_values(grid.nodes(), params, bump), params.s0)
    pg = GridSpec(2 ** 13, 4.0)
    u0 = Field(pg, physical_values(pg.nodes(), params, bump), -params.epsilon)
    report = certify(U0, params, u0)
    write_json(os.path.join(outdir, "admissibility.json"),
               {"admissible": report.admissible, "conditions": report.to_records()})
    write_manifest(outdir, "initdata", cfg, started,
                   termination="admissible" if report.admissible else "rejected")
    return {"admissible": report.admissible}


def stage_simulate(cfg: dict, outdir: str) -> dict:
    started = time.time()
    ensure_dir(outdir)
    params = params_from_config(cfg)
    bump = bump_from_config(cfg)
    grid = GridSpec(int(cfg["n_points"]), float(cfg["half_length"]))
    u0 = Field(grid, physical_values(grid.nodes(), params, bump), -params.epsilon)
    controller = StepController(cfl=float(cfg["cfl"]),
                                gradient_safety=float(cfg["gradient_safety"]),
                                stop_gradient=float(cfg["stop_gradient"]))
    terms = ("advection", "dispersion") if cfg["dispersion"] else ("advection",)
    traj = run_to_breaking(u0, float(cfg["alpha"]), controller, terms=terms,
                           n_cap=int(cfg["n_cap"]))
    write_csv(os.path.join(outdir, "trajectory.csv"), traj.arrays())
    final = traj.final_field
    np.savez_compressed(os.path.join(outdir, "final_field.npz"),
                        x=final.grid.nodes(), u=final.values, t=final.time_tag,
                        n=final.grid.n_points, half_length=final.grid.half_length)
    boundary = max(abs(final.values[0]), abs(final.values[-1]))
    write_manifest(outdir, "simulate", cfg, started, termination=traj.termination,
                   extra={"boundary_value_final": boundary,
                          "final_min_slope": traj.min_slope[-1]})
    return {"termination": traj.termination, "final_min_slope": traj.min_slope[-1]}


def stage_selfsim(cfg: dict, outdir: str) -> dict:
    started = time.time()
    ensure_dir(outdir)
    params = params_from_config(cfg)
    run_cfg = SelfSimRunConfig(
        alpha=float(cfg["alpha"]), params=params, bump=bump_from_config(cfg),
        n_x=int(cfg["n_x"]), half_x=float(cfg["half_x"]), ds=float(cfg["ds"]),
        cfl_x=float(cfg["cfl_x"]), s_span=float(cfg["s_span"]),
        sponge_start=float(cfg["sponge_start"]), sponge_rate=float(cfg["sponge_rate"]),
        record_interval=float(cfg["record_interval"]),
        snapshot_interval=float(cfg["snapshot_interval"]),
        dispersion=bool(cfg["dispersion"]), phys_n0=int(cfg["phys_n0"]),
        phys_half_length=float(cfg["phys_half_length"]),
        phys_n_cap=int(cfg["phys_n_cap"]), phys_cfl=float(cfg["phys_cfl"]),
        phys_gradient_safety=float(cfg["phys_gradient_safety"]))
    result = run_selfsim(run_cfg)
    keys = list(result.rows[0].keys())
    write_csv(os.path.join(outdir, "selfsim.csv"),
              {k: [r[k] for r in result.rows] for k in keys})
    np.savez_compressed(
        os.path.join(outdir, "snapshots.npz"),
        n=result.U_history[0].grid.n_points,
        half_length=result.U_history[0].grid.half_length,
        s=np.array([m.s for m in result.mod_history]),
        t=np.array([m.t for m in result.mod_history]),
        tau=np.array([m.tau for m in result.mod_history]),
        xi=np.array([m.xi for m in result.mod_history]),
        kappa=np.array([m.kappa for m in result.mod_history]),
        tau_dot=np.array([m.tau_dot for m in result.mod_history]),
        xi_dot=np.array([m.xi_dot for m in result.mod_history]),
        kappa_dot=np.array([m.kappa_dot for m in result.mod_history]),
        ref_nu=np.array(result.ref_history),
        U=np.stack([u.values for u in result.U_history]),
    )
    if result.final_companion is not None:
        fc = result.final_companion
        np.savez_compressed(os.path.join(outdir, "companion_final.npz"),
                            x=fc.grid.nodes(), u=fc.values, t=fc.time_tag)
    write_manifest(outdir, "selfsim", cfg, started, termination=result.termination,
                   extra={"flags": result.flags,
                          "companion_resolved_until": result.companion_resolved_until,
                          "boundary_remainder_sup": result.boundary_remainder_sup,
                          "repin_scale_drift": result.scale_drift})
    return {"termination": result.termination, "flags": result.flags}


def load_snapshots(path: str) -> tuple[list[SelfSimField], list[ModulationState], list[float]]:
    data = np.load(path)
    grid = GridSpec(int(data["n"]), float(data["half_length"]))
    fields, mods = [], []
    for i in range(data["s"].size):
        fields.append(SelfSimField(grid, data["U"][i], float(data["s"][i])))
        mods.append(ModulationState(
            s=float(data["s"][i]), t=float(data["t"][i]), tau=float(data["tau"][i]),
            xi=float(data["xi"][i]), kappa=float(data["kappa"][i]),
            tau_dot=float(data["tau_dot"][i]), xi_dot=float(data["xi_dot"][i]),
            kappa_dot=float(data["kappa_dot"][i])))
    return fields, mods, [float(v) for v in data["ref_nu"]]


def _read_manifest_config(stage_dir: str) -> dict:
    with open(os.path.join(stage_dir, "manifest.json"), encoding="utf-8") as fh:
        return json.load(fh)["config"]


def stage_diagnose(run_dir: str, outdir: str, cfg: dict | None = None,
                   plots: bool = False) -> dict:
    started = time.time()
    ensure_dir(outdir)
    cfg = dict(cfgmod.DIAGNOSE_KEYS) | (cfg or {})
    sim_dir = os.path.join(run_dir, "simulate")
    ss_dir = os.path.join(run_dir, "selfsim")
    have_sim = os.path.exists(os.path.join(sim_dir, "trajectory.csv"))
    have_ss = os.path.exists(os.path.join(ss_dir, "snapshots.npz"))
    if not have_sim:
        raise ConfigError(f"no simulate stage output under {run_dir}")

    sim_cfg = _read_manifest_config(sim_dir)
    params = AdmissibilityParams(M=float(sim_cfg["M"]), epsilon=float(sim_cfg["epsilon"]),
                                 delta=float(sim_cfg["delta"]))
    rows = _read_csv(os.path.join(sim_dir, "trajectory.csv"))
    fit = fit_blowup_time(rows["t"], rows["min_slope"], rows["argmin_x"],
                          tail=rows["tail"])
    final = np.load(os.path.join(sim_dir, "final_field.npz"))
    u_final = Field(GridSpec(int(final["n"]), float(final["half_length"])),
                    final["u"], float(final["t"]))
    holder = fit_holder_exponent(u_final, fit.x_star,
                                 window=(float(cfg["holder_window_lo"]),
                                         float(cfg["holder_window_hi"])))
    sup_u = float(np.max(rows["sup_u"]))

    convergence = None
    log = BootstrapLog()
    modulation_ok = None
    sandwich = None
    if have_ss:
        fields, mods, refs = load_snapshots(os.path.join(ss_dir, "snapshots.npz"))
        convergence = convergence_to_profile(
            fields, mods, refs, window0=float(cfg["convergence_window0"]),
            window_rate=float(cfg["convergence_window_rate"]),
            cauchy_tol=float(cfg["nu_cauchy_tol"]))
        for U, m, nu in zip(fields, mods, refs):
            log.append(m.s, monitor_bootstrap(U, m, params, ref_nu=nu))
        ss_rows = _read_csv(os.path.join(ss_dir, "selfsim.csv"))
        s_arr = ss_rows["s"]
        modulation_ok = {
            "tau_rate": bool(np.all(np.abs(ss_rows["tau_dot"]) <= np.exp(-0.75 * s_arr))),
            "drift_scaled": bool(np.all(np.abs(ss_rows["drift_scaled"])
                                        <= np.exp(-0.75 * s_arr))),
            "kappa_rate_scaled": bool(np.all(np.abs(ss_rows["kappa_rate_scaled"])
                                             <= np.exp(-s_arr / 3.0))),
        }
        sandwich = sandwich_check(ss_rows["t"], ss_rows["tau"], fit.T_star)

    bounds = theorem_bounds(params, fit, holder, sup_u, convergence)
    report = BlowupReport(
        T_star_fit=fit.T_star, T_star_ci=fit.T_star_ci, x_star_fit=fit.x_star,
        rate_constant=fit.rate_constant, holder_exponent=holder["exponent"],
        nu_limit=convergence["nu_limit"] if convergence else math.nan,
        convergence=convergence or {}, bounds=bounds, rate_fit=fit,
        bootstrap_violations=log.violations())
    payload = report.to_dict()
    payload["modulation_bounds"] = modulation_ok
    payload["sandwich"] = sandwich
    write_json(os.path.join(outdir, "blowup_report.json"), payload)
    write_csv(os.path.join(outdir, "bootstrap_log.csv"), {
        "s": [s for s, _ in log.entries],
        "code": [e.code for _, e in log.entries],
        "name": [e.name for _, e in log.entries],
        "region": [e.region for _, e in log.entries],
        "bound": [e.bound for _, e in log.entries],
        "measured": [e.measured for _, e in log.entries],
        "status": [e.status for _, e in log.entries],
    })
    if convergence is not None:
        write_csv(os.path.join(outdir, "convergence_curve.csv"), {
            "s": [c[0] for c in convergence["curve"]],
            "deviation_sup": [c[1] for c in convergence["curve"]],
            "window": [c[2] for c in convergence["curve"]],
        })
    if plots:
        _write_plots(outdir, rows, fit, u_final, holder, convergence)
    write_manifest(outdir, "diagnose", cfg, started, termination="complete")
    return payload


def _read_csv(path: str) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _write_plots(outdir, rows, fit, u_final, holder, convergence):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    mask = rows["min_slope"] < 0
    y = -1.0 / rows["min_slope"][mask]
    ax.plot(rows["t"][mask], y, ".", ms=3, label="-1/min u_x")
    tt = np.linspace(rows["t"][mask].min(), fit.T_star, 50)
    ax.plot(tt, (fit.T_star - tt) / fit.rate_constant, "-", label="fit")
    ax.set_xlabel("t")
    ax.set_ylabel("-1/min u_x")
    ax.legend()
    fig.savefig(os.path.join(outdir, "rate_fit.svg"))
    plt.close(fig)

    fig, ax = plt.subplots()
    x = u_final.grid.nodes()
    d = np.abs(x - fit.x_star)
    m = (d > 1e-4) & (d < 0.5)
    uv = np.abs(u_final.values - np.interp(fit.x_star, x, u_final.values))
    ax.loglog(d[m], uv[m], ".", ms=2)
    ax.loglog(d[m], holder["amplitude"] * d[m] ** holder["exponent"], "-",
              label=f"slope {holder['exponent']:.3f}")
    ax.set_xlabel("|x - x*|")
    ax.legend()
    fig.savefig(os.path.join(outdir, "cusp_fit.svg"))
    plt.close(fig)

    if convergence:
        fig, ax = plt.subplots()
        ax.semilogy([c[0] for c in convergence["curve"]],
                    [max(c[1], 1e-16) for c in convergence["curve"]])
        ax.set_xlabel("s")
        ax.set_ylabel("sup deviation from limit profile")
        fig.savefig(os.path.join(outdir, "convergence_curve.svg"))
        plt.close(fig)


def run_experiment(cfg_all: dict, outdir: str) -> int:
    """Full pipeline; returns a process exit code (0 = requested checks pass)."""
    started = time.time()
    ensure_dir(outdir)
    merged_schema = {}
    for sch in (cfgmod.RUN_KEYS, cfgmod.SIMULATE_KEYS, cfgmod.SELFSIM_KEYS,
                cfgmod.INITDATA_KEYS, cfgmod.DIAGNOSE_KEYS):
        merged_schema.update(sch)
    cfg = cfgmod.resolve(cfg_all, merged_schema)
    stages = [s.strip() for s in str(cfg["stages"]).split(",") if s.strip()]
    summary: dict = {}
    for stage in stages:
        sub = os.path.join(outdir, stage)
        if stage == "initdata":
            sub_cfg = {k: cfg[k] for k in cfgmod.INITDATA_KEYS}
            summary["initdata"] = stage_initdata(sub_cfg, sub)
            if not summary["initdata"]["admissible"]:
                write_manifest(outdir, "run", cfg, started, termination="initdata_rejected")
                return 2
        elif stage == "simulate":
            sub_cfg = {k: cfg[k] for k in cfgmod.SIMULATE_KEYS}
            summary["simulate"] = stage_simulate(sub_cfg, sub)
        elif stage == "selfsim":
            sub_cfg = {k: cfg[k] for k in cfgmod.SELFSIM_KEYS}
            summary["selfsim"] = stage_selfsim(sub_cfg, sub)
        elif stage == "diagnose":
            sub_cfg = {k: cfg[k] for k in cfgmod.DIAGNOSE_KEYS}
            summary["diagnose"] = stage_diagnose(outdir, sub, sub_cfg)
        else:
            raise ConfigError(f"unknown stage {stage!r}")
    write_manifest(outdir, "run", cfg, started, termination="complete",
                   extra={"stage_summary": {k: str(v)[:500] for k, v in summary.items()}})
    required = [r.strip() for r in str(cfg["require"]).split(",") if r.strip()]
    if not required:
        return 0
    report = summary.get("diagnose", {})
    bounds = report.get("bounds", {})
    ok = True
    for name in required:
        if name == "bootstrap_clean":
            ok = ok and not report.get("bootstrap_violations")
        elif name == "modulation":
            ok = ok and all((report.get("modulation_bounds") or {}).values())
        elif name in bounds:
            ok = ok and bounds[name]["passed"]
        else:
            raise ConfigError(f"unknown requirement {name!r}")
    return 0 if ok else 1


def run_sweep(cfg_all: dict, outdir: str, workers: int = 2) -> int:
    """Cartesian sweep over comma-separated values; one directory per case."""
    ensure_dir(outdir)
    sweep_keys = [k for k, v in cfg_all.items()
                  if isinstance(v, str) and "," in v and k not in ("stages", "require")]
    if not sweep_keys:
        return run_experiment(cfg_all, os.path.join(outdir, "case_000"))
    values = [[_coerce(tok) for tok in str(cfg_all[k]).split(",")] for k in sweep_keys]
    cases = list(itertools.product(*values))
    codes = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = []
        for i, combo in enumerate(cases):
            case_cfg = dict(cfg_all)
            case_cfg.update(dict(zip(sweep_keys, combo)))
            futures.append(pool.submit(run_experiment, case_cfg,
                                       os.path.join(outdir, f"case_{i:03d}")))
        for fut in futures:
            codes.append(fut.result())
    return max(codes) if codes else 0


def _coerce(tok: str):
    tok = tok.strip()
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        return tok


def profile_table_csv(path: str, nu: float, xmin: float, xmax: float, n: int):
    tab = profile_table(nu, xmin, xmax, n)
    write_csv(path, {name: tab[:, j] for j, name in
                     enumerate(["X", "U", "d1", "d2", "d3", "d4", "d5"])})


def kernel_table_csv(path: str, alpha: float, rmax: float, n: int, refinement: int = 1):
    radii = np.geomspace(1e-3, rmax, n)
    table = KernelTable.build(alpha, radii, refinement)
    rows = list(table.rows())
    write_csv(path, {
        "r": [r[0] for r in rows],
        "G": [r[1] for r in rows],
        "envelope": [r[2] for r in rows],
        "within_fitted_constant": [r[3] for r in rows],
    })
    return table
