"""Quantitative blowup diagnostics and runtime inequality monitors.

Fits the breaking time, location and gradient-rate constant from a run
trajectory, measures the cusp exponent at the last resolved frame,
tracks convergence to the rescaled profile family, and evaluates the
bootstrap-style inequality set (with region tags) on rescaled snapshots.
Monitors are pure functions of recorded data; "untestable" marks regions
the grid no longer covers, and bounds whose constants are not explicit
are reported as trends instead of absolute thresholds.

Condition codes in reports are stable internal identifiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kendalltau

from .errors import DomainError, InsufficientDataError
from .initdata import AdmissibilityParams
from .profiles import eval_profile, jet_from_value
from .selfsim import (ModulationState, ReferenceJet, eval_jet_at, field_derivatives,
                      rhs_derivative_form)
from .spectral import Field, SelfSimField, eval_rfft_at


# ---------------------------------------------------------------------------
# Breaking-time / rate fit
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    T_star: float
    T_star_ci: float
    x_star: float
    rate_constant: float
    n_samples: int
    decades: float
    residual_rms: float


def fit_blowup_time(t: np.ndarray, min_slope: np.ndarray, argmin_x: np.ndarray,
                    tail: np.ndarray | None = None, tail_threshold: float = 1e-8,
                    min_required_slope: float = -1e2, decade: float = 12.0,
                    min_samples: int = 10) -> RateFit:
    """Least-squares fit of y(t) = -1/min_slope over the final decade.

    y is linear in t for a gradient blowing up like c/(T-t); the root of
    the fit is the breaking time, the slope gives the rate constant
    c = -1/slope, and the breaking location is the extrapolation of the
    gradient-minimum position to y = 0.  Records whose resolved-band tail
    exceeds the threshold are excluded (under-resolved frames bias the
    minimum towards zero).
    """
    t = np.asarray(t, float)
    min_slope = np.asarray(min_slope, float)
    argmin_x = np.asarray(argmin_x, float)
    neg = min_slope < 0
    if tail is not None:
        neg = neg & (np.asarray(tail, float) <= tail_threshold)
    if not np.any(min_slope[neg] <= min_required_slope):
        raise InsufficientDataError(
            f"trajectory never reaches slope {min_required_slope}")
    y = -1.0 / min_slope[neg]
    tt = t[neg]
    xx = argmin_x[neg]
    y_end = y.min()
    window = y <= decade * y_end
    if window.sum() < min_samples:
        raise InsufficientDataError(
            f"only {window.sum()} samples in the final decade, need {min_samples}")
    yw, tw, xw = y[window], tt[window], xx[window]
    A = np.column_stack([np.ones_like(tw), tw])
    coef, res, *_ = np.linalg.lstsq(A, yw, rcond=None)
    a, b = coef
    if b >= 0:
        raise InsufficientDataError("gradient is not steepening over the window")
    n = yw.size
    rss = float(np.sum((yw - A @ coef) ** 2))
    sigma2 = rss / max(n - 2, 1)
    cov = sigma2 * np.linalg.inv(A.T @ A)
    T_star = -a / b
    var_T = (cov[0, 0] / b ** 2 + (a ** 2 / b ** 4) * cov[1, 1]
             - 2.0 * (a / b ** 3) * cov[0, 1])
    # extrapolate the minimum location linearly in y to y = 0
    Ax = np.column_stack([np.ones_like(yw), yw])
    cx, *_ = np.linalg.lstsq(Ax, xw, rcond=None)
    return RateFit(T_star=float(T_star), T_star_ci=float(2.0 * math.sqrt(max(var_T, 0.0))),
                   x_star=float(cx[0]), rate_constant=float(-1.0 / b),
                   n_samples=int(n), decades=float(np.log10(yw.max() / yw.min())),
                   residual_rms=float(math.sqrt(sigma2)))


def fit_holder_exponent(u_final: Field, x_star: float, window: tuple[float, float] = (1e-3, 1e-1)
                        ) -> dict:
    """Log-log slope of |u(x) - u(x*)| against |x - x*| over the window."""
    lo, hi = window
    if not 0 < lo < hi <= 0.5:
        raise DomainError("window must satisfy 0 < lo < hi <= 1/2")
    x = u_final.grid.nodes()
    d = np.abs(x - x_star)
    mask = (d >= lo) & (d <= hi)
    if mask.sum() < 16:
        raise InsufficientDataError("cusp window unresolved by the grid")
    c = np.fft.rfft(u_final.values)
    u_star = eval_rfft_at(c, u_final.grid, x_star)
    dv = np.abs(u_final.values[mask] - u_star)
    if np.any(dv == 0):
        raise InsufficientDataError("degenerate samples in the cusp window")
    slope, intercept = np.polyfit(np.log(d[mask]), np.log(dv), 1)
    return {"exponent": float(slope), "amplitude": float(math.exp(intercept)),
            "n_samples": int(mask.sum()), "is_cusp": bool(abs(slope - 1.0) > 0.2)}


# ---------------------------------------------------------------------------
# Convergence to the profile family
# ---------------------------------------------------------------------------

def convergence_to_profile(U_history: list[SelfSimField],
                           mod_history: list[ModulationState],
                           ref_history: list[float] | None = None,
                           window0: float = 2.0, window_rate: float = 0.4,
                           window_cap: float | None = None,
                           cauchy_tol: float = 1e-2) -> dict:
    """Sup-distance to the limiting family member on a growing window.

    The comparison member is fixed by the final third derivative at the
    origin; the window grows like the region swept by escaping
    trajectories.  A Mann-Kendall test summarizes the monotone trend.
    """
    if len(U_history) < 4:
        raise InsufficientDataError("need at least 4 snapshots")
    refs = ref_history or [6.0] * len(U_history)
    s_vals = np.array([m.s for m in mod_history])
    nu_vals = np.array([float(eval_jet_at(U, 0.0, 3, ReferenceJet(nu))[3])
                        for U, nu in zip(U_history, refs)])
    s_end = s_vals[-1]
    last_unit = s_vals >= s_end - 1.0
    nu_span = float(nu_vals[last_unit].max() - nu_vals[last_unit].min())
    if nu_span > cauchy_tol:
        raise InsufficientDataError(
            f"origin third derivative not settled: span {nu_span:.3g} over final unit of s")
    nu_limit = float(nu_vals[-1])
    grid = U_history[0].grid
    X = grid.nodes()
    limit_vals = eval_profile(X, nu_limit)
    cap = window_cap if window_cap is not None else 0.8 * grid.half_length
    curve = []
    for U, m in zip(U_history, mod_history):
        w = min(window0 * math.exp(window_rate * (m.s - s_vals[0])), cap)
        mask = np.abs(X) <= w
        curve.append((m.s, float(np.max(np.abs(U.values[mask] - limit_vals[mask]))), w))
    svals = np.array([c[0] for c in curve])
    dvals = np.array([c[1] for c in curve])
    tau, pvalue = kendalltau(svals, dvals)
    return {
        "nu_limit": nu_limit,
        "nu_span_final_unit": nu_span,
        "curve": curve,
        "initial": float(dvals[0]),
        "final": float(dvals[-1]),
        "decrease_factor": float(dvals[0] / dvals[-1]) if dvals[-1] > 0 else math.inf,
        "kendall_tau": float(tau),
        "kendall_p": float(pvalue),
        "decreasing_trend": bool(tau < 0),
    }


# ---------------------------------------------------------------------------
# Inequality monitors
# ---------------------------------------------------------------------------

@dataclass
class MonitorEntry:
    code: str
    name: str
    region: str
    bound: float
    measured: float
    status: str  # pass | fail | untestable | trend

    @property
    def margin(self) -> float:
        return self.bound - self.measured


@dataclass
class BootstrapLog:
    entries: list = field(default_factory=list)  # (s, MonitorEntry)

    def append(self, s: float, items: list[MonitorEntry]):
        self.entries.extend((s, e) for e in items)

    def violations(self) -> list[tuple[float, MonitorEntry]]:
        return [(s, e) for s, e in self.entries if e.status == "fail"]

    def series(self, code: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [(s, e.measured) for s, e in self.entries if e.code == code]
        return (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))


def monitor_bootstrap(U: SelfSimField, mod: ModulationState,
                      params: AdmissibilityParams, ref_nu: float = 6.0,
                      interior_frac: float = 0.85) -> list[MonitorEntry]:
    """Evaluate the regioned inequality set on one rescaled snapshot.

    Deviations are measured from the ground-state profile.  Regions the
    grid does not cover are flagged untestable; norms over the line are
    evaluated on the trusted grid portion (tagged 'grid').
    """
    eps, M, h = params.epsilon, params.M, params.h
    s = mod.s
    grid = U.grid
    X = grid.nodes()
    w = np.sqrt(1.0 + X * X)
    ref = ReferenceJet(ref_nu)
    dU = field_derivatives(U, 5, ref)
    ground = jet_from_value(eval_profile(X, 6.0), 6.0)
    tU = [dU[m] - ground[m] for m in range(6)]
    jet0 = eval_jet_at(U, 0.0, 3, ref)

    L_trust = interior_frac * grid.half_length
    absX = np.abs(X)
    mid_edge = 0.5 * math.exp(1.5 * s)
    near = absX <= h
    middle = (absX >= h) & (absX <= min(mid_edge, L_trust))
    outer = (absX >= h) & (absX <= L_trust)
    far = (absX >= mid_edge) & (absX <= L_trust)
    trust = absX <= L_trust
    entries: list[MonitorEntry] = []

    def sup(a, mask):
        return float(np.max(np.abs(a[mask]))) if np.any(mask) else math.nan

    def add(code, name, region, bound, measured, trend=False):
        if math.isnan(measured):
            entries.append(MonitorEntry(code, name, region, bound, measured, "untestable"))
        elif trend:
            entries.append(MonitorEntry(code, name, region, bound, measured, "trend"))
        else:
            status = "pass" if measured <= bound else "fail"
            entries.append(MonitorEntry(code, name, region, bound, measured, status))

    add("5.0.1", "near_value", "|X|<=h", eps ** (1 / 3) * h ** 4, sup(tU[0], near))
    add("5.0.2", "mid_value", "mid", eps ** 0.25, sup(tU[0] / w ** (1 / 3), middle))
    add("5.1.1", "near_slope", "|X|<=h", eps ** (1 / 3) * h ** 3, sup(tU[1], near))
    add("5.1.2", "mid_slope", "mid", eps ** 0.125, sup(tU[1] * w ** (2 / 3), middle))
    add("5.1.3", "far_slope", "far", 2.0 * math.exp(-s), sup(dU[1], far))
    add("5.2.1", "near_curvature", "|X|<=h", eps ** (1 / 3) * h ** 2, sup(tU[2], near))
    add("5.2.2", "outer_curvature", "|X|>=h (grid)", M ** 0.2, sup(dU[2], outer))
    add("5.3.1", "near_third", "|X|<=h", eps ** (1 / 3) * h, sup(tU[3], near))
    add("5.3.2", "near_fourth", "|X|<=h", eps ** (1 / 3), sup(tU[4], near))
    add("5.4.1", "sup_fourth", "grid", M, sup(dU[4], trust))
    add("5.4.2", "sup_shifted_value", "grid",
        M * math.exp(0.5 * s),
        sup(U.values + math.exp(0.5 * s) * mod.kappa, trust))
    add("5.5", "third_at_origin", "X=0", eps ** 0.5, abs(float(jet0[3]) - 6.0))
    add("5.6.1", "tau_rate", "scalar", math.exp(-0.75 * s), abs(mod.tau_dot))
    add("5.6.2", "tau_size", "scalar", 2.0 * eps ** 1.75, abs(mod.tau))
    add("5.7.1", "xi_rate", "scalar", 2.0 * M, abs(mod.xi_dot))
    add("5.7.2", "xi_size", "scalar", 3.0 * M * eps, abs(mod.xi))

    sup_slope = sup(dU[1], trust)
    add("5.8.lo", "grad_sup_lower", "grid", -0.99, -sup_slope)
    add("5.8.hi", "grad_sup_upper", "grid", 1.01, sup_slope)
    argmax_at_origin = bool(np.argmax(np.abs(dU[1][trust]))
                            == np.nonzero(trust)[0].tolist().index(grid.origin_index))
    entries.append(MonitorEntry("5.8.argmax", "grad_sup_at_origin", "grid", 0.0,
                                0.0 if argmax_at_origin else 1.0,
                                "pass" if argmax_at_origin else "fail"))
    add("5.9", "sup_curvature", "grid", M ** 0.2, sup(dU[2], trust))
    add("6.0", "sup_third_trend", "grid", M ** 0.6, sup(dU[3], trust), trend=True)
    beta = mod.beta_tau
    add("6.1.lo", "beta_lower", "scalar", -0.99, -beta)
    add("6.1.hi", "beta_upper", "scalar", 1.01, beta)
    add("6.3.lo", "third_origin_lower", "X=0", -5.0, -float(jet0[3]))
    add("6.3.hi", "third_origin_upper", "X=0", 7.0, float(jet0[3]))

    dx = grid.spacing
    l2 = lambda a, mask: float(np.sqrt(np.sum(a[mask] ** 2) * dx))
    add("7", "l2_shifted_value", "grid", M * math.exp(1.25 * s),
        l2(U.values + math.exp(0.5 * s) * mod.kappa, trust))
    add("7.1", "l2_slope", "grid", 100.0, l2(dU[1], trust))
    add("8.0", "l2_fifth", "grid", M ** 1.5, l2(dU[5], trust))
    add("8.8.1", "l2_curvature_trend", "grid", M ** (1 / 6), l2(dU[2], trust), trend=True)
    add("8.8.2", "l2_third_trend", "grid", M ** 0.25, l2(dU[3], trust), trend=True)
    add("8.8.3", "l2_fourth_trend", "grid", M ** 0.75, l2(dU[4], trust), trend=True)
    return entries


def monitor_operator_decay(U: SelfSimField, mod: ModulationState, alpha: float,
                           params: AdmissibilityParams,
                           high_slope_field: np.ndarray,
                           interior_frac: float = 0.85) -> MonitorEntry:
    """Middle-field envelope ratio for the high part applied to the slope.

    `high_slope_field` carries H(dU/dX) samples on the grid (in practice
    the full operator minus the grid low part, which is degenerate at
    production scales and flagged by the caller).
    """
    s = mod.s
    grid = U.grid
    X = grid.nodes()
    absX = np.abs(X)
    mid = (absX >= params.h) & (absX <= min(0.5 * math.exp(1.5 * s),
                                            interior_frac * grid.half_length))
    if not np.any(mid):
        return MonitorEntry("hl.decay", "high_slope_envelope", "mid", 0.0,
                            math.nan, "untestable")
    w = np.sqrt(1.0 + X[mid] ** 2)
    if alpha > -0.5:
        envelope = (math.exp(1.5 * alpha * s) * w ** (-0.5 - alpha)
                    + math.exp(-0.75 * s))
    else:
        envelope = math.exp(-0.625 * s) * np.ones_like(w)
    ratio = float(np.max(np.abs(high_slope_field[mid]) / envelope))
    return MonitorEntry("hl.decay", "high_slope_envelope", "mid", math.nan, ratio, "trend")


def modulation_form_residual(U: SelfSimField, mod: ModulationState, alpha: float,
                             ref: ReferenceJet | None = None,
                             forcing_slope: np.ndarray | None = None,
                             interior_frac: float = 0.85) -> float:
    """Consistency of the two slope-equation forms (full vs deviation).

    The damping coefficients of the full-field and deviation forms differ
    by profile identities; analytically the two right-hand sides agree.
    Returns the sup of their difference on the trusted interior, which
    measures only discretization and roundoff.
    """
    grid = U.grid
    X = grid.nodes()
    ground = jet_from_value(eval_profile(X, 6.0), 6.0)
    dU = field_derivatives(U, 2, ref)
    tU1 = dU[1] - ground[1]
    tU2 = dU[2] - ground[2]
    beta = mod.beta_tau
    V = 1.5 * X + beta * (dU[0] + mod.drift_scaled)
    F1 = (ground[2] * (mod.tau_dot * ground[0] + mod.drift_scaled + (dU[0] - ground[0]))
          + mod.tau_dot * ground[1] ** 2)
    forcing_term = 0.0 if forcing_slope is None \
        else beta * math.exp(-mod.s) * forcing_slope
    # deviation form: d_s(dU~) = -(1 + beta(dU~ + 2 dG)) dU~ - V d2U~ + forcing - beta F1
    rhs_dev = (-(1.0 + beta * (tU1 + 2.0 * ground[1])) * tU1 - V * tU2
               + forcing_term - beta * F1)
    rhs_full = rhs_derivative_form(U, mod, alpha, 1, dispersion=forcing_slope is not None,
                                   ref=ref, forcing_n=forcing_slope, derivatives=dU)
    trust = np.abs(X) <= interior_frac * grid.half_length
    return float(np.max(np.abs((rhs_full - rhs_dev)[trust])))


def sandwich_check(t: np.ndarray, tau: np.ndarray, T_star: float,
                   decade: float = 10.0) -> dict:
    """Verify (T*-t)/2 <= tau - t <= 2 (T*-t) over the final covered decade."""
    t = np.asarray(t, float)
    tau = np.asarray(tau, float)
    left = T_star - t
    ok = left > 0
    window = ok & (left <= decade * left[ok].min())
    gap = tau[window] - t[window]
    lo = float(np.min(gap / left[window]))
    hi = float(np.max(gap / left[window]))
    return {"min_ratio": lo, "max_ratio": hi,
            "passed": bool(lo >= 0.5 and hi <= 2.0), "n": int(window.sum())}


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass
class BlowupReport:
    T_star_fit: float
    T_star_ci: float
    x_star_fit: float
    rate_constant: float
    holder_exponent: float
    nu_limit: float
    convergence: dict
    bounds: dict
    rate_fit: RateFit
    bootstrap_violations: list

    def to_dict(self) -> dict:
        return {
            "T_star_fit": self.T_star_fit,
            "T_star_ci": self.T_star_ci,
            "x_star_fit": self.x_star_fit,
            "rate_constant": self.rate_constant,
            "holder_exponent": self.holder_exponent,
            "nu_limit": self.nu_limit,
            "convergence": {k: v for k, v in self.convergence.items() if k != "curve"},
            "bounds": self.bounds,
            "n_rate_samples": self.rate_fit.n_samples,
            "rate_fit_decades": self.rate_fit.decades,
            "bootstrap_violations": [
                {"s": s, "code": e.code, "measured": e.measured, "bound": e.bound}
                for s, e in self.bootstrap_violations],
        }


def theorem_bounds(params: AdmissibilityParams, fit: RateFit, holder: dict,
                   sup_u: float, convergence: dict | None) -> dict:
    eps, M = params.epsilon, params.M
    out = {
        "T_star": {"value": fit.T_star, "bound": 2.0 * eps ** 1.75,
                   "passed": bool(fit.T_star <= 2.0 * eps ** 1.75)},
        "x_star": {"value": abs(fit.x_star), "bound": 3.0 * M * eps,
                   "passed": bool(abs(fit.x_star) <= 3.0 * M * eps)},
        "amplitude": {"value": sup_u, "bound": M, "passed": bool(sup_u <= M)},
        "rate_constant": {"value": fit.rate_constant, "bound": [1.0 / 3.0, 3.0],
                          "passed": bool(1.0 / 3.0 <= fit.rate_constant <= 3.0)},
        "holder_exponent": {"value": holder["exponent"], "bound": [1 / 3 - 0.05, 1 / 3 + 0.05],
                            "passed": bool(abs(holder["exponent"] - 1 / 3) <= 0.05)},
    }
    if convergence is not None:
        out["profile_limit"] = {
            "value": convergence["nu_limit"], "bound": [5.0, 7.0],
            "passed": bool(5.0 <= convergence["nu_limit"] <= 7.0
                           and convergence["decrease_factor"] >= 10.0)}
    return out
