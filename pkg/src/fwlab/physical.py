"""Method-of-lines pseudospectral solver in physical variables.

Integrates u_t + u u_x = D_a u (dispersion D_a = smoothing multiplier,
see multipliers) on a periodic interval with classical RK4, a CFL and
gradient-based step controller, 2/3-rule dealiasing of the quadratic
term in conservative form, and spectral resolution doubling near wave
breaking.  The run terminates when the gradient reaches the configured
threshold or when resolution fails at the size cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowupError, ResolutionError
from .multipliers import dispersion_symbol
from .spectral import Field, GridSpec, refine, spectral_tail_fraction

OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class StepController:
    """Time-step policy: dt = min(cfl*dx/max|u|, gradient_safety/|min u_x|)."""

    cfl: float = 0.4
    gradient_safety: float = 0.05
    stop_gradient: float = -1e4
    dt_max: float = 1e-2
    tail_trip: float = 1e-8
    tail_fail: float = 1e-7

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.gradient_safety > 0:
            raise ValueError("gradient_safety must be positive")
        if not self.stop_gradient < 0:
            raise ValueError("stop_gradient must be negative")

    def dt(self, u: Field, min_slope: float) -> float:
        vmax = float(np.max(np.abs(u.values)))
        dt = self.dt_max
        if vmax > 0:
            dt = min(dt, self.cfl * u.grid.spacing / vmax)
        if min_slope < 0:
            dt = min(dt, self.gradient_safety / abs(min_slope))
        return dt


def rhs_physical(u: Field, alpha: float, terms: tuple[str, ...] = ("advection", "dispersion"),
                 check_resolution: bool = False) -> Field:
    """Right-hand side -(u^2/2)_x + D_a u with dealiased quadratic term.

    The conservative form keeps the mean mode identically zero.  `terms`
    selects sub-problems for regression tests ("advection" alone is the
    inviscid Burgers flow, "dispersion" alone the linear flow).
    """
    grid = u.grid
    n = grid.n_points
    k = grid.wavenumbers()
    keep = grid.dealias_keep()
    c = np.fft.rfft(u.values)
    if check_resolution and spectral_tail_fraction(u.values) > 1e-8:
        raise ResolutionError("spectral tail above resolution threshold")
    out = np.zeros_like(c)
    if "advection" in terms:
        uf = np.fft.irfft(np.where(keep, c, 0.0), n=n)
        q = np.fft.rfft(uf * uf)
        out -= 0.5j * k * np.where(keep, q, 0.0)
    if "dispersion" in terms:
        out += 1j * dispersion_symbol(k, alpha) * c
    return Field(grid, np.fft.irfft(out, n=n), u.time_tag)


def step(u: Field, controller: StepController, alpha: float,
         dt: float | None = None,
         terms: tuple[str, ...] = ("advection", "dispersion")) -> Field:
    """One classical RK4 step; conserves the mean exactly."""
    if dt is None:
        slope, _ = min_slope_and_location(u)
        dt = controller.dt(u, slope)
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = u.values
    k1 = rhs_physical(Field(u.grid, y, u.time_tag), alpha, terms).values
    k2 = rhs_physical(Field(u.grid, y + 0.5 * dt * k1, u.time_tag), alpha, terms).values
    k3 = rhs_physical(Field(u.grid, y + 0.5 * dt * k2, u.time_tag), alpha, terms).values
    k4 = rhs_physical(Field(u.grid, y + dt * k3, u.time_tag), alpha, terms).values
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if np.max(np.abs(out)) > OVERFLOW_GUARD:
        raise BlowupError("field exceeded overflow guard")
    return Field(u.grid, out, u.time_tag + dt)


def min_slope_and_location(u: Field) -> tuple[float, float]:
    """Most negative spectral derivative and its parabola-refined location."""
    k = u.grid.wavenumbers()
    du = np.fft.irfft(1j * k * np.fft.rfft(u.values), n=u.grid.n_points)
    j = int(np.argmin(du))
    x = u.grid.nodes()
    n = u.grid.n_points
    ym, y0, yp = du[(j - 1) % n], du[j], du[(j + 1) % n]
    denom = ym - 2.0 * y0 + yp
    shift = 0.5 * (ym - yp) / denom if denom != 0 else 0.0
    shift = float(np.clip(shift, -0.5, 0.5))
    refined = y0 - 0.25 * (ym - yp) * shift
    return float(refined), float(x[j] + shift * u.grid.spacing)


@dataclass
class Trajectory:
    """Per-interval records of a breaking run plus the final resolved frame."""

    t: list = field(default_factory=list)
    min_slope: list = field(default_factory=list)
    argmin_x: list = field(default_factory=list)
    sup_u: list = field(default_factory=list)
    l2_u: list = field(default_factory=list)
    tail: list = field(default_factory=list)
    n_points: list = field(default_factory=list)
    termination: str = "running"
    final_field: Field | None = None
    snapshots: list = field(default_factory=list)

    def record(self, u: Field):
        slope, loc = min_slope_and_location(u)
        self.t.append(u.time_tag)
        self.min_slope.append(slope)
        self.argmin_x.append(loc)
        self.sup_u.append(float(np.max(np.abs(u.values))))
        self.l2_u.append(float(np.sqrt(np.sum(u.values ** 2) * u.grid.spacing)))
        self.tail.append(spectral_tail_fraction(u.values))
        self.n_points.append(u.grid.n_points)

    def arrays(self) -> dict:
        return {
            "t": np.array(self.t),
            "min_slope": np.array(self.min_slope),
            "argmin_x": np.array(self.argmin_x),
            "sup_u": np.array(self.sup_u),
            "l2_u": np.array(self.l2_u),
            "tail": np.array(self.tail),
            "n_points": np.array(self.n_points, dtype=int),
        }


def run_to_breaking(u0: Field, alpha: float, controller: StepController,
                    terms: tuple[str, ...] = ("advection", "dispersion"),
                    n_cap: int = 2 ** 16, snapshot_times: tuple[float, ...] = (),
                    record_every: int = 1, geometric_factor: float = 0.92) -> Trajectory:
    """Integrate until the gradient threshold or until resolution fails.

    Records are written every `record_every` steps early on and then on a
    geometric cadence in the estimated time-to-breaking so that the rate
    fit sees uniformly log-spaced samples.  Snapshot fields are stored at
    the requested times (the stepper lands on them exactly).
    """
    u = u0
    traj = Trajectory()
    traj.record(u)
    pending = sorted(snapshot_times)
    next_record_gap = None
    steps = 0
    while True:
        slope, _ = min_slope_and_location(u)
        if slope <= controller.stop_gradient:
            traj.termination = "gradient_threshold"
            break
        tail = spectral_tail_fraction(u.values)
        if tail > controller.tail_trip:
            if u.grid.n_points < n_cap:
                new_n = u.grid.n_points * 2
                u = Field(GridSpec(new_n, u.grid.half_length),
                          refine(u.values, u.grid, new_n), u.time_tag)
            elif tail > controller.tail_fail:
                traj.termination = "resolution_failure"
                break
        dt = controller.dt(u, slope)
        if pending and u.time_tag + dt >= pending[0] - 1e-15:
            dt = pending[0] - u.time_tag
            pending.pop(0)
            if dt <= 0:
                traj.snapshots.append(u)
                continue
            u = step(u, controller, alpha, dt=dt, terms=terms)
            traj.snapshots.append(u)
        else:
            u = step(u, controller, alpha, dt=dt, terms=terms)
        steps += 1
        if slope < -10.0:
            # breaking onset: switch to geometric cadence in (T_est - t)
            t_left = 1.0 / abs(slope)
            if next_record_gap is None or t_left <= next_record_gap:
                traj.record(u)
                next_record_gap = t_left * geometric_factor
        elif steps % record_every == 0:
            traj.record(u)
        if steps > 2_000_000:
            traj.termination = "step_budget"
            break
    traj.record(u)
    traj.final_field = u
    return traj
