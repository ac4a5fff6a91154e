"""Construction and certification of admissible initial data.

The reference datum is the rescaled-frame profile with a smooth compact
cutoff applied in the physical frame,

    U0(X) = Psi_6(X) * chi(2|x|),    x = eps^(3/2) X,

where chi is 1 on [0, 1] and 0 beyond 2, so that the physical field
u0(x) = eps^(1/2) U0(x eps^(-3/2)) is supported in [-1, 1] and the origin
pins hold exactly.  An optional smooth mid-field bump (supported away
from the origin) produces nontrivial admissible perturbations of the
profile; every candidate is certified inequality by inequality, with the
worst margin per condition reported.

Condition codes in reports are stable internal identifiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleDataError, ResolutionError
from .profiles import eval_profile, jet_from_value
from .spectral import Field, GridSpec, SelfSimField, bump_cutoff, derivative


@dataclass(frozen=True)
class AdmissibilityParams:
    """Largeness/smallness parameters of the admissible-data hypotheses."""

    M: float = 1e3
    epsilon: float = 0.1
    delta: float = 0.01
    kappa0: float = 0.0

    def __post_init__(self):
        if not self.M >= 100:
            raise DomainError("M must be at least 100")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")
        if not 0 < self.h < 1:
            raise DomainError("h = 1/log(M) must lie in (0, 1)")
        if not self.delta > 0:
            raise DomainError("delta must be positive")

    @property
    def s0(self) -> float:
        return -math.log(self.epsilon)

    @property
    def h(self) -> float:
        return 1.0 / math.log(self.M)

    @property
    def mid_boundary(self) -> float:
        """Outer edge of the middle region at the initial rescaled time."""
        return 0.5 * self.epsilon ** -1.5


@dataclass(frozen=True)
class MidFieldBump:
    """Even smooth bump A*b((|X|-center)/width) supported away from the origin."""

    amplitude: float = 0.0
    center: float = 3.5
    width: float = 2.0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        z = (np.abs(X) - self.center) / self.width
        out = np.zeros_like(np.asarray(X, dtype=float))
        inside = np.abs(z) < 1.0
        zi = z[inside]
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - zi * zi))
        return out

    @property
    def support_inner(self) -> float:
        return max(self.center - self.width, 0.0)


def selfsim_values(X: np.ndarray, params: AdmissibilityParams,
                   bump: MidFieldBump | None = None) -> np.ndarray:
    """U0 sampled at rescaled abscissae X."""
    X = np.asarray(X, dtype=float)
    base = eval_profile(X, 6.0)
    if bump is not None and bump.amplitude != 0.0:
        if bump.support_inner <= 1.0:
            raise DomainError("perturbation bump must stay clear of the origin")
        base = base + bump(X)
    x = params.epsilon ** 1.5 * X
    return base * bump_cutoff(2.0 * np.abs(x))


def physical_values(x: np.ndarray, params: AdmissibilityParams,
                    bump: MidFieldBump | None = None) -> np.ndarray:
    """u0 sampled at physical abscissae x (compactly supported in [-1, 1])."""
    x = np.asarray(x, dtype=float)
    X = x * params.epsilon ** -1.5
    out = np.sqrt(params.epsilon) * selfsim_values(X, params, bump) + params.kappa0
    return np.where(np.abs(x) >= 1.0, params.kappa0, out)


def certification_grid(params: AdmissibilityParams, max_half_length: float = 4096.0,
                       target_spacing: float = 0.03) -> GridSpec:
    """Wide one-shot grid resolving h and the middle-region boundary."""
    L = max(64.0, 2.2 * params.mid_boundary)
    if L > max_half_length:
        raise ResolutionError(
            f"middle-region boundary {params.mid_boundary:.1f} exceeds the "
            f"certification grid cap {max_half_length:.0f}; epsilon too small")
    n = 1 << max(12, int(math.ceil(math.log2(2.0 * L / target_spacing))))
    n = min(n, 1 << 18)
    return GridSpec(n, L)


def construct_data(params: AdmissibilityParams,
                   selfsim_grid: GridSpec,
                   physical_grid: GridSpec,
                   bump: MidFieldBump | None = None) -> tuple[SelfSimField, Field]:
    """Initial fields in both frames, linked by the frame map at s0."""
    U0 = SelfSimField(selfsim_grid, selfsim_values(selfsim_grid.nodes(), params, bump),
                      s_tag=params.s0)
    u0 = Field(physical_grid, physical_values(physical_grid.nodes(), params, bump),
               time_tag=-params.epsilon)
    return U0, u0


@dataclass
class ConditionReport:
    code: str
    name: str
    region: str
    bound: float
    measured: float
    margin: float
    passed: bool


@dataclass
class AdmissibilityReport:
    params: AdmissibilityParams
    entries: list[ConditionReport] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return all(e.passed for e in self.entries)

    def add(self, code, name, region, bound, measured):
        margin = bound - measured
        self.entries.append(ConditionReport(code, name, region, float(bound),
                                            float(measured), float(margin),
                                            bool(margin >= 0.0)))

    def entry(self, code: str) -> ConditionReport:
        for e in self.entries:
            if e.code == code:
                return e
        raise KeyError(code)

    def to_records(self) -> list[dict]:
        return [e.__dict__ | {"region": e.region} for e in self.entries]


def certify(U0: SelfSimField, params: AdmissibilityParams,
            u0: Field | None = None) -> AdmissibilityReport:
    """Evaluate every admissibility inequality on its region.

    Uses the exact profile jet for the reference and spectral derivatives
    for the candidate.  The grid must cover the middle-region boundary;
    beyond the support of the physical datum everything vanishes exactly,
    so the grid portion certifies the whole line.
    """
    grid = U0.grid
    eps, M, h, delta = params.epsilon, params.M, params.h, params.delta
    if grid.half_length < params.mid_boundary:
        raise ResolutionError("grid does not cover the middle-region boundary")

    X = grid.nodes()
    absX = np.abs(X)
    w = np.sqrt(1.0 + X * X)
    U = U0.values
    dU = [U] + [derivative(U, grid, m) for m in range(1, 6)]
    ref = jet_from_value(eval_profile(X, 6.0), 6.0)
    tU = [dU[m] - ref[m] for m in range(6)]

    near = absX <= h
    mid = (absX >= h) & (absX <= params.mid_boundary)
    far = absX >= params.mid_boundary
    outer = absX >= h
    j0 = grid.origin_index
    rep = AdmissibilityReport(params)

    def sup(arr, mask):
        return float(np.max(np.abs(arr[mask]))) if np.any(mask) else 0.0

    # origin pins
    rep.add("3.7.1", "pin_value_origin", "X=0", 1e-12, abs(U[j0]))
    rep.add("3.7.2", "pin_slope_origin", "X=0", 1e-10, abs(dU[1][j0] + 1.0))
    rep.add("3.7.3", "pin_slope_is_min", "all X", 1e-10, float(-1.0 - np.min(dU[1])))
    rep.add("3.7.4", "pin_curvature_origin", "X=0", 1e-10, abs(dU[2][j0]))

    # regioned deviation bounds
    rep.add("3.8.1", "near_value", "|X|<=h", 0.5 * eps ** (1 / 3) * h ** 4, sup(tU[0], near))
    rep.add("3.8.2", "mid_value", "h<=|X|<=R", eps ** 0.5,
            sup(tU[0] / w ** (1 / 3), mid))
    rep.add("3.9.1", "near_slope", "|X|<=h", 0.5 * eps ** (1 / 3) * h ** 3, sup(tU[1], near))
    rep.add("3.9.2", "mid_slope", "h<=|X|<=R", eps ** 0.25,
            sup(tU[1] * w ** (2 / 3), mid))
    rep.add("3.9.3", "far_slope", "|X|>=R", 1.0 / eps, sup(dU[1], far))
    rep.add("4.0.1", "near_curvature", "|X|<=h", 0.5 * eps ** (1 / 3) * h ** 2,
            sup(tU[2], near))
    rep.add("4.0.2", "outer_curvature", "|X|>=h", M ** (0.2 - delta), sup(dU[2], outer))
    rep.add("4.1.1", "near_third", "|X|<=h", 0.25 * eps ** (1 / 3) * h, sup(tU[3], near))
    rep.add("4.1.2", "near_fourth", "|X|<=h", 0.25 * eps ** (1 / 3), sup(tU[4], near))

    # global norms
    dx = grid.spacing
    l2 = lambda a: float(np.sqrt(np.sum(a * a) * dx))
    rep.add("4.2.1", "l2_slope", "all X", 50.0, l2(dU[1]))
    rep.add("4.2.2", "l2_fifth", "all X", 0.5 * M ** 1.5, l2(dU[5]))
    rep.add("4.2.3", "sup_fourth", "all X", 0.5 * M, float(np.max(np.abs(dU[4]))))
    rep.add("4.2.4", "sup_shifted_value", "all X", 0.5 * M * eps ** -0.5,
            float(np.max(np.abs(U + params.kappa0 * eps ** -0.5))))
    rep.add("4.2a", "third_at_origin", "X=0", 0.25 * eps ** 0.5, abs(tU[3][j0]))

    # physical-frame constraints
    if u0 is not None:
        x = u0.grid.nodes()
        rep.add("4.3.1", "compact_support", "|x|>=1", 0.0,
                sup(u0.values - params.kappa0, np.abs(x) >= 1.0))
    rep.add("4.3.2", "amplitude_shift", "scalar", M, abs(params.kappa0))
    return rep


def feasible_epsilon_max(M: float, alpha: float, bump: MidFieldBump | None = None,
                         lo: float = 1e-3, hi: float = 0.9, iters: int = 24) -> float:
    """Largest certifiable epsilon at fixed M, located by bisection.

    alpha enters only through downstream solver behaviour; the static
    admissibility inequalities are alpha-free, so this maps the static
    edge of the wedge.
    """

    def ok(eps: float) -> bool:
        try:
            params = AdmissibilityParams(M=M, epsilon=eps)
            grid = certification_grid(params)
            U0 = SelfSimField(grid, selfsim_values(grid.nodes(), params, bump), params.s0)
            return certify(U0, params).admissible
        except (ResolutionError, DomainError):
            return False

    if not ok(lo):
        raise InfeasibleDataError(f"no admissible epsilon found above {lo}")
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
