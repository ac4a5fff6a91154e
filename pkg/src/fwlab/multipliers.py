"""Fourier multiplier machinery for the smoothing dispersion.

The dispersion operator acts mode-wise as

    (D_a u)^(k) = i k (1 + k^2)^((a-1)/2) u^(k),        a < 0,

a bounded, smoothing perturbation of the Burgers transport.  In the
rescaled frame (X, s) the same operator carries the scale e^{3s/2} and is
split, at rescaled frequency eta = e^{3s/2} k, into a low part (|eta|
below the cutoff plateau) and a high part (the rest) with a smooth bump
bridging [1, 2].  The high part has a convolution kernel

    H f (X) = -e^{-3s/2} int sign(X-Y) G_a(e^{-3s/2} (X-Y)) f(Y) dY,

where G_a is even; eval_kernel computes G_a(r) by oscillatory quadrature
of the high-frequency symbol.

Sign convention: the split operators here are defined WITHOUT a leading
minus, so that their sum reproduces the full rescaled dispersion exactly
(low_symbol + high_symbol == full_symbol mode by mode); the compensating
minus then appears in the kernel representation above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, ResolutionError
from .spectral import Field, GridSpec, SelfSimField, bump_cutoff


def dispersion_symbol(k: np.ndarray, alpha: float) -> np.ndarray:
    """Real odd symbol m(k) = k (1+k^2)^((a-1)/2); the operator is i*m(k)."""
    return k * np.exp(0.5 * (alpha - 1.0) * np.log1p(k * k))


def apply_dispersion(u: Field, alpha: float) -> Field:
    """Apply the physical-frame dispersion spectrally; output is real."""
    if not alpha < 0:
        raise DomainError("alpha must be negative")
    k = u.grid.wavenumbers()
    c = np.fft.rfft(u.values) * (1j * dispersion_symbol(k, alpha))
    return Field(u.grid, np.fft.irfft(c, n=u.grid.n_points), u.time_tag)


@dataclass(frozen=True)
class OperatorSplit:
    """Frequency split of the rescaled dispersion at scale e^{3s/2}."""

    alpha: float
    s: float

    def __post_init__(self):
        if not self.alpha < 0:
            raise DomainError("alpha must be negative")

    @property
    def scale(self) -> float:
        return np.exp(1.5 * self.s)

    def full_symbol(self, k: np.ndarray) -> np.ndarray:
        """Real part of the full multiplier; operator acts as i*full_symbol."""
        lam = self.scale
        return lam * k * np.exp(0.5 * (self.alpha - 1.0) * np.log1p((lam * k) ** 2))

    def cutoff_values(self, k: np.ndarray) -> np.ndarray:
        return bump_cutoff(self.scale * k)

    def low_symbol(self, k: np.ndarray) -> np.ndarray:
        return self.cutoff_values(k) * self.full_symbol(k)

    def high_symbol(self, k: np.ndarray) -> np.ndarray:
        # Same floating-point expressions as the partition test relies on:
        # high = full - low, exactly.
        return self.full_symbol(k) - self.low_symbol(k)

    def band_is_resolved(self, grid: GridSpec) -> bool:
        """True when some grid frequency falls inside the transition band."""
        k = grid.wavenumbers()
        eta = self.scale * k
        return bool(np.any((eta >= 1.0) & (eta <= 2.0)))


def apply_split(U: SelfSimField, split: OperatorSplit, derivative_order: int = 0,
                strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """High and low parts applied to the derivative_order-th derivative of U.

    Returns (high, low) sample arrays.  Their sum equals the full rescaled
    dispersion applied to that derivative, exactly, mode by mode.
    """
    if derivative_order < 0 or derivative_order > 5:
        raise DomainError("derivative_order must be in 0..5")
    if strict and not split.band_is_resolved(U.grid):
        raise ResolutionError(
            "cutoff transition band lies below the smallest nonzero grid frequency")
    k = U.grid.wavenumbers()
    c = np.fft.rfft(U.values) * (1j * k) ** derivative_order
    full = 1j * split.full_symbol(k) * c
    low = 1j * split.low_symbol(k) * c
    high = full - low
    n = U.grid.n_points
    return np.fft.irfft(high, n=n), np.fft.irfft(low, n=n)


def split_at_origin(U: SelfSimField, split: OperatorSplit, derivative_order: int = 0,
                    strict: bool = False) -> float:
    """Value of (high + low) applied to the given derivative, read at X = 0."""
    high, low = apply_split(U, split, derivative_order, strict=strict)
    return float(high[U.grid.origin_index] + low[U.grid.origin_index])


# ---------------------------------------------------------------------------
# Kernel of the high-frequency part
# ---------------------------------------------------------------------------

def _kernel_tolerances(refinement: int) -> tuple[float, int]:
    return 10.0 ** (-(8 + 2 * refinement)), 200 * (refinement + 1)


def eval_kernel(r: float, alpha: float, refinement: int = 1) -> float:
    """Even kernel G_a(r) of the high-frequency operator, r > 0.

    G_a(r) = (1/pi) * int_0^inf eta (1-phi(eta)) (1+eta^2)^((a-1)/2) sin(r eta) deta.

    The integrand vanishes for eta <= 1.  The bump-bridged piece on [1, A]
    uses an oscillatory-weight rule; the smooth algebraic tail is rescaled
    to t = r*eta and handed to the semi-infinite Fourier integrator, which
    regularizes the conditionally convergent tail by series acceleration.
    """
    if not r > 0:
        raise DomainError("kernel radius must be positive")
    if not alpha < 0:
        raise DomainError("alpha must be negative")
    epsabs, limit = _kernel_tolerances(refinement)
    A = 4.0

    def bridged(eta):
        return eta * (1.0 - bump_cutoff(eta)) * (1.0 + eta * eta) ** (0.5 * (alpha - 1.0))

    head, _ = quad(bridged, 1.0, A, weight="sin", wvar=r,
                   epsabs=epsabs, epsrel=1e-12, limit=limit)

    def tail_scaled(t):
        return t * (r * r + t * t) ** (0.5 * (alpha - 1.0))

    tail, _ = quad(tail_scaled, r * A, np.inf, weight="sin", wvar=1.0,
                   epsabs=epsabs * max(r ** (1.0 + alpha), 1e-6),
                   epsrel=1e-12, limit=limit)
    return (head + r ** (-1.0 - alpha) * tail) / np.pi


def low_kernel_reference(r: float, alpha: float) -> float:
    """Kernel of the discarded low-frequency part (smooth compact symbol)."""
    val, _ = quad(
        lambda eta: eta * bump_cutoff(eta) * (1.0 + eta * eta) ** (0.5 * (alpha - 1.0)),
        0.0, 2.0, weight="sin", wvar=r, epsabs=1e-12, epsrel=1e-12, limit=400)
    return val / np.pi


def kernel_envelope(r: float, alpha: float) -> float:
    """Shape of the pointwise kernel bound (unit constant)."""
    if r > 1.0:
        return float(np.exp(-0.5 * r))
    if alpha == -1.0:
        return float(np.log(1.0 / r) + 1.0)
    if alpha > -1.0:
        return float(r ** (-1.0 - alpha))
    return 1.0


@dataclass
class KernelTable:
    """Sampled |G_a| values with the fitted envelope constant."""

    alpha: float
    radii: np.ndarray
    values: np.ndarray
    envelope: np.ndarray
    constant: float

    @classmethod
    def build(cls, alpha: float, radii: np.ndarray, refinement: int = 1) -> "KernelTable":
        radii = np.asarray(radii, dtype=float)
        vals = np.array([eval_kernel(r, alpha, refinement) for r in radii])
        env = np.array([kernel_envelope(r, alpha) for r in radii])
        constant = float(np.max(np.abs(vals) / env))
        return cls(alpha, radii, vals, env, constant)

    def rows(self):
        for r, g, e in zip(self.radii, self.values, self.envelope):
            yield r, g, e, abs(g) <= self.constant * e


# ---------------------------------------------------------------------------
# Operator bound measurements
# ---------------------------------------------------------------------------

def verify_operator_bounds(U: SelfSimField, split: OperatorSplit,
                           M: float, max_order: int = 4) -> dict:
    """Measured sup-norm ratios of the split parts on one snapshot.

    low_ratio[l]  = ||L(d^l U)||_inf / e^{-(3l-1)s/2}
    high_ratio[l] = ||H(d^l U)||_inf / ||d^l U||_inf

    Constants are reported, never asserted against absolute thresholds; a
    trace of snapshots is judged by fit_constant_trend.
    """
    s = split.s
    report = {"s": s, "M": M, "band_resolved": split.band_is_resolved(U.grid),
              "low_ratio": {}, "high_ratio": {}}
    k = U.grid.wavenumbers()
    c0 = np.fft.rfft(U.values)
    n = U.grid.n_points
    for l in range(max_order + 1):
        c = c0 * (1j * k) ** l
        dU = np.fft.irfft(c, n=n)
        low = np.fft.irfft(1j * split.low_symbol(k) * c, n=n)
        high = np.fft.irfft(1j * (split.full_symbol(k) - split.low_symbol(k)) * c, n=n)
        decay = np.exp(-0.5 * (3 * l - 1) * s)
        report["low_ratio"][l] = float(np.max(np.abs(low)) / decay)
        sup = float(np.max(np.abs(dU)))
        report["high_ratio"][l] = float(np.max(np.abs(high)) / sup) if sup > 0 else 0.0
    return report


def fit_constant_trend(s_values: np.ndarray, constants: np.ndarray) -> dict:
    """Least-squares slope of log(constant) against s, with a growth flag."""
    s_values = np.asarray(s_values, dtype=float)
    constants = np.asarray(constants, dtype=float)
    mask = constants > 0
    if mask.sum() < 2:
        return {"slope": 0.0, "growing": False, "n": int(mask.sum())}
    slope = np.polyfit(s_values[mask], np.log(constants[mask]), 1)[0]
    return {"slope": float(slope), "growing": bool(slope > 0.05), "n": int(mask.sum())}
