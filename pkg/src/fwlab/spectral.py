"""Uniform periodic grids, real-FFT helpers, and interpolation utilities.

All solvers in this package work on a uniform periodic grid covering
[-L, L) with a power-of-two number of nodes, so that X = 0 is always a
grid node and real FFTs apply.  Angular wavenumbers are k_m = pi*m/L.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowupError


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-half_length, half_length)."""

    n_points: int
    half_length: float

    def __post_init__(self):
        n = self.n_points
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 16, got {n}")
        if not self.half_length > 0:
            raise ValueError("half_length must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n_points

    def nodes(self) -> np.ndarray:
        n, L = self.n_points, self.half_length
        return -L + self.spacing * np.arange(n)

    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers for the rfft layout: pi*m/L, m = 0..n/2."""
        return (np.pi / self.half_length) * np.arange(self.n_points // 2 + 1)

    @property
    def origin_index(self) -> int:
        return self.n_points // 2

    def dealias_keep(self) -> np.ndarray:
        """Boolean mask keeping the lower 2/3 of the rfft modes."""
        m = np.arange(self.n_points // 2 + 1)
        return m <= self.n_points // 3


@dataclass
class Field:
    """Real function samples on a periodic grid, tagged with physical time."""

    grid: GridSpec
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError("values length must equal grid.n_points")
        if not np.all(np.isfinite(self.values)):
            raise BlowupError("field contains non-finite values")


@dataclass
class SelfSimField:
    """Real function samples in the rescaled frame, tagged with rescaled time."""

    grid: GridSpec
    values: np.ndarray
    s_tag: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError("values length must equal grid.n_points")


def derivative(values: np.ndarray, grid: GridSpec, order: int = 1,
               keep: np.ndarray | None = None) -> np.ndarray:
    """Spectral derivative of given order; optional mode mask before transform back."""
    k = grid.wavenumbers()
    c = np.fft.rfft(values) * (1j * k) ** order
    if keep is not None:
        c = np.where(keep, c, 0.0)
    return np.fft.irfft(c, n=grid.n_points)


def shift(values: np.ndarray, grid: GridSpec, a: float) -> np.ndarray:
    """Evaluate the trigonometric interpolant at X + a (periodic shift)."""
    k = grid.wavenumbers()
    return np.fft.irfft(np.fft.rfft(values) * np.exp(1j * k * a), n=grid.n_points)


def refine(values: np.ndarray, grid: GridSpec, new_n: int) -> np.ndarray:
    """Spectral interpolation onto a finer grid of new_n points (zero padding)."""
    if new_n < grid.n_points:
        raise ValueError("refine only increases resolution")
    c = np.fft.rfft(values)
    out = np.zeros(new_n // 2 + 1, dtype=complex)
    out[: c.size] = c
    # Nyquist mode of the coarse grid is shared between +/- k; halve it so the
    # padded spectrum represents the same trigonometric polynomial.
    if new_n > grid.n_points:
        out[c.size - 1] *= 0.5
    return np.fft.irfft(out, n=new_n) * (new_n / grid.n_points)


def eval_rfft_at(coeffs: np.ndarray, grid: GridSpec, x: np.ndarray | float) -> np.ndarray | float:
    """Evaluate the real field with rfft coefficients `coeffs` at arbitrary points.

    Matches np.fft.irfft(coeffs, n) sampled on the grid; the Nyquist mode is
    treated as a pure cosine, consistent with real input data.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n, L = grid.n_points, grid.half_length
    k = grid.wavenumbers()
    phase = np.exp(1j * np.outer(x + L, k))
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    out = (phase @ (w * coeffs)).real / n
    return float(out[0]) if scalar else out


def spectral_tail_fraction(values: np.ndarray) -> float:
    """Energy fraction in the top third of the dealias-resolved band.

    Solvers here evolve a 2/3-band Galerkin truncation, so the literal top
    third of the spectrum is zero by construction; resolution is judged by
    the energy accumulating just below the dealiasing edge.
    """
    c = np.fft.rfft(values)
    power = np.abs(c) ** 2
    power[0] = 0.0  # mean carries no information about resolution
    total = power.sum()
    if total == 0.0:
        return 0.0
    hi = (c.size - 1) * 2 // 3
    lo = (2 * hi) // 3
    return float(power[lo : hi + 1].sum() / total)


def smooth_step(v: np.ndarray | float) -> np.ndarray | float:
    """C-infinity monotone step: 0 for v <= 0, 1 for v >= 1."""
    v = np.asarray(v, dtype=float)
    v = np.clip(v, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(v > 0.0, np.exp(-1.0 / np.maximum(v, 1e-300)), 0.0)
        b = np.where(v < 1.0, np.exp(-1.0 / np.maximum(1.0 - v, 1e-300)), 0.0)
    out = a / (a + b)
    return out if out.shape != () else float(out)


def bump_cutoff(eta: np.ndarray | float) -> np.ndarray | float:
    """Smooth low-pass profile: 1 for |eta| <= 1, 0 for |eta| >= 2.

    Built from the two-sided exponential step so that the plateau matching is
    flat to all orders at both edges of the transition band.
    """
    return smooth_step(2.0 - np.abs(np.asarray(eta, dtype=float)))


# Two-point quintic Hermite interpolation on uniformly spaced data.  Used to
# read smooth spectral fields off one grid at the nodes of another without
# paying for non-uniform FFTs.

def hermite_quintic(x0: float, dx: float, f: np.ndarray, f1: np.ndarray,
                    f2: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Interpolate periodic samples (f, f', f'') at `targets`.

    x0 is the coordinate of f[0]; sample i sits at x0 + i*dx and the data is
    periodic with period len(f)*dx.
    """
    n = f.size
    t = (np.asarray(targets, dtype=float) - x0) / dx
    i = np.floor(t).astype(int)
    th = t - i
    i = np.mod(i, n)
    ip = np.mod(i + 1, n)

    th2 = th * th
    th3 = th2 * th
    th4 = th3 * th
    th5 = th4 * th
    h0 = 1.0 - 10.0 * th3 + 15.0 * th4 - 6.0 * th5
    k0 = 10.0 * th3 - 15.0 * th4 + 6.0 * th5
    h1 = th - 6.0 * th3 + 8.0 * th4 - 3.0 * th5
    k1 = -4.0 * th3 + 7.0 * th4 - 3.0 * th5
    h2 = 0.5 * th2 - 1.5 * th3 + 1.5 * th4 - 0.5 * th5
    k2 = 0.5 * th3 - th4 + 0.5 * th5

    return (h0 * f[i] + k0 * f[ip]
            + dx * (h1 * f1[i] + k1 * f1[ip])
            + dx * dx * (h2 * f2[i] + k2 * f2[ip]))
