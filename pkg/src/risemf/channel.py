"""Antenna patterns, blockage, path loss and Nakagami-m fading."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .numerics import NumericalFailure, gamma_ratio_lower


@dataclass(frozen=True)
class FadingSpec:
    """Nakagami-m power fading with unit mean."""

    m: int
    role: str = "LoS"

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("Nakagami shape must be an integer >= 1")
        if self.role not in ("LoS", "NLoS"):
            raise ValueError("role must be LoS or NLoS")


@dataclass(frozen=True)
class BeamGainPMF:
    """Discrete beam-gain levels and their probabilities for random misalignment."""

    gains: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.gains) != len(self.probs):
            raise ValueError("gains and probs differ in length")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("beam-gain probabilities must sum to 1")

    @property
    def mean_gain(self) -> float:
        return float(np.dot(self.gains, self.probs))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.gains), np.asarray(self.probs)


def ula_gain(delta, N_b: int):
    """Array gain of an N_b-element half-wavelength ULA at spatial deviation ``delta``.

    Args:
        delta: difference of the normalised spatial directions, in [−1, 1].
        N_b: number of elements.

    Returns:
        sin²(πN_bΔ)/(N_b sin²(πΔ)), equal to N_b at Δ ∈ {0, ±1}.
    """
    d = np.asarray(delta, dtype=float)
    s = np.sin(np.pi * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.sin(np.pi * N_b * d) ** 2 / (N_b * s**2)
    g = np.where(np.abs(s) < 1e-12, float(N_b), g)
    return float(g) if g.ndim == 0 else g


def _fold(delta):
    """Map Δ ∈ [−1, 1] into [0, ½] using evenness and unit periodicity."""
    a = np.abs(np.asarray(delta, dtype=float))
    return np.where(a > 0.5, 1.0 - a, a)


def discrete_levels(N_b: int, delta_comp: float) -> np.ndarray:
    """Gain levels G_0 … G_{Ñ_b+1} of the multi-lobe model (last level is 0)."""
    n_tilde = N_b // 2 - 1
    n = np.arange(1, n_tilde + 1)
    side = 0.5 * delta_comp * ula_gain((2 * n + 1) / (2.0 * N_b), N_b)
    return np.concatenate([[0.5 * delta_comp * N_b], np.atleast_1d(side), [0.0]])


def discrete_gain(delta, N_b: int, delta_comp: float):
    """Piecewise-constant multi-lobe approximation of the ULA pattern.

    The main lobe |Δ| ≤ 1/N_b gets G_0; the n-th side-lobe bin
    n/N_b < |Δ| ≤ (n+1)/N_b gets G_n for 1 ≤ n ≤ Ñ_b; anything farther out
    gets 0. Deviations beyond ½ are folded back first.
    """
    a = _fold(delta)
    levels = discrete_levels(N_b, delta_comp)
    n_tilde = N_b // 2 - 1
    # bin index: 0 for a <= 1/N, n for n/N < a <= (n+1)/N
    idx = np.ceil(a * N_b - 1e-12).astype(int) - 1
    idx = np.clip(idx, 0, None)
    idx = np.where(idx > n_tilde, n_tilde + 1, idx)
    g = levels[idx]
    return float(g) if np.ndim(g) == 0 else g


def los_probability(t, beta: float):
    """Probability exp(−βt) that a link of length t crosses no obstacle."""
    out = np.exp(-beta * np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


def pathloss(t, alpha: float, zeta: float):
    """Large-scale power gain ζ t^{−α}; raises on t = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("path loss is singular at zero distance")
    out = zeta * t ** (-alpha)
    return float(out) if out.ndim == 0 else out


def nakagami_cdf(h, m: int):
    """CDF of the unit-mean Gamma(m, 1/m) power coefficient."""
    return gamma_ratio_lower(m, m * np.asarray(h, dtype=float))


def nakagami_pdf(h, m: int):
    """Density m^m h^{m−1} e^{−mh}/Γ(m) of the unit-mean power coefficient."""
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore"):
        logp = m * math.log(m) + (m - 1) * np.log(h) - m * h - math.lgamma(m)
    out = np.where(h >= 0, np.exp(logp), 0.0)
    if m == 1:
        out = np.where(h == 0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def nakagami_sample(m: int, rng: np.random.Generator, size=None):
    """Draw unit-mean power coefficients as the mean of m unit exponentials."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    draws = rng.standard_exponential(shape + (int(m),))
    return draws.sum(axis=-1) / m


def deviation_cdf(y):
    """CDF of Δ = ½cos U₁ − ½cos U₂ with independent uniform angles.

    Written as F_Δ(y) = (1/π)∫_{−π/2}^{π/2} F_Φ(y + ½ sin u) du with the
    arcsine-law CDF F_Φ(z) = ½ + arcsin(2z)/π; the substitution x = ½ sin u
    removes the endpoint singularities of the arcsine density.
    """
    y = float(y)
    if y <= -1.0:
        return 0.0
    if y >= 1.0:
        return 1.0

    def integrand(u):
        z = min(0.5, max(-0.5, y + 0.5 * math.sin(u)))
        return 0.5 + math.asin(2.0 * z) / math.pi

    # kinks where y + ½ sin u = ±½
    points = [math.asin(c) for c in (1.0 - 2.0 * y, -1.0 - 2.0 * y) if -1.0 < c < 1.0]
    val, err = integrate.quad(integrand, -0.5 * math.pi, 0.5 * math.pi, points=points or None,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    if err > 1e-9:
        raise NumericalFailure(f"deviation CDF quadrature error {err:.2e} at y={y}", val, err)
    return val / math.pi


@functools.lru_cache(maxsize=32)
def beam_gain_pmf(N_b: int, delta_comp: float) -> BeamGainPMF:
    """Probabilities of the discrete gain levels under uniformly random alignment.

    For 0 ≤ n ≤ Ñ_b, p_n collects |Δ| in the n-th bin together with its mirror
    image near |Δ| = 1 (both map to the same folded deviation). The last level
    takes the remaining mass.

    Args:
        N_b: number of BS antennas (≥ 2).
        delta_comp: roll-off compensation factor δ.

    Returns:
        The cached PMF.
    """
    N_b = int(N_b)
    if N_b < 2:
        raise ValueError("beam_gain_pmf needs N_b >= 2")
    n_tilde = N_b // 2 - 1
    F = deviation_cdf
    probs = []
    for n in range(n_tilde + 1):
        inner = F((n + 1) / N_b) - F(n / N_b)
        outer = F(1.0 - n / N_b) - F(1.0 - (n + 1) / N_b)
        probs.append(2.0 * inner + 2.0 * outer)
    last = 1.0 - sum(probs)
    if last < 0:
        if last < -1e-12:
            raise NumericalFailure(f"beam-gain probabilities exceed one by {-last:.2e}")
        last = 0.0
    probs.append(last)
    gains = discrete_levels(N_b, delta_comp)
    return BeamGainPMF(tuple(float(g) for g in gains), tuple(float(p) for p in probs))
