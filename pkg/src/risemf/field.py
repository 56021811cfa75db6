"""Laplace transform and CDF of aggregate interference from a Poisson field.

Interferers form a (possibly thinned) PPP around the receiver. Each one
contributes power·ζ·d^{−α_v}·G·H with a LoS/NLoS state drawn independently
with probability 𝒫_v(d), a beam gain G from the discrete multi-lobe PMF and
Nakagami-m fading H. The log-Laplace transform is a one-dimensional radial
integral, evaluated here on a fixed composite Gauss-Legendre rule so that
it can be vectorised over many (complex) arguments at once.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy import interpolate

from .channel import beam_gain_pmf
from .model import NetworkParams, derive_constants
from .numerics import doubling_panels, euler_abscissae, euler_combine, gauss_legendre

# Beyond this distance NLoS interference is added through a first-order tail term.
_NLOS_FAR = 1e7
_CHUNK = 2048


class InterferenceField:
    """Aggregate interference I = Σ_i power·G_i·ζ·d_i^{−α_{v_i}}·H_i.

    Args:
        params: network parameters (blockage, path loss, fading, pattern).
        t_min: interferers lie at distance ≥ t_min (0 allowed).
        power: transmit power of every interferer in W.
        density: callable d ↦ interferer density per m²; defaults to λ_b.
        order: Gauss-Legendre points per doubling panel.
    """

    def __init__(self, params: NetworkParams, t_min: float, power: float,
                 density: Optional[Callable[[np.ndarray], np.ndarray]] = None, order: int = 16):
        d = derive_constants(params)
        self.params = params
        self.t_min = float(t_min)
        self.power = float(power)
        gains, probs = beam_gain_pmf(params.N_b, params.delta).arrays()
        keep = probs > 0
        self._gains, self._probs = gains[keep], probs[keep]
        self.mean_gain = float(np.dot(gains, probs))
        if density is None:
            lam = params.lambda_b
            density = lambda r: np.full_like(r, lam)  # noqa: E731
        self._density = density

        los_far = 41.5 / d.beta  # 𝒫_L below 1e-18
        comps = []
        for alpha, m, is_los in ((params.alpha_L, params.m_L, True),
                                 (params.alpha_N, params.m_N, False)):
            far = los_far if is_los else _NLOS_FAR
            if self.t_min >= far:
                continue
            r, w = _radial_rule(self.t_min, far, order)
            p_los = np.exp(-d.beta * r)
            p_state = p_los if is_los else -np.expm1(-d.beta * r)
            weight = 2.0 * math.pi * density(r) * r * p_state * w
            coef = self.power * d.zeta * r ** (-alpha)
            comps.append((weight, coef, int(m), alpha))
        self._comps = comps
        # first-order NLoS tail beyond the last node: density → λ_b, 𝒫_N → 1
        lam_far = float(density(np.array([_NLOS_FAR]))[0])
        a_n = params.alpha_N
        self._tail = (2.0 * math.pi * lam_far * self.power * d.zeta * self.mean_gain
                      * max(_NLOS_FAR, self.t_min) ** (2.0 - a_n) / (a_n - 2.0))
        self._real_table = None
        self._cdf_table = None

    # ----- transform -------------------------------------------------------
    def mean(self) -> float:
        """E[I] from the same radial rule."""
        tot = sum(float(np.dot(wt, cf)) for wt, cf, _, _ in self._comps)
        return self.mean_gain * tot + self._tail

    def log_laplace(self, s) -> np.ndarray:
        """log E[e^{−sI}] for real or complex s with Re s ≥ 0 (any shape)."""
        s = np.asarray(s)
        flat = s.reshape(-1)
        out = np.empty(flat.shape, dtype=np.result_type(flat.dtype, float))
        g = self._gains
        p = self._probs
        for lo in range(0, flat.size, _CHUNK):
            sc = flat[lo:lo + _CHUNK, None]
            acc = -self._tail * sc[:, 0]
            for weight, coef, m, _ in self._comps:
                x = sc * coef  # (chunk, nodes)
                u = x[..., None] * (g / m)  # (chunk, nodes, levels)
                acc = acc - (_one_minus_pow(u, m) @ p) @ weight
            out[lo:lo + _CHUNK] = acc
        return out.reshape(s.shape)

    def laplace(self, s) -> np.ndarray:
        """E[e^{−sI}] evaluated directly."""
        return np.exp(self.log_laplace(s))

    def laplace_real(self, s) -> np.ndarray:
        """E[e^{−sI}] for real s ≥ 0 from a cached spline of log(−log L) in log s.

        Both ends of that curve are straight lines in log-log coordinates
        (slope 1 near the origin, slope 2/α_N far out), so the spline is
        extended linearly outside the tabulated range.
        """
        s = np.asarray(s, dtype=float)
        if self._real_table is None:
            mean = self.mean()
            u = np.linspace(math.log(1e-8 / mean), math.log(1e10 / mean), 18 * 30 + 1)
            q = np.log(-self.log_laplace(np.exp(u)))
            spline = interpolate.CubicSpline(u, q)
            self._real_table = (u, q, spline, np.gradient(q, u))
        u_tab, q_tab, spline, slope = self._real_table
        out = np.ones(s.shape)
        pos = s > 0
        if np.any(pos):
            us = np.log(s[pos])
            q = spline(np.clip(us, u_tab[0], u_tab[-1]))
            q = np.where(us < u_tab[0], q_tab[0] + (us - u_tab[0]), q)
            q = np.where(us > u_tab[-1], q_tab[-1] + slope[-1] * (us - u_tab[-1]), q)
            out[pos] = np.exp(-np.exp(q))
        return out

    # ----- distribution ----------------------------------------------------
    def cdf(self, z) -> np.ndarray:
        """CDF of I from a cached table built by Euler-summed Fourier inversion.

        The table spans the range where the CDF moves from below 1e-10 to
        above 1 − 1e-10, at 24 points per decade, and is interpolated with a
        monotone cubic in log z.
        """
        if self._cdf_table is None:
            self._cdf_table = self._build_cdf_table()
        logz, vals, pchip = self._cdf_table
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        inside = z > np.exp(logz[0])
        out[inside] = np.clip(pchip(np.minimum(np.log(z[inside]), logz[-1])), 0.0, 1.0)
        out[z >= np.exp(logz[-1])] = 1.0
        return out

    def cdf_direct(self, z) -> np.ndarray:
        """CDF of I by Euler inversion at each point (no table)."""
        z = np.asarray(z, dtype=float)
        s = euler_abscissae(z)
        return np.clip(euler_combine(self.laplace(s), s, z), 0.0, 1.0)

    def _build_cdf_table(self):
        mean = self.mean()
        lo, hi = mean * 1e-10, mean * 1e4
        for _ in range(10):
            if self.cdf_direct(np.array([lo]))[0] < 1e-10:
                break
            lo *= 1e-3
        for _ in range(10):
            if self.cdf_direct(np.array([hi]))[0] > 1.0 - 1e-10:
                break
            hi *= 1e2
        n = int(math.ceil(24 * math.log10(hi / lo))) + 1
        z = np.geomspace(lo, hi, n)
        vals = np.maximum.accumulate(self.cdf_direct(z))
        logz = np.log(z)
        return logz, vals, interpolate.PchipInterpolator(logz, vals)


def _one_minus_pow(u: np.ndarray, m: int) -> np.ndarray:
    """1 − (1+u)^{−m} for integer m, with a series branch for small |u|."""
    v = 1.0 / (1.0 + u)
    direct = 1.0 - v**m
    series = m * u * (1.0 - 0.5 * (m + 1) * u + (m + 1) * (m + 2) / 6.0 * u * u)
    return np.where(np.abs(u) < 1e-3, series, direct)


def _radial_rule(t_min: float, far: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    if t_min > 0:
        return doubling_panels(t_min, far, order)
    head_r, head_w = gauss_legendre(order, 0.0, 1.0)
    r, w = doubling_panels(1.0, far, order)
    return np.concatenate([head_r, r]), np.concatenate([head_w, w])
