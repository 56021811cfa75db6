"""Association probabilities and serving-distance laws.

The typical user sits at the origin. Its nearest BS is at distance t_bu;
the serving link is direct LoS if unblocked, otherwise cascaded through the
nearest RIS that is in LoS of the user and faces both ends, otherwise direct
NLoS.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .model import NetworkParams, ParameterError, derive_constants
from .numerics import doubling_panels, gauss_legendre

# 128-point rule on [0, π] for the orientation average.
_THETA, _THETA_W = gauss_legendre(128, 0.0, math.pi)


@dataclass(frozen=True)
class AssociationSplit:
    """Probabilities of the three serving-link types given t_bu."""

    a_dl: float
    a_cl: float
    a_dn: float

    def __post_init__(self) -> None:
        for name in ("a_dl", "a_cl", "a_dn"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.a_dl + self.a_cl + self.a_dn - 1.0) > 1e-9:
            raise ValueError("association probabilities must sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_dl, self.a_cl, self.a_dn])


def reflection_probability(t_bu, t, theta):
    """Probability that a uniformly oriented RIS faces both the user and the BS.

    The RIS sits at distance ``t`` from the user with angle ``theta`` between
    the user→BS and user→RIS directions. Its front half-plane contains both
    ends with probability ½ − ϑ/(2π), where ϑ is the angle at the RIS.
    The coincident case t = t_bu, θ = 0 returns ¼.
    """
    t_bu, t, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t_bu, t, theta)))
    den = np.sqrt(np.maximum(t_bu**2 + t**2 - 2.0 * t_bu * t * np.cos(theta), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.clip((t - t_bu * np.cos(theta)) / den, -1.0, 1.0)
    p = 0.5 - np.arccos(ratio) / (2.0 * math.pi)
    p = np.where(den > 0, p, 0.25)
    return float(p) if p.ndim == 0 else p


def orientation_average(t_bu: float, t):
    """∫_{−π}^{π} 𝒫_R(t_bu, t, θ) dθ, by symmetry 2∫_0^π with 128-point Gauss-Legendre."""
    t = np.asarray(t, dtype=float)
    pr = reflection_probability(t_bu, t[..., None], _THETA)
    out = 2.0 * (pr * _THETA_W).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def mean_reflection(t_bu: float, t, beta: float):
    """ā(t_bu, t) = 𝒫_L(t)·∫𝒫_R dθ, the angular intensity of qualifying RISs."""
    return np.exp(-beta * np.asarray(t, dtype=float)) * orientation_average(t_bu, t)


class CascadeLaw:
    """Distance law of the nearest qualifying RIS given the BS distance.

    Tabulates Λ(t) = λ_r∫_0^t ā(t_bu, x)x dx on composite Gauss-Legendre
    panels up to the point where 𝒫_L drops below 1e-12. Exposes the
    existence probability 𝒫_CL = 1 − e^{−Λ(∞)}, the conditional density of the
    serving-RIS distance, quantiles, and quadrature nodes in probability space.
    """

    def __init__(self, t_bu: float, params: NetworkParams, panel: float = 4.0, order: int = 8):
        if not t_bu > 0:
            raise ParameterError("t_bu must be positive")
        d = derive_constants(params)
        self.t_bu = float(t_bu)
        self.lambda_r = d.lambda_r
        self.beta = d.beta
        t_end = 27.6 / d.beta
        # fine panels around the kink at t_bu, coarse ones where ā is smooth
        t_fine = min(t_end, 2.0 * t_bu + 400.0)
        edges = np.unique(np.concatenate([np.arange(0.0, t_fine, panel),
                                          np.arange(t_fine, t_end, 8.0 * panel), [t_bu, t_fine, t_end]]))
        edges = edges[edges <= t_end]
        x, w = np.polynomial.legendre.leggauss(order)
        lo, hi = edges[:-1, None], edges[1:, None]
        nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        weights = 0.5 * (hi - lo) * w
        abar = mean_reflection(t_bu, nodes, d.beta)
        panel_mass = self.lambda_r * (abar * nodes * weights).sum(axis=1)
        self._edges = edges
        self._cum = np.concatenate([[0.0], np.cumsum(panel_mass)])
        self.total = float(self._cum[-1])

    @property
    def existence(self) -> float:
        """𝒫_CL(t_bu)."""
        return -math.expm1(-self.total)

    def cumulative(self, t):
        """Λ(t), interpolated between panel edges (monotone)."""
        return np.interp(t, self._edges, self._cum)

    def pdf(self, t):
        """Conditional density of the serving-RIS distance given a cascaded link exists."""
        if self.existence <= 0:
            raise ParameterError("no cascaded link can exist (P_CL = 0)")
        t = np.asarray(t, dtype=float)
        dens = self.lambda_r * t * mean_reflection(self.t_bu, t, self.beta)
        return dens * np.exp(-self.cumulative(t)) / self.existence

    def cdf(self, t):
        return -np.expm1(-self.cumulative(t)) / self.existence

    def quantile(self, u):
        """Inverse CDF; u in [0, 1)."""
        u = np.asarray(u, dtype=float)
        target = -np.log1p(-u * self.existence)
        return np.interp(target, self._cum, self._edges)

    def nodes(self, n: int = 48) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes t_i and weights w_i with Σw_i g(t_i) ≈ E[g(T_ru)]."""
        u, w = gauss_legendre(n, 0.0, 1.0)
        return self.quantile(u), w


def cascade_law(t_bu: float, params: NetworkParams) -> CascadeLaw:
    """Cached :class:`CascadeLaw`; the key holds only the blockage and RIS density inputs."""
    return _cascade_law(float(t_bu), params.lambda_o, params.mu, params.L_o)


@functools.lru_cache(maxsize=4096)
def _cascade_law(t_bu: float, lambda_o: float, mu: float, L_o: float) -> CascadeLaw:
    return CascadeLaw(t_bu, NetworkParams(lambda_o=lambda_o, mu=mu, L_o=L_o))


def cascade_existence(t_bu: float, params: NetworkParams) -> float:
    """Probability 𝒫_CL(t_bu) that at least one RIS can serve a cascaded link."""
    if derive_constants(params).lambda_r == 0 or not params.has_ris:
        return 0.0
    return cascade_law(float(t_bu), params).existence


def association_split(t_bu: float, params: NetworkParams) -> AssociationSplit:
    """Serving-link type probabilities conditioned on the BS distance."""
    beta = derive_constants(params).beta
    p_los = math.exp(-beta * t_bu)
    a_cl = (1.0 - p_los) * cascade_existence(t_bu, params)
    return AssociationSplit(p_los, a_cl, max(0.0, 1.0 - p_los - a_cl))


def pdf_tbu(t, lambda_b: float):
    """Nearest-BS distance density 2πλ_b t exp(−πλ_b t²)."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 0, 2.0 * math.pi * lambda_b * t * np.exp(-math.pi * lambda_b * t**2), 0.0)
    return float(out) if out.ndim == 0 else out


def tbu_nodes(lambda_b: float, n: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature over the nearest-BS distance law via its quantile function."""
    u, w = gauss_legendre(n, 0.0, 1.0)
    return np.sqrt(-np.log1p(-u) / (math.pi * lambda_b)), w


def pdf_tru_given_tbu(t_ru, t_bu: float, params: NetworkParams):
    """Density of the serving-RIS distance given t_bu and a cascaded link."""
    if cascade_existence(t_bu, params) <= 0:
        raise ParameterError("cascaded link impossible: P_CL(t_bu) = 0")
    return cascade_law(float(t_bu), params).pdf(t_ru)


def theta_grid(n: int = 64) -> np.ndarray:
    """Uniform midpoint grid on (−π, π] for the user-vertex angle."""
    return -math.pi + (np.arange(n) + 0.5) * (2.0 * math.pi / n)


__all__ = [
    "AssociationSplit", "CascadeLaw", "association_split", "cascade_existence",
    "cascade_law", "doubling_panels", "mean_reflection", "orientation_average",
    "pdf_tbu", "pdf_tru_given_tbu", "reflection_probability", "tbu_nodes", "theta_grid",
]
