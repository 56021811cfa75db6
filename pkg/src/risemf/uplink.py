"""Uplink power control, interference, coverage and SAR-based exposure.

The typical user compensates a fraction ε of its serving-link path loss,
saturating at p_max. Uplink exposure is SAR_ref·p_tx, so given the serving
geometry it is deterministic and its conditional CDF is an indicator. The
interferers are users of other cells; their individual powers are replaced by
the mean p̄_u and their positions by a PPP thinned around the tagged BS.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .association import association_split, cascade_law, theta_grid
from .downlink import FIXED_100, alzer_coverage, conditioning_nodes
from .field import InterferenceField
from .model import Conditioning, LinkGeometry, LinkType, NetworkParams, ParameterError, derive_constants
from .numerics import clamp_probability, gauss_legendre


@dataclass(frozen=True)
class UplinkPower:
    """Transmit power of a user and whether it hit the p_max ceiling."""

    p_tx: float
    saturated: bool

    def __post_init__(self) -> None:
        if not self.p_tx > 0:
            raise ParameterError("transmit power must be positive")


def direct_power(t, alpha: float, params: NetworkParams):
    """Power-control law p₀t^{αε} for a direct link, clipped to p_max above the cutoff.

    The cutoff is T_max^{α_L/α}, where p₀t^{αε} reaches p_max.
    """
    t = np.asarray(t, dtype=float)
    cutoff = derive_constants(params).T_max ** (params.alpha_L / alpha)
    p = np.where(t < cutoff, params.p0 * t ** (alpha * params.epsilon), params.p_max)
    return float(p) if p.ndim == 0 else p


def cascaded_power(distance_product, params: NetworkParams):
    """Power-control law p₀((t_br t_ru)^{α_L}/G_r)^ε, clipped to p_max above the cutoff."""
    d = derive_constants(params)
    if d.G_r <= 0:
        raise ParameterError("cascaded power control needs a RIS (G_r > 0)")
    prod = np.asarray(distance_product, dtype=float)
    cutoff = d.T_max * d.G_r ** (1.0 / params.alpha_L)
    p = np.where(prod < cutoff,
                 params.p0 * (prod ** params.alpha_L / d.G_r) ** params.epsilon, params.p_max)
    return float(p) if p.ndim == 0 else p


def tx_power(geometry: LinkGeometry, params: NetworkParams) -> UplinkPower:
    """Transmit power of a user whose serving link has the given geometry."""
    if geometry.link_type == LinkType.DL:
        p = direct_power(geometry.t_bu, params.alpha_L, params)
    elif geometry.link_type == LinkType.DN:
        p = direct_power(geometry.t_bu, params.alpha_N, params)
    else:
        p = cascaded_power(geometry.t_ru * geometry.t_br, params)
    return UplinkPower(float(p), bool(p >= params.p_max))


def emfe_ul(geometry: LinkGeometry, params: NetworkParams) -> float:
    """Uplink exposure (SAR, W/kg) of a user transmitting over this link."""
    return params.SAR_ref * tx_power(geometry, params).p_tx


def cascade_nodes(t_bu: float, params: NetworkParams, n_u: int = 512,
                  n_theta: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Equal-weight (t_ru, t_br) nodes of a cascaded link at BS distance t_bu.

    t_ru sits at quantile midpoints of its conditional law and θ₀ on a uniform
    midpoint grid. Midpoints (rather than Gauss points) keep indicator
    functions of the distances accurate to O(1/n).
    """
    law = cascade_law(float(t_bu), params)
    t_ru = law.quantile((np.arange(n_u) + 0.5) / n_u)
    theta = theta_grid(n_theta)
    tr = np.repeat(t_ru, n_theta)
    th = np.tile(theta, n_u)
    t_br = np.sqrt(np.maximum(t_bu**2 + tr**2 - 2.0 * t_bu * tr * np.cos(th), 1e-300))
    return tr, t_br


@dataclass(frozen=True)
class UplinkNodes:
    """Serving-link mixture for the uplink at one BS distance.

    Attributes:
        weight: probability of each node (sums to 1).
        p_tx: user transmit power, W.
        p_rx: received-power prefactor p_tx·G_b·(G_r)·ζ·(path loss), W.
        m: fading shape.
        link: link type per node.
    """

    weight: np.ndarray
    p_tx: np.ndarray
    p_rx: np.ndarray
    m: np.ndarray
    link: np.ndarray


@functools.lru_cache(maxsize=256)
def uplink_nodes(t_bu: float, params: NetworkParams, n_u: int = 512, n_theta: int = 64) -> UplinkNodes:
    """Build the uplink serving-link mixture at BS distance ``t_bu``."""
    d = derive_constants(params)
    split = association_split(t_bu, params)
    p_dl = direct_power(t_bu, params.alpha_L, params)
    p_dn = direct_power(t_bu, params.alpha_N, params)
    weight = [split.a_dl, split.a_dn]
    p_tx = [p_dl, p_dn]
    p_rx = [p_dl * d.G_b * d.zeta * t_bu ** (-params.alpha_L),
            p_dn * d.G_b * d.zeta * t_bu ** (-params.alpha_N)]
    m = [params.m_L, params.m_N]
    link = [int(LinkType.DL), int(LinkType.DN)]
    if split.a_cl > 0:
        tr, tb = cascade_nodes(t_bu, params, n_u, n_theta)
        prod = tr * tb
        pc = cascaded_power(prod, params)
        weight.extend(np.full(prod.size, split.a_cl / prod.size))
        p_tx.extend(pc)
        p_rx.extend(pc * d.G_b * d.G_r * d.zeta * prod ** (-params.alpha_L))
        m.extend([params.m_L] * prod.size)
        link.extend([int(LinkType.CL)] * prod.size)
    return UplinkNodes(np.asarray(weight), np.asarray(p_tx), np.asarray(p_rx),
                       np.asarray(m, dtype=int), np.asarray(link, dtype=int))


# ---------------------------------------------------------- interference
def _tbu_breaks(params: NetworkParams) -> list[float]:
    """Breakpoints in v = e^{−πλ_b t²} at the direct-link saturation distances."""
    T = derive_constants(params).T_max
    out = []
    for alpha in (params.alpha_N, params.alpha_L):
        cutoff = T ** (params.alpha_L / alpha)
        v = math.exp(-math.pi * params.lambda_b * cutoff**2)
        if v > 1e-300:
            out.append(v)
    return sorted(out)


@functools.lru_cache(maxsize=64)
def mean_interferer_power(params: NetworkParams, n_nodes: int = 24, n_u: int = 128,
                          n_theta: int = 32) -> float:
    """Mean transmit power p̄_u of an interfering user, W.

    Deterministic nested quadrature over the user's nearest-BS distance, its
    link type, and for cascaded links the RIS distance and uniform θ₀. The
    distance integral runs over v = e^{−πλ_b t²} ∈ (0, 1), which is uniform
    under the nearest-BS law, with Gauss-Legendre pieces split where direct
    links saturate.
    """
    edges = [0.0, *_tbu_breaks(params), 1.0]
    beta = derive_constants(params).beta
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo < 1e-15:
            continue
        v, w = gauss_legendre(n_nodes, lo, hi)
        t = np.sqrt(-np.log(v) / (math.pi * params.lambda_b))
        p_los = np.exp(-beta * t)
        p_dl = direct_power(t, params.alpha_L, params)
        p_dn = direct_power(t, params.alpha_N, params)
        for x, wx, pl, pdl, pdn in zip(t, w, p_los, p_dl, p_dn):
            split = association_split(float(x), params)
            mean_p = split.a_dl * pdl + split.a_dn * pdn
            if split.a_cl > 0:
                tr, tb = cascade_nodes(float(x), params, n_u, n_theta)
                mean_p += split.a_cl * float(np.mean(cascaded_power(tr * tb, params)))
            total += wx * mean_p
    return min(total, params.p_max)


def uplink_density(params: NetworkParams):
    """Density λ_b(1 − e^{−πλ_b d²}) of interfering users around the tagged BS."""
    lam = params.lambda_b
    return lambda r: lam * -np.expm1(-math.pi * lam * np.asarray(r) ** 2)


@functools.lru_cache(maxsize=64)
def ue_field(params: NetworkParams) -> InterferenceField:
    """Uplink interference field with every interferer at power p̄_u."""
    return InterferenceField(params, 0.0, mean_interferer_power(params), density=uplink_density(params))


def laplace_interference_ul(s, params: NetworkParams):
    """Laplace transform of the uplink interference at the tagged BS."""
    out = ue_field(params).laplace(s)
    return out if np.ndim(out) else out.item()


# ------------------------------------------------------------- metrics
def _nodes_for(t_bu: float, params: NetworkParams) -> UplinkNodes:
    return uplink_nodes(float(t_bu), params)


def coverage_ul(gamma_prime, params: NetworkParams, conditioning: Conditioning = FIXED_100):
    """Uplink coverage probability P(SINR′ > γ′), Alzer form."""
    g = np.atleast_1d(np.asarray(gamma_prime, dtype=float))
    field = ue_field(params)
    out = np.zeros(g.shape)
    for t_bu, wt in conditioning_nodes(params, conditioning):
        nodes = _nodes_for(t_bu, params)
        out += wt * _node_coverage(g, nodes, params.sigma2_ul, field).T @ nodes.weight
    res = clamp_probability(out, "coverage_ul")
    return res if np.ndim(gamma_prime) else float(res[0])


def _node_coverage(g: np.ndarray, nodes: UplinkNodes, sigma2: float, field: InterferenceField) -> np.ndarray:
    """Per-node conditional coverage, shape (nodes, len(g))."""
    out = np.empty((nodes.p_rx.size, g.size))
    for m in np.unique(nodes.m):
        mask = nodes.m == m
        out[mask] = alzer_coverage(g[None, :], nodes.p_rx[mask][:, None], int(m), sigma2, field)
    return out


def compliance_ul(omega_prime, params: NetworkParams, conditioning: Conditioning = FIXED_100):
    """Uplink compliance probability P(𝒲′ ≤ ω′), ω′ in W/kg."""
    w = np.atleast_1d(np.asarray(omega_prime, dtype=float))
    out = np.zeros(w.shape)
    for t_bu, wt in conditioning_nodes(params, conditioning):
        nodes = _nodes_for(t_bu, params)
        sar = params.SAR_ref * nodes.p_tx
        out += wt * (sar[None, :] <= w[:, None]).astype(float) @ nodes.weight
    res = np.clip(out, 0.0, 1.0)
    return res if np.ndim(omega_prime) else float(res[0])


def mean_emfe_ul(params: NetworkParams, conditioning: Conditioning = FIXED_100) -> float:
    """Mean uplink exposure E[𝒲′] in W/kg."""
    total = 0.0
    for t_bu, wt in conditioning_nodes(params, conditioning):
        nodes = _nodes_for(t_bu, params)
        total += wt * params.SAR_ref * float(nodes.weight @ nodes.p_tx)
    return total


def joint_ul(gamma_prime, omega_prime, params: NetworkParams,
             conditioning: Conditioning = FIXED_100) -> np.ndarray:
    """P(SINR′ > γ′, 𝒲′ ≤ ω′) on the grid gamma_prime × omega_prime.

    Given the serving geometry the exposure is deterministic, so the joint
    probability is the coverage of the nodes whose exposure is compliant.
    """
    g = np.atleast_1d(np.asarray(gamma_prime, dtype=float))
    w = np.atleast_1d(np.asarray(omega_prime, dtype=float))
    field = ue_field(params)
    out = np.zeros((g.size, w.size))
    for t_bu, wt in conditioning_nodes(params, conditioning):
        nodes = _nodes_for(t_bu, params)
        cov = _node_coverage(g, nodes, params.sigma2_ul, field)  # (N, G)
        ok = (params.SAR_ref * nodes.p_tx[:, None] <= w[None, :]).astype(float)  # (N, W)
        out += wt * (cov * nodes.weight[:, None]).T @ ok
    res = clamp_probability(out, "joint_ul")
    if np.ndim(gamma_prime) == 0 and np.ndim(omega_prime) == 0:
        return float(res[0, 0])
    return res
