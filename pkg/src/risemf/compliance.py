"""Compliance distances: how close a user may get to a BS or a RIS.

A compliance distance is the smallest separation at which the exposure stays
below W_max with probability at least ρ. The exact solvers bisect on the
conditional exposure CDF; the closed forms keep only the serving signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .association import tbu_nodes, theta_grid
from .channel import nakagami_cdf
from .downlink import LinkBudget, cascaded_budget, conditional_compliance_dl, direct_budget
from .field import InterferenceField
from .model import LinkType, NetworkParams, ParameterError, derive_constants
from .numerics import (
    NumericalFailure,
    euler_abscissae,
    euler_combine,
    gamma_ratio_lower_inv,
    invert_monotone,
)

KINDS = ("bs", "ris_conditional", "ris_average")
BRACKET = (0.01, 1000.0)


@dataclass(frozen=True)
class ComplianceQuery:
    """Which compliance distance to compute.

    Attributes:
        kind: ``bs`` (BS to user), ``ris_conditional`` (RIS to user at a given
            BS-RIS distance) or ``ris_average`` (RIS to user, averaged).
        t_br: BS-RIS distance in m, required for ``ris_conditional``.
        overrides: parameter overrides applied before solving.
    """

    kind: str
    t_br: Optional[float] = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "ris_conditional" and not (self.t_br is not None and self.t_br > 0):
            raise ParameterError("ris_conditional needs t_br > 0")

    def resolve(self, params: NetworkParams) -> NetworkParams:
        return params.replace(**self.overrides) if self.overrides else params


def fading_quantile(m: int, rho: float) -> float:
    """F_H^{-1}(ρ) for unit-mean Nakagami-m power fading."""
    return gamma_ratio_lower_inv(m, rho) / m


def averaged_fading_cdf(h: float, params: NetworkParams) -> float:
    """F_α(h) = E_t[F_H(h t^{α_L})] with t Rayleigh-distributed as the nearest-BS distance.

    Evaluated as α_L(m_L h)^{m_L}/Γ(m_L)·∫_0^∞ t^{m_Lα_L−1}e^{−m_L h t^{α_L} − πλ_b t²} dt,
    the form obtained by integrating by parts. The integrand is handled in
    logarithms to stay finite for small h.
    """
    if h <= 0:
        return 0.0
    m, a, lam = params.m_L, params.alpha_L, params.lambda_b
    log_pre = math.log(a) + m * math.log(m * h) - math.lgamma(m)

    def integrand(t):
        if t <= 0:
            return 0.0
        return math.exp(log_pre + (m * a - 1) * math.log(t) - m * h * t**a - math.pi * lam * t * t)

    # the integrand peaks near the smaller of the two decay scales
    scale = min((1.0 / (m * h)) ** (1.0 / a), 1.0 / math.sqrt(math.pi * lam))
    pieces = [0.0, scale, 4 * scale, 16 * scale, 64 * scale, np.inf]
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, err = integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-14, epsrel=1e-11)
        if err > 1e-8:
            raise NumericalFailure(f"averaged fading CDF: quadrature error {err:.2e} at h={h}", val, err)
        total += val
    return min(total, 1.0)


def averaged_fading_quantile(rho: float, params: NetworkParams) -> float:
    """h₀ with F_α(h₀) = ρ; closed form when α_L = 2."""
    m, lam = params.m_L, params.lambda_b
    if params.alpha_L == 2.0:
        r = rho ** (1.0 / m)
        return math.pi * lam * r / (m * (1.0 - r))
    hi = 1.0
    while averaged_fading_cdf(hi, params) < rho:
        hi *= 10.0
    lo = hi
    while averaged_fading_cdf(lo, params) >= rho:
        lo /= 10.0
    # bisect in log h
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if averaged_fading_cdf(mid, params) >= rho:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 < 1e-12:
            break
    return hi


def cd_closed_form(query: ComplianceQuery, params: NetworkParams) -> float:
    """Compliance distance from the serving-signal-only approximations, in m."""
    p = query.resolve(params)
    d = derive_constants(p)
    a = p.alpha_L
    scale = p.p_b * d.G_b / (4.0 * math.pi * p.W_max)
    if query.kind == "bs":
        return (scale * fading_quantile(p.m_L, p.rho)) ** (1.0 / a)
    if d.G_r <= 0:
        raise ParameterError("RIS compliance distance needs N_r > 0")
    if query.kind == "ris_conditional":
        return (scale * d.G_r * query.t_br ** (-a) * fading_quantile(p.m_L, p.rho)) ** (1.0 / a)
    return (scale * d.G_r * averaged_fading_quantile(p.rho, p)) ** (1.0 / a)


# ------------------------------------------------------------- exact
def _cascaded_cdf_given_fields(y: float, s: np.ndarray, laps: np.ndarray, p_a: np.ndarray, m: int) -> np.ndarray:
    """Exposure CDFs at level y for cascaded prefactors p_a, one interference transform per node.

    ``laps`` holds the interference Laplace transform at the Euler abscissae
    ``s`` for each node, shape (K, nodes).
    """
    serving = (1.0 + s[:, None] * p_a[None, :] / m) ** (-m)
    return euler_combine(serving * laps, s[:, None], np.array([y]))


def _laplace_at(t_bu: float, params: NetworkParams, s: np.ndarray) -> np.ndarray:
    return InterferenceField(params, t_bu, params.p_b).laplace(s)


def cd_exact(query: ComplianceQuery, params: NetworkParams, bracket: tuple[float, float] = BRACKET,
             n_vartheta: int = 64, n_tbu: int = 32, tol: float = 1e-4) -> float:
    """Exact compliance distance by bisection on the conditional exposure CDF.

    Args:
        query: which distance.
        params: network parameters (query overrides applied on top).
        bracket: search interval in m.
        n_vartheta: grid size for the RIS-vertex angle (``ris_conditional``) or
            the user-vertex angle (``ris_average``).
        n_tbu: nodes for the BS distance law (``ris_average``).
        tol: bisection tolerance in m.

    Raises:
        BracketError: if the compliance target is not reached inside the bracket.
    """
    p = query.resolve(params)
    d = derive_constants(p)
    rho = p.rho
    y = p.W_max * d.area_E
    s = euler_abscissae(np.array([y]))[:, 0]

    if query.kind == "bs":
        def F(t):
            return conditional_compliance_dl(p.W_max, direct_budget(LinkType.DL, t, p), t, p)
        return invert_monotone(F, rho, bracket, tol)

    if d.G_r <= 0:
        raise ParameterError("RIS compliance distance needs N_r > 0")
    pre = p.p_b * d.G_b * d.G_r * d.zeta

    if query.kind == "ris_conditional":
        t_br = float(query.t_br)
        vartheta = theta_grid(n_vartheta)

        def F(t_ru):
            t_bu = np.sqrt(np.maximum(t_ru**2 + t_br**2 - 2.0 * t_ru * t_br * np.cos(vartheta), 1e-12))
            laps = np.stack([_laplace_at(float(t), p, s) for t in t_bu], axis=1)
            p_a = np.full(t_bu.size, pre * (t_ru * t_br) ** (-p.alpha_L))
            return float(np.mean(_cascaded_cdf_given_fields(y, s, laps, p_a, p.m_L)))
        return invert_monotone(F, rho, bracket, tol)

    # ris_average: BS distance from the nearest-BS law, uniform user-vertex angle
    t_nodes, w_nodes = tbu_nodes(p.lambda_b, n_tbu)
    theta = theta_grid(n_vartheta)
    laps = np.repeat(np.stack([_laplace_at(float(t), p, s) for t in t_nodes], axis=1), theta.size, axis=1)
    weights = np.repeat(w_nodes, theta.size) / theta.size
    tb = np.repeat(t_nodes, theta.size)
    th = np.tile(theta, t_nodes.size)

    def F(t_ru):
        t_br = np.sqrt(np.maximum(tb**2 + t_ru**2 - 2.0 * tb * t_ru * np.cos(th), 1e-12))
        vals = _cascaded_cdf_given_fields(y, s, laps, pre * (t_ru * t_br) ** (-p.alpha_L), p.m_L)
        return float(np.clip(weights @ vals, 0.0, 1.0))
    return invert_monotone(F, rho, bracket, tol)


def cd_table(params: NetworkParams, t_br: float = 50.0) -> list[dict]:
    """Exact and closed-form distances for all query kinds (RIS rows only with a RIS)."""
    kinds = ["bs"] + (["ris_conditional", "ris_average"] if params.has_ris else [])
    rows = []
    for kind in kinds:
        q = ComplianceQuery(kind, t_br=t_br if kind == "ris_conditional" else None)
        rows.append({"kind": kind, "t_br": q.t_br, "exact": cd_exact(q, params),
                     "closed_form": cd_closed_form(q, params)})
    return rows


__all__ = [
    "ComplianceQuery", "averaged_fading_cdf", "averaged_fading_quantile", "cd_closed_form",
    "cd_exact", "cd_table", "fading_quantile", "nakagami_cdf", "LinkBudget", "cascaded_budget",
]
