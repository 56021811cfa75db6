"""Downlink coverage, exposure and joint coverage-compliance metrics.

Every conditional metric depends on the serving link only through its
received-power prefactor P^a and fading shape m. For a fixed BS distance the
serving link is a finite mixture: one direct-LoS node, one direct-NLoS node
and a grid of cascaded nodes over (t_ru, θ₀). :class:`ServingMixture` holds
those nodes so that all metrics reduce to weighted sums.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, interpolate

from .association import association_split, cascade_law, tbu_nodes, theta_grid
from .channel import nakagami_cdf, nakagami_pdf
from .field import InterferenceField
from .model import Conditioning, LinkType, NetworkParams, ParameterError, derive_constants
from .numerics import (
    clamp_probability,
    euler_abscissae,
    euler_combine,
    expint_En,
    gil_pelaez_cdf,
    poisson_tail_complex,
)

FIXED_100 = Conditioning.fixed(100.0)


@dataclass(frozen=True)
class LinkBudget:
    """Serving-link prefactor: received power is ``p_a`` times a Nakagami-``m_q`` coefficient."""

    p_a: float
    m_q: int
    link_type: LinkType

    def __post_init__(self) -> None:
        if not self.p_a > 0:
            raise ParameterError("p_a must be positive")
        if int(self.m_q) != self.m_q or self.m_q < 1:
            raise ParameterError("m_q must be a positive integer")


@dataclass(frozen=True)
class AlzerTerms:
    """Arguments of the Gamma-CDF approximation for a coverage evaluation."""

    s_q: float
    beta_q: float

    @classmethod
    def from_budget(cls, gamma: float, budget: LinkBudget) -> "AlzerTerms":
        return cls(budget.m_q * gamma / budget.p_a, alzer_beta(budget.m_q))


def alzer_beta(m: int) -> float:
    """(m!)^{−1/m}."""
    return math.exp(-math.lgamma(m + 1) / m)


def direct_budget(link_type: LinkType, t_bu: float, params: NetworkParams) -> LinkBudget:
    """Prefactor p_b·G_b·ζ·t_bu^{−α} of a direct LoS or NLoS link."""
    d = derive_constants(params)
    if link_type == LinkType.DL:
        return LinkBudget(params.p_b * d.G_b * d.zeta * t_bu ** (-params.alpha_L), params.m_L, link_type)
    if link_type == LinkType.DN:
        return LinkBudget(params.p_b * d.G_b * d.zeta * t_bu ** (-params.alpha_N), params.m_N, link_type)
    raise ParameterError("direct_budget needs DL or DN")


def cascaded_budget(t_ru: float, t_br: float, params: NetworkParams) -> LinkBudget:
    """Prefactor p_b·G_b·G_r·ζ·(t_ru·t_br)^{−α_L} of a cascaded link."""
    d = derive_constants(params)
    if d.G_r <= 0:
        raise ParameterError("cascaded link needs a RIS (N_r > 0)")
    return LinkBudget(params.p_b * d.G_b * d.G_r * d.zeta * (t_ru * t_br) ** (-params.alpha_L),
                      params.m_L, LinkType.CL)


@dataclass(frozen=True)
class ServingMixture:
    """Weighted serving-link nodes for one BS distance.

    Attributes:
        t_bu: BS distance.
        p_a, m, weight, link: per-node prefactor, fading shape, probability
            weight (summing to 1) and link type.
        t_ru, t_br: cascaded distances (NaN for direct nodes).
    """

    t_bu: float
    p_a: np.ndarray
    m: np.ndarray
    weight: np.ndarray
    link: np.ndarray
    t_ru: np.ndarray
    t_br: np.ndarray

    def groups(self):
        """Yield (mask, m) for each distinct fading shape."""
        for m in np.unique(self.m):
            yield self.m == m, int(m)


@functools.lru_cache(maxsize=512)
def serving_mixture(t_bu: float, params: NetworkParams, n_tru: int = 48,
                    n_theta: int = 64) -> ServingMixture:
    """Serving-link mixture at BS distance ``t_bu``.

    Cascaded nodes use quantile-space Gauss-Legendre points for the RIS
    distance and a uniform midpoint grid for θ₀.
    """
    t_bu = float(t_bu)
    split = association_split(t_bu, params)
    p_a = [direct_budget(LinkType.DL, t_bu, params).p_a, direct_budget(LinkType.DN, t_bu, params).p_a]
    m = [params.m_L, params.m_N]
    weight = [split.a_dl, split.a_dn]
    link = [int(LinkType.DL), int(LinkType.DN)]
    t_ru_all = [np.nan, np.nan]
    t_br_all = [np.nan, np.nan]
    if split.a_cl > 0:
        d = derive_constants(params)
        t_ru, w_ru = cascade_law(t_bu, params).nodes(n_tru)
        theta = theta_grid(n_theta)
        tr = np.repeat(t_ru, n_theta)
        th = np.tile(theta, n_tru)
        t_br = np.sqrt(np.maximum(t_bu**2 + tr**2 - 2.0 * t_bu * tr * np.cos(th), 1e-300))
        p_a.extend(params.p_b * d.G_b * d.G_r * d.zeta * (tr * t_br) ** (-params.alpha_L))
        m.extend([params.m_L] * tr.size)
        weight.extend(split.a_cl * np.repeat(w_ru, n_theta) / n_theta)
        link.extend([int(LinkType.CL)] * tr.size)
        t_ru_all.extend(tr)
        t_br_all.extend(t_br)
    return ServingMixture(t_bu, np.asarray(p_a), np.asarray(m, dtype=int), np.asarray(weight),
                          np.asarray(link, dtype=int), np.asarray(t_ru_all), np.asarray(t_br_all))


@functools.lru_cache(maxsize=512)
def bs_field(t_bu: float, params: NetworkParams) -> InterferenceField:
    """Interference from BSs farther than ``t_bu``, cached per distance."""
    return InterferenceField(params, float(t_bu), params.p_b)


def conditioning_nodes(params: NetworkParams, conditioning: Conditioning):
    """(t_bu, weight) pairs implementing the chosen conditioning."""
    if conditioning.mode == "fixed":
        return [(float(conditioning.t_bu), 1.0)]
    t, w = tbu_nodes(params.lambda_b, conditioning.n_nodes)
    return list(zip(t.tolist(), w.tolist()))


# ----------------------------------------------------------------- coverage
def laplace_interference_dl(s, t_bu: float, params: NetworkParams):
    """Laplace transform of the downlink interference given the BS distance."""
    out = bs_field(float(t_bu), params).laplace(s)
    return out if np.ndim(out) else complex(out) if np.iscomplexobj(out) else float(out)


def alzer_coverage(gamma, p_a, m: int, sigma2: float, field: InterferenceField) -> np.ndarray:
    """P(P^a·H > γ(σ² + I)) in Alzer form, broadcast over inputs.

    Evaluates Σ_k C(m,k)(−1)^{k+1} e^{−kβsσ²} L(kβs) with s = mγ/P^a and
    β = (m!)^{−1/m}; exact for m = 1.
    """
    beta = alzer_beta(m)
    s = m * np.asarray(gamma, dtype=float) / np.asarray(p_a, dtype=float)
    total = np.zeros(s.shape)
    for k in range(1, m + 1):
        arg = k * beta * s
        total = total + math.comb(m, k) * (-1.0) ** (k + 1) * np.exp(-arg * sigma2) * field.laplace_real(arg)
    return total


def conditional_coverage_dl(gamma: float, budget: LinkBudget, t_bu: float, params: NetworkParams) -> float:
    """P(SINR > γ) for one serving link, Alzer form (exact when m = 1)."""
    field = bs_field(float(t_bu), params)
    val = alzer_coverage(np.asarray(gamma), np.asarray(budget.p_a), budget.m_q, params.sigma2_dl, field)
    return clamp_probability(val, "conditional_coverage_dl")


def coverage_dl(gamma, params: NetworkParams, conditioning: Conditioning = FIXED_100,
                method: str = "alzer"):
    """Downlink coverage probability P(SINR > γ).

    Args:
        gamma: SINR threshold(s), linear.
        params: network parameters.
        conditioning: fixed or random BS distance.
        method: ``"alzer"`` for the Gamma-CDF approximation of the serving
            fading, or ``"exact"`` to integrate the fading density against the
            interference CDF.

    Returns:
        Coverage probability, scalar or array matching ``gamma``.
    """
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    out = np.zeros(g.shape)
    for t_bu, wt in conditioning_nodes(params, conditioning):
        mix = serving_mixture(t_bu, params)
        field = bs_field(t_bu, params)
        if method == "alzer":
            for mask, m in mix.groups():
                cov = alzer_coverage(g[:, None], mix.p_a[mask][None, :], m, params.sigma2_dl, field)
                out += wt * cov @ mix.weight[mask]
        elif method == "exact":
            vals = _joint_mixture(g, np.array([np.inf]), mix, params.sigma2_dl, field)[:, 0]
            out += wt * vals
        else:
            raise ValueError(f"unknown coverage method {method!r}")
    res = clamp_probability(out, "coverage_dl")
    return res if np.ndim(gamma) else float(np.asarray(res).reshape(-1)[0])


# --------------------------------------------------------------- exposure
def laplace_emfe_dl(s, budget: LinkBudget, t_bu: float, params: NetworkParams):
    """Laplace transform of the exposure 𝒲 = (P + I)/𝓔 for one serving link (s in m²/W)."""
    area = derive_constants(params).area_E
    s = np.asarray(s)
    serving = (1.0 + s * budget.p_a / (budget.m_q * area)) ** (-budget.m_q)
    return serving * bs_field(float(t_bu), params).laplace(s / area)


def _compliance_nodes(y: np.ndarray, p_a: np.ndarray, m: np.ndarray, field: InterferenceField,
                      chunk: int = 512) -> np.ndarray:
    """CDF of P^a·H + I at each y for each node, shape (nodes, len(y))."""
    s = euler_abscissae(y)  # (K, Y)
    lap = field.laplace(s)
    out = np.empty((p_a.size, y.size))
    for lo in range(0, p_a.size, chunk):
        pa = p_a[lo:lo + chunk, None, None]
        mm = m[lo:lo + chunk, None, None]
        serving = (1.0 + s[:, None, :] * pa.transpose(1, 0, 2) / mm.transpose(1, 0, 2)) ** (
            -mm.transpose(1, 0, 2))
        transform = serving * lap[:, None, :]
        out[lo:lo + chunk] = euler_combine(transform, s[:, None, :], y[None, :])
    return out


def conditional_compliance_dl(omega: float, budget: LinkBudget, t_bu: float, params: NetworkParams,
                              method: str = "euler") -> float:
    """P(𝒲 ≤ ω) for one serving link.

    Args:
        omega: exposure level in W/m².
        method: ``"euler"`` (Fourier-series inversion with Euler summation)
            or ``"gil-pelaez"`` (direct inversion integral; slower).
    """
    if omega <= 0:
        return 0.0
    if method == "gil-pelaez":
        return gil_pelaez_cdf(lambda s: laplace_emfe_dl(s, budget, t_bu, params), omega)
    if method != "euler":
        raise ValueError(f"unknown inversion method {method!r}")
    y = np.array([omega * derive_constants(params).area_E])
    val = _compliance_nodes(y, np.array([budget.p_a]), np.array([budget.m_q]), bs_field(float(t_bu), params))
    return clamp_probability(val[0, 0], "conditional_compliance_dl")


def compliance_dl(omega, params: NetworkParams, conditioning: Conditioning = FIXED_100):
    """Downlink compliance probability P(𝒲 ≤ ω), ω in W/m²."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    area = derive_constants(params).area_E
    out = np.zeros(w.shape)
    pos = w > 0
    for t_bu, wt in conditioning_nodes(params, conditioning):
        mix = serving_mixture(t_bu, params)
        vals = _compliance_nodes(w[pos] * area, mix.p_a, mix.m, bs_field(t_bu, params))
        out[pos] += wt * (mix.weight @ vals)
    res = clamp_probability(out, "compliance_dl")
    return res if np.ndim(omega) else float(np.asarray(res).reshape(-1)[0])


def emfe_quantile_dl(q: float, params: NetworkParams, conditioning: Conditioning = FIXED_100,
                     rel_tol: float = 1e-6) -> float:
    """Exposure level ω (W/m²) at which the compliance probability reaches q."""
    lo, hi = 1e-9, 1e-3
    while compliance_dl(hi, params, conditioning) < q:
        hi *= 10.0
    while compliance_dl(lo, params, conditioning) >= q:
        lo /= 10.0
    while hi / lo - 1.0 > rel_tol:
        mid = math.sqrt(lo * hi)
        if compliance_dl(mid, params, conditioning) >= q:
            hi = mid
        else:
            lo = mid
    return hi


def mean_emfe_dl(params: NetworkParams, conditioning: Conditioning = FIXED_100) -> tuple[float, float]:
    """First moments (E[𝒲₁], E[𝒲₂]) of serving and interference exposure, W/m².

    The interference part follows from Campbell's theorem: with the mean
    discrete beam gain ḡ_B,
    E[𝒲₂|t] = (λ_b p_b ḡ_B/2)(t^{2−α_L}E_{α_L−1}(βt) + t^{2−α_N}/(α_N−2) − t^{2−α_N}E_{α_N−1}(βt)).
    """
    d = derive_constants(params)
    g_bar = bs_field(1.0, params).mean_gain
    aL, aN = params.alpha_L, params.alpha_N
    e1 = e2 = 0.0
    for t, wt in conditioning_nodes(params, conditioning):
        mix = serving_mixture(t, params)
        e1 += wt * float(mix.weight @ mix.p_a) / d.area_E
        bt = d.beta * t
        radial = (t ** (2 - aL) * expint_En(aL - 1, bt) + t ** (2 - aN) / (aN - 2)
                  - t ** (2 - aN) * expint_En(aN - 1, bt))
        e2 += wt * 0.5 * params.lambda_b * params.p_b * g_bar * radial
    return e1, e2


# ------------------------------------------------------------------ joint
_LOG_PANELS = 2 * 16  # half-decade panels over 16 decades
_PANEL_ORDER = 8


@functools.lru_cache(maxsize=1)
def _log_rule():
    """Nodes v ∈ (1e-16, 1] and weights for ∫_0^1 g(v) dv, graded towards 0."""
    edges = 10.0 ** (-np.arange(_LOG_PANELS + 1)[::-1] / 2.0)
    x, w = np.polynomial.legendre.leggauss(_PANEL_ORDER)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel(), (0.5 * (hi - lo) * w).ravel()


def _joint_direct(gamma: np.ndarray, y: np.ndarray, p_a: np.ndarray, m: int, sigma2: float,
                  field: InterferenceField) -> np.ndarray:
    """P(P^aH > γ(σ²+I), P^aH + I ≤ y) for arrays broadcast to a common shape.

    Conditioning on H, the event is I < min(P^aH/γ − σ², y − P^aH). The
    two arguments cross at I = z* = (y − γσ²)/(1+γ), so the probability is
    ∫_0^{z*} F_I(z)[(γ/P^a) f_H((z+σ²)γ/P^a) + (1/P^a) f_H((y−z)/P^a)] dz.
    The range is split at z*/2 and each half is graded logarithmically
    towards its outer end. ``y = inf`` gives the exact coverage.
    """
    gamma, y, p_a = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (gamma, y, p_a)))
    v, wv = _log_rule()
    out = np.zeros(gamma.shape)
    cov_only = np.isinf(y)
    # coverage: ∫_0^{z_cap} F_I(z)(γ/P)f_H((z+σ²)γ/P) dz
    if np.any(cov_only):
        g, pa = gamma[cov_only][..., None], p_a[cov_only][..., None]
        h_max = (45.0 + 5.0 * m) / m
        z_cap = np.maximum(pa * h_max / g - sigma2, 0.0)
        z = z_cap * v
        dens = (g / pa) * nakagami_pdf((z + sigma2) * g / pa, m)
        out[cov_only] = np.sum(field.cdf(z) * dens * wv, axis=-1) * z_cap[..., 0]
    joint = ~cov_only
    if np.any(joint):
        g, pa, yy = gamma[joint][..., None], p_a[joint][..., None], y[joint][..., None]
        z_star = np.maximum((yy - g * sigma2) / (1.0 + g), 0.0)
        half = 0.5 * z_star
        z = np.concatenate([half * v, z_star - half * v], axis=-1)
        wz = np.concatenate([wv, wv]) * half

        def kernel(zz):
            return ((g / pa) * nakagami_pdf((zz + sigma2) * g / pa, m)
                    + nakagami_pdf(np.maximum(yy - zz, 0.0) / pa, m) / pa)

        out[joint] = np.sum(field.cdf(z) * kernel(z) * wz, axis=-1)
    return out


def _joint_mixture(gamma: np.ndarray, y: np.ndarray, mix: ServingMixture, sigma2: float,
                   field: InterferenceField, per_decade: int = 16) -> np.ndarray:
    """Mixture-weighted joint probability on a (gamma, y) grid.

    Cascaded nodes only differ through P^a, so the conditional probability is
    evaluated on a logarithmic P^a grid and interpolated by cubic splines.
    """
    out = np.zeros((gamma.size, y.size))
    G, Y = gamma[:, None, None], y[None, :, None]
    for mask, m in mix.groups():
        pa, wt = mix.p_a[mask], mix.weight[mask]
        lo, hi = pa.min(), pa.max()
        n_grid = max(8, int(math.ceil(per_decade * math.log10(hi / lo))) + 1) if hi > lo else 1
        if pa.size <= n_grid:
            vals = _joint_direct(G, Y, pa[None, None, :], m, sigma2, field)
            out += vals @ wt
            continue
        grid = np.geomspace(lo, hi, n_grid)
        vals = _joint_direct(G, Y, grid[None, None, :], m, sigma2, field)
        spline = interpolate.CubicSpline(np.log(grid), vals, axis=-1)
        out += np.clip(spline(np.log(pa)), 0.0, 1.0) @ wt
    return out


def _joint_gil_pelaez(gamma: float, y: float, p_a: float, m: int, sigma2: float,
                      field: InterferenceField, tail_tol: float = 1e-6) -> float:
    """The same joint probability through one Gil-Pelaez integral with closed-form kernels.

    Inverting F_I inside the two h-integrals turns them into
    ½[F_H(h_ω) − F_H(h_σ)] − (1/π)∫_0^∞ Im[(Ξ₁e^{jxσ²} + Ξ₂e^{−jxy})L_I(−jx)]/x dx, where
    Ξ₁ = (m/b₁)^m[Q(m, b₁h_σ) − Q(m, b₁h₁)] with b₁ = m + jxP^a/γ,
    Ξ₂ = (m/b₂)^m[Q(m, b₂h₁) − Q(m, b₂h_ω)] with b₂ = m − jxP^a, and Q the
    regularised upper incomplete gamma function. Both kernels decay like
    γ/(xP^a), so the integral is truncated where that bound reaches
    ``tail_tol``.
    """
    if y < gamma * sigma2:
        return 0.0
    p1 = gamma * (y + sigma2) / (1.0 + gamma)
    h_s, h_1, h_w = sigma2 * gamma / p_a, p1 / p_a, y / p_a

    def integrand(x):
        b1 = m + 1j * x * p_a / gamma
        b2 = m - 1j * x * p_a
        xi1 = (m / b1) ** m * (poisson_tail_complex(m, b1 * h_s) - poisson_tail_complex(m, b1 * h_1))
        xi2 = (m / b2) ** m * (poisson_tail_complex(m, b2 * h_1) - poisson_tail_complex(m, b2 * h_w))
        lap = field.laplace(np.array([-1j * x]))[0]
        return float(((xi1 * np.exp(1j * x * sigma2) + xi2 * np.exp(-1j * x * y)) * lap).imag) / x

    scale = max(p_a / gamma, p_a, y)
    x_hi = 1.0 / (tail_tol * min(p_a / gamma, p_a))
    lo = 1e-6 / scale
    total = integrand(lo) * lo
    while lo < x_hi:
        hi = 2.0 * lo
        with warnings.catch_warnings():
            # the top panels are highly oscillatory but carry at most ~tail_tol
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            part, _ = integrate.quad(integrand, lo, hi, limit=500, epsabs=1e-3 * tail_tol, epsrel=1e-8)
        total += part
        lo = hi
    half = 0.5 * (nakagami_cdf(h_w, m) - nakagami_cdf(h_s, m))
    return half - total / math.pi


def joint_conditional_dl(gamma: float, omega: float, budget: LinkBudget, t_bu: float,
                         params: NetworkParams, method: str = "table") -> float:
    """P(SINR > γ, 𝒲 ≤ ω) for one serving link.

    Args:
        gamma: SINR threshold, linear.
        omega: exposure level, W/m².
        method: ``"table"`` integrates the fading density against a tabulated
            interference CDF; ``"gil-pelaez"`` evaluates the closed-form
            inversion integral (slow, for verification).
    """
    field = bs_field(float(t_bu), params)
    y = omega * derive_constants(params).area_E
    if y < gamma * params.sigma2_dl:
        return 0.0
    if method == "gil-pelaez":
        val = _joint_gil_pelaez(gamma, y, budget.p_a, budget.m_q, params.sigma2_dl, field)
    elif method == "table":
        val = _joint_direct(np.array(gamma), np.array(y), np.array(budget.p_a), budget.m_q,
                            params.sigma2_dl, field)
    else:
        raise ValueError(f"unknown joint method {method!r}")
    return clamp_probability(val, "joint_conditional_dl")


def joint_dl(gamma: Sequence[float] | float, omega: Sequence[float] | float, params: NetworkParams,
             conditioning: Conditioning = FIXED_100) -> np.ndarray:
    """Joint probability P(SINR > γ, 𝒲 ≤ ω) on the grid gamma × omega.

    Returns:
        Array of shape (len(gamma), len(omega)); scalars for scalar inputs.
    """
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    y = w * derive_constants(params).area_E
    out = np.zeros((g.size, w.size))
    for t_bu, wt in conditioning_nodes(params, conditioning):
        out += wt * _joint_mixture(g, y, serving_mixture(t_bu, params), params.sigma2_dl,
                                   bs_field(t_bu, params))
    res = clamp_probability(out, "joint_dl")
    if np.ndim(gamma) == 0 and np.ndim(omega) == 0:
        return float(res[0, 0])
    return res
