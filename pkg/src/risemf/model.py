"""Configuration and geometry value types shared across the package.

Everything here is an immutable value object. Derived constants are computed
once from a :class:`NetworkParams` instance and cached on it.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Optional

SPEED_OF_LIGHT = 299_792_458.0


class ParameterError(ValueError):
    """Raised when a parameter violates its validity constraints."""


class LinkType(enum.IntEnum):
    """Serving-link categories: direct LoS, cascaded via a RIS, direct NLoS."""

    DL = 0
    CL = 1
    DN = 2


@dataclass(frozen=True)
class NetworkParams:
    """System parameters of the network model.

    Units are SI throughout: densities per m², lengths in m, powers in W,
    frequency in Hz, exposure limit in W/m² and SAR reference in (W/kg)/W.

    ``bs_gain`` optionally overrides the maximum BS beamforming gain used on
    the serving link (it defaults to ``N_b``). It exists for the conservative
    compliance-distance setting where the BS gain is fixed at 15 dB. The
    interfering side lobes always follow the ``N_b``-element pattern.
    """

    lambda_b: float = 1e-5
    lambda_u: float = 2e-4
    lambda_o: float = 5e-4
    mu: float = 0.12
    L_o: float = 15.0
    N_b: int = 8
    N_r: int = 16
    delta: float = 1.0 / math.sqrt(2.0)
    f: float = 28e9
    alpha_L: float = 2.09
    alpha_N: float = 3.75
    m_L: int = 3
    m_N: int = 1
    p_b: float = 10.0
    sigma2_dl: float = 8e-12
    sigma2_ul: float = 8e-13
    p0: float = 8e-6
    p_max: float = 0.2
    epsilon: float = 0.6
    SAR_ref: float = 0.0053
    W_max: float = 10.0
    rho: float = 0.95
    bs_gain: Optional[float] = None

    def __post_init__(self) -> None:
        positive = (
            "lambda_b", "lambda_u", "lambda_o", "L_o", "delta", "f", "alpha_L",
            "p_b", "sigma2_dl", "sigma2_ul", "p0", "p_max", "SAR_ref", "W_max",
        )
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("N_b", "m_L", "m_N"):
            value = getattr(self, name)
            if not _is_integral(value) or value < 1:
                raise ParameterError(f"{name} must be an integer >= 1, got {value!r}")
        if not _is_integral(self.N_r) or self.N_r < 0:
            raise ParameterError(f"N_r must be a non-negative integer, got {self.N_r!r}")
        if not 0.0 <= self.mu <= 1.0:
            raise ParameterError(f"mu must lie in [0, 1], got {self.mu!r}")
        if not self.alpha_N > 2.0:
            raise ParameterError(f"alpha_N must exceed 2, got {self.alpha_N!r}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if not 0.0 < self.rho < 1.0:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho!r}")
        if self.bs_gain is not None and not self.bs_gain > 0:
            raise ParameterError(f"bs_gain must be positive when given, got {self.bs_gain!r}")

    def replace(self, **changes) -> "NetworkParams":
        """Return a copy with the given fields changed (validated again)."""
        return dataclasses.replace(self, **changes)

    @property
    def derived(self) -> "DerivedConstants":
        return derive_constants(self)

    @property
    def has_ris(self) -> bool:
        return self.N_r > 0 and self.mu > 0


def _is_integral(value) -> bool:
    return isinstance(value, int) or (isinstance(value, float) and value.is_integer())


@dataclass(frozen=True)
class DerivedConstants:
    """Quantities computed from :class:`NetworkParams`."""

    lambda_r: float
    lambda_f: float
    zeta: float
    area_E: float
    beta: float
    G_b: float
    G_r: float
    T_max: float
    Ntilde_b: int


@functools.lru_cache(maxsize=256)
def derive_constants(params: NetworkParams) -> DerivedConstants:
    """Compute the derived constants of a parameter set.

    Args:
        params: validated network parameters.

    Returns:
        The derived constants. ``area_E / zeta`` equals 4π by construction.
    """
    lambda_f = SPEED_OF_LIGHT / params.f
    zeta = (lambda_f / (4.0 * math.pi)) ** 2
    area_E = lambda_f**2 / (4.0 * math.pi)
    G_r = float(params.N_r) ** 2 if params.has_ris else 0.0
    # saturation distance; infinite when ε is so small that it overflows
    log_t_max = math.log(params.p_max / params.p0) / (params.alpha_L * params.epsilon)
    return DerivedConstants(
        lambda_r=params.mu * params.lambda_o,
        lambda_f=lambda_f,
        zeta=zeta,
        area_E=area_E,
        beta=2.0 * params.lambda_o * params.L_o / math.pi,
        G_b=float(params.bs_gain) if params.bs_gain is not None else float(params.N_b),
        G_r=G_r,
        T_max=math.exp(log_t_max) if log_t_max < 700.0 else math.inf,
        Ntilde_b=int(params.N_b) // 2 - 1,
    )


PRESETS = {
    "default": {},
    # Compliance-distance study: maximum BS power and a 15 dB BS gain.
    "conservative": {"p_b": 200.0, "bs_gain": 10.0**1.5},
}


def preset(name: str, **overrides) -> NetworkParams:
    """Build parameters from a named preset plus explicit overrides."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return NetworkParams(**{**base, **overrides})


@dataclass(frozen=True)
class LinkGeometry:
    """Serving-link geometry seen from the typical user at the origin.

    For cascaded links ``theta0`` is the angle at the user between the
    directions to the BS and to the RIS, and ``vartheta0`` is the angle at the
    RIS between the directions to the user and to the BS.
    """

    link_type: LinkType
    t_bu: float
    t_ru: Optional[float] = None
    t_br: Optional[float] = None
    theta0: Optional[float] = None
    vartheta0: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.t_bu > 0:
            raise ParameterError(f"t_bu must be positive, got {self.t_bu!r}")
        if self.link_type == LinkType.CL:
            if self.t_ru is None or self.t_br is None:
                raise ParameterError("cascaded geometry needs t_ru and t_br")
            if not (self.t_ru > 0 and self.t_br > 0):
                raise ParameterError("t_ru and t_br must be positive")
            slack = 1e-9 * (self.t_bu + self.t_ru)
            if not abs(self.t_bu - self.t_ru) - slack <= self.t_br <= self.t_bu + self.t_ru + slack:
                raise ParameterError("t_br violates the triangle inequality")
        elif self.t_ru is not None or self.t_br is not None:
            raise ParameterError("direct links carry no RIS distances")


def triangle_close(t_bu: float, t_ru: float, theta0: float) -> LinkGeometry:
    """Close the BS-RIS-user triangle from two sides and the user-vertex angle.

    Args:
        t_bu: BS-user distance in m.
        t_ru: RIS-user distance in m.
        theta0: angle at the user between the BS and RIS directions, rad.

    Returns:
        Cascaded-link geometry with ``t_br`` and ``vartheta0`` filled in.
    """
    if not (t_bu > 0 and t_ru > 0):
        raise ParameterError("t_bu and t_ru must be positive")
    t_br = math.sqrt(max(t_bu**2 + t_ru**2 - 2.0 * t_bu * t_ru * math.cos(theta0), 0.0))
    if t_br > 0:
        cos_v = (t_ru - t_bu * math.cos(theta0)) / t_br
        vartheta0 = math.acos(min(1.0, max(-1.0, cos_v)))
    else:
        vartheta0 = 0.0
    return LinkGeometry(LinkType.CL, t_bu, t_ru, t_br, theta0, vartheta0)


@dataclass(frozen=True)
class QueryPoint:
    """A (SINR threshold, exposure level) pair in linear units."""

    gamma: float
    omega: float
    direction: str = "downlink"

    def __post_init__(self) -> None:
        if not (self.gamma > 0 and self.omega > 0):
            raise ParameterError("gamma and omega must be positive")
        if self.direction not in ("downlink", "uplink"):
            raise ParameterError(f"direction must be downlink or uplink, got {self.direction!r}")


@dataclass(frozen=True)
class Conditioning:
    """How the serving BS distance is treated.

    ``fixed`` conditions on ``t_bu`` with interferers no closer than it.
    ``random`` averages over the nearest-BS distance law using ``n_nodes``
    quadrature points.
    """

    mode: str = "fixed"
    t_bu: float = 100.0
    n_nodes: int = 32

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "random"):
            raise ParameterError(f"conditioning mode must be fixed or random, got {self.mode!r}")
        if self.mode == "fixed" and not self.t_bu > 0:
            raise ParameterError("fixed conditioning needs t_bu > 0")
        if self.n_nodes < 2:
            raise ParameterError("n_nodes must be at least 2")

    @classmethod
    def fixed(cls, t_bu: float = 100.0) -> "Conditioning":
        return cls("fixed", t_bu)

    @classmethod
    def random(cls, n_nodes: int = 32) -> "Conditioning":
        return cls("random", 100.0, n_nodes)


@dataclass(frozen=True)
class DistributionCurve:
    """A probability curve over a threshold grid.

    ``grid`` holds thresholds (or threshold pairs for joint surfaces),
    ``values`` the probabilities and ``ci`` optional (low, high) bounds.
    """

    metric: str
    grid: tuple
    values: tuple
    source: str = "analytic"
    direction: str = "downlink"
    ci: Optional[tuple] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.metric not in ("coverage", "compliance", "joint"):
            raise ParameterError(f"unknown metric {self.metric!r}")
        if len(self.grid) != len(self.values):
            raise ParameterError("grid and values differ in length")
        if any(not (0.0 <= v <= 1.0) for v in self.values):
            raise ParameterError("probabilities must lie in [0, 1]")
