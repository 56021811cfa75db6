"""Numerical kernels: quadrature, transform inversion, special functions, roots."""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special


class NumericalFailure(RuntimeError):
    """A numerical routine did not reach its tolerance.

    Attributes:
        partial: best value obtained before giving up.
        tail: estimate of the neglected remainder.
    """

    def __init__(self, message: str, partial: float = float("nan"), tail: float = float("nan")):
        super().__init__(message)
        self.partial = partial
        self.tail = tail


class BracketError(ValueError):
    """The bracket passed to a root search does not straddle the target."""

    def __init__(self, message: str, f_lo: float, f_hi: float):
        super().__init__(message)
        self.f_lo = f_lo
        self.f_hi = f_hi


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and truncation policy for semi-infinite integrals.

    The range [a, inf) is covered by consecutive panels whose widths grow by
    ``growth`` starting from ``initial_width``; integration stops once the
    estimated tail drops below the tolerance.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_subdivisions: int = 80
    growth: float = 2.0
    initial_width: float = 1.0

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if not self.initial_width > 0:
            raise ValueError("initial_width must be positive")


INNER = QuadratureSpec()
OUTER = QuadratureSpec(rel_tol=1e-4, abs_tol=1e-7)


def integrate_semi_infinite(f: Callable[[float], float], a: float,
                            spec: QuadratureSpec = INNER) -> float:
    """Integrate ``f`` over [a, inf) with geometrically growing panels.

    Each panel is handled by adaptive Gauss-Kronrod quadrature. The tail
    beyond the last panel is estimated from the last panel's contribution,
    which is exact for a 1/x² decay and conservative for faster decay.

    Args:
        f: integrand, eventually monotonically decaying.
        a: finite lower limit.
        spec: tolerances and panel policy.

    Returns:
        The integral value.

    Raises:
        NumericalFailure: if the tail estimate is still too large after
            ``spec.max_subdivisions`` panels.
    """
    total = 0.0
    lo = float(a)
    width = spec.initial_width
    tail = float("inf")
    for k in range(spec.max_subdivisions):
        hi = lo + width
        part, _ = integrate.quad(f, lo, hi, epsabs=spec.abs_tol / 10,
                                 epsrel=spec.rel_tol / 10, limit=200)
        total += part
        tail = abs(part) / (spec.growth - 1.0)
        if k >= 1 and tail < max(spec.abs_tol, spec.rel_tol * abs(total)):
            return total
        lo = hi
        width *= spec.growth
    raise NumericalFailure(
        f"semi-infinite integral did not converge (tail estimate {tail:.3g})",
        partial=total, tail=tail)


def gauss_legendre(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [lo, hi]."""
    x, w = _leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


@functools.lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def doubling_panels(start: float, stop: float, order: int = 24,
                    ratio: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [start, stop] with geometric panels.

    Panel edges are start·ratio^k, suited to integrands that vary on a
    logarithmic scale in distance.
    """
    if not 0 < start < stop:
        raise ValueError("need 0 < start < stop")
    n_panels = max(1, int(math.ceil(math.log(stop / start) / math.log(ratio))))
    edges = start * ratio ** np.arange(n_panels + 1, dtype=float)
    edges[-1] = stop
    x, w = _leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
    weights = 0.5 * (hi - lo) * w
    return nodes.ravel(), weights.ravel()


def gil_pelaez_cdf(laplace: Callable[[np.ndarray], np.ndarray], omega: float,
                   spec: QuadratureSpec = INNER, x_min: float = 1e-8) -> float:
    """CDF of a non-negative random variable from its Laplace transform.

    Evaluates ½ − (1/π)∫_0^∞ Im[e^{−jxω} L(−jx)]/x dx. The integrand has a
    finite limit at the origin; the piece on [0, x_min] is taken from a
    linear extrapolation of the integrand. The remaining range is split into
    a finite part handled on geometric panels and a Fourier tail handled by
    QUADPACK's QAWF routine.

    Args:
        laplace: transform evaluator, called with complex arrays.
        omega: point at which to evaluate the CDF.
        spec: tolerances.
        x_min: lower cut of the explicit integration.

    Returns:
        The CDF value clamped to [0, 1].
    """
    if omega <= 0:
        return 0.0

    def phi(x):
        return complex(np.asarray(laplace(np.asarray(-1j * x)), dtype=complex))

    def g(x):
        return (np.exp(-1j * x * omega) * phi(x)).imag / x

    # x_min scales with the problem so that the origin piece stays negligible.
    x_min = min(x_min, 1e-8 / omega)
    g1, g2 = g(x_min), g(2 * x_min)
    total = x_min * 0.5 * ((2 * g1 - g2) + g1)
    x_split = 40.0 * math.pi / omega
    lo = x_min
    while lo < x_split:
        hi = min(lo * 4.0, x_split)
        part, _ = integrate.quad(g, lo, hi, epsabs=spec.abs_tol / 10,
                                 epsrel=spec.rel_tol / 10, limit=400)
        total += part
        lo = hi
    # tail: Im[e^{-jxω}φ]/x = Im φ cos(ωx)/x − Re φ sin(ωx)/x
    tail_cos, _ = integrate.quad(lambda x: phi(x).imag / x, x_split, np.inf,
                                 weight="cos", wvar=omega, epsabs=spec.abs_tol / 10, limlst=200)
    tail_sin, _ = integrate.quad(lambda x: phi(x).real / x, x_split, np.inf,
                                 weight="sin", wvar=omega, epsabs=spec.abs_tol / 10, limlst=200)
    total += tail_cos - tail_sin
    return clamp_probability(0.5 - total / math.pi, "gil_pelaez_cdf")


# Euler-summation parameters for the Fourier-series (Bromwich) inversion.
EULER_A = 18.4
EULER_TERMS = 15
EULER_AVERAGE = 11


def euler_abscissae(y: np.ndarray, a: float = EULER_A, n_terms: int = EULER_TERMS,
                    n_average: int = EULER_AVERAGE) -> np.ndarray:
    """Laplace-domain points needed by :func:`euler_combine` for CDFs at ``y``.

    Returns:
        Complex array of shape (n_terms + n_average + 1, *y.shape).
    """
    y = np.asarray(y, dtype=float)
    k = np.arange(n_terms + n_average + 1).reshape((-1,) + (1,) * y.ndim)
    return (a + 2j * np.pi * k) / (2.0 * y)


def euler_combine(transform: np.ndarray, s: np.ndarray, y: np.ndarray, a: float = EULER_A,
                  n_terms: int = EULER_TERMS, n_average: int = EULER_AVERAGE) -> np.ndarray:
    """Turn Laplace-transform samples at :func:`euler_abscissae` into CDF values.

    The CDF has transform L(s)/s. Its Bromwich integral is discretised by the
    trapezoidal rule on the line Re s = a/(2y), which aliases the CDF with a
    damping factor e^{−a}; the resulting alternating series is accelerated by
    binomial (Euler) averaging of consecutive partial sums.

    Args:
        transform: L evaluated at ``s``; leading axis indexes the series
            terms, trailing axes broadcast against ``y``.
        s: the abscissae from :func:`euler_abscissae`.
        y: evaluation points.

    Returns:
        Unclamped CDF estimates, shape broadcast(transform.shape[1:], y).
    """
    y = np.asarray(y, dtype=float)
    n_total = n_terms + n_average + 1
    terms = np.real(transform / s)
    sign = np.where(np.arange(n_total) % 2 == 0, 1.0, -1.0)
    terms = terms * sign.reshape((-1,) + (1,) * (terms.ndim - 1))
    terms[0] *= 0.5
    partial = np.cumsum(terms, axis=0)[n_terms:]
    binom = special.comb(n_average, np.arange(n_average + 1)) / 2.0**n_average
    averaged = np.tensordot(binom, partial, axes=(0, 0))
    return math.exp(a / 2.0) / y * averaged


def euler_laplace_cdf(laplace: Callable[[np.ndarray], np.ndarray], y) -> np.ndarray:
    """CDF of a non-negative variable at ``y`` by Euler-summed Fourier inversion.

    Args:
        laplace: transform evaluator accepting complex arrays of any shape.
        y: positive evaluation points (array-like).

    Returns:
        CDF values clipped to [0, 1], same shape as ``y``.
    """
    y = np.asarray(y, dtype=float)
    s = euler_abscissae(y)
    return np.clip(euler_combine(laplace(s), s, y), 0.0, 1.0)


def clamp_probability(value, where: str, slack: float = 1e-3):
    """Clamp to [0, 1], warning if the excursion exceeds ``slack``."""
    arr = np.asarray(value, dtype=float)
    excess = np.maximum(arr - 1.0, -arr)
    if np.any(excess > slack):
        warnings.warn(f"{where}: probability outside [0, 1] by {float(excess.max()):.2e}",
                      RuntimeWarning, stacklevel=2)
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def invert_monotone(F: Callable[[float], float], target: float, bracket: tuple[float, float],
                    tol: float = 1e-6, max_iter: int = 200) -> float:
    """Smallest x in the bracket with F(x) >= target, for non-decreasing F.

    Bisection keeps the invariant F(lo) < target <= F(hi); the returned value
    is the upper end once the bracket is narrower than ``tol``.

    Raises:
        BracketError: if F(hi) < target.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    f_lo = F(lo)
    if f_lo >= target:
        return lo
    f_hi = F(hi)
    if f_hi < target:
        raise BracketError(
            f"target {target} not reached on [{lo}, {hi}]: F(lo)={f_lo:.6g}, F(hi)={f_hi:.6g}",
            f_lo, f_hi)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if F(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def gamma_ratio_lower(m: int, x):
    """Regularised lower incomplete gamma P(m, x) for integer m.

    Uses 1 − e^{−x}Σ_{k<m} x^k/k! for x ≥ m and the convergent series
    e^{−x}Σ_{j≥0} x^{m+j}/(m+j)! below, which avoids cancellation near 0.
    """
    m = int(m)
    x = np.asarray(x, dtype=float)
    xs = np.maximum(x, 0.0)
    out = np.empty_like(xs)
    big = xs >= m
    if np.any(big):
        xb = xs[big]
        term = np.ones_like(xb)
        acc = np.ones_like(xb)
        for k in range(1, m):
            term = term * xb / k
            acc = acc + term
        out[big] = 1.0 - np.exp(-xb) * acc
    small = ~big
    if np.any(small):
        xsm = xs[small]
        # x^m/m! computed in log space to avoid overflow of m!
        with np.errstate(divide="ignore"):
            lead = np.exp(m * np.log(xsm) - xsm - math.lgamma(m + 1))
        term = np.ones_like(xsm)
        acc = np.ones_like(xsm)
        for j in range(1, 200):
            term = term * xsm / (m + j)
            acc = acc + term
            if np.all(term < 1e-17 * acc):
                break
        out[small] = lead * acc
    return float(out) if out.ndim == 0 else out


def gamma_ratio_lower_inv(m: int, p: float) -> float:
    """Inverse of :func:`gamma_ratio_lower` in x for probability p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    hi = float(m)
    while gamma_ratio_lower(m, hi) < p:
        hi *= 2.0
    return invert_monotone(lambda x: gamma_ratio_lower(m, x), p, (0.0, hi), tol=1e-13 * hi)


def poisson_tail_complex(m: int, z: np.ndarray) -> np.ndarray:
    """Regularised upper incomplete gamma Q(m, z) = e^{−z}Σ_{k<m} z^k/k! for complex z."""
    z = np.asarray(z, dtype=complex)
    term = np.ones_like(z)
    acc = np.ones_like(z)
    for k in range(1, int(m)):
        term = term * z / k
        acc = acc + term
    return np.exp(-z) * acc


def expint_En(n: float, x: float) -> float:
    """Generalised exponential integral E_n(x) = ∫_1^∞ e^{−xt} t^{−n} dt.

    Real orders n ≥ 1 are supported through direct quadrature of the
    defining integral. For x ≥ 1 the substitution t = 1 + u/x gives
    E_n(x) = (e^{−x}/x)∫_0^∞ e^{−u}(1 + u/x)^{−n} du; smaller x use t = e^v.

    Raises:
        ValueError: if x <= 0 or n < 1.
    """
    if not x > 0:
        raise ValueError(f"E_n(x) needs x > 0, got {x!r}")
    if n < 1:
        raise ValueError(f"E_n(x) needs n >= 1, got {n!r}")

    if x < 1.0:
        # t = e^v gives ∫_0^∞ exp(−x e^v − (n−1)v) dv, flat up to v ≈ −ln x
        def log_form(v):
            return math.exp(-x * math.exp(v) - (n - 1.0) * v)

        knee = -math.log(x)
        head, _ = integrate.quad(log_form, 0.0, knee, epsabs=0.0, epsrel=1e-12, limit=200)
        tail, _ = integrate.quad(log_form, knee, knee + 6.0, epsabs=0.0, epsrel=1e-12, limit=200)
        return head + tail

    def integrand(u):
        return math.exp(-u - n * math.log1p(u / x))

    # The factor (1 + u/x)^{−n} changes on the scale u ~ x; break there.
    brk = min(x, 50.0)
    head, _ = integrate.quad(integrand, 0.0, brk, epsabs=0.0, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(integrand, brk, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return math.exp(-x) / x * (head + tail)
