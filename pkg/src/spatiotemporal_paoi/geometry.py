"""Stochastic-geometry kernels for the uplink interference seen at a typical BS.

The interferers are approximated by an inhomogeneous PPP which, after mapping
each interferer to its distance/power ratio ``omega = r**eta / P``, becomes a
1-D PPP on ``(0, inf)``. The b-th moment of the conditional success
probability is then a double integral: an outer average over the (scaled)
serving distance ``z = pi*lam*r_o**2`` and an inner PGFL exponent over the
mapped interferer ratio ``y``.

Full inversion (``eps == 1``) is handled separately: there the incomplete
gamma factor becomes the indicator ``y > 1`` and the outer integral collapses
to a single exponential.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .config import NetworkParams
from .errors import EpsilonOne, QuadratureFailure
from .special import lower_gamma

# Outer z-integral never truncated before this point.
Z_MAX_FLOOR = 40.0


@dataclass(frozen=True)
class MomentPair:
    m1: float
    m2: float

    @property
    def variance(self) -> float:
        return self.m2 - self.m1 * self.m1

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (
            -tol <= self.m2 <= self.m1 + tol
            and self.m1 <= 1 + tol
            and self.m2 >= self.m1**2 - tol
        )


def serving_distance_pdf(r, lam: float):
    """Density of the distance to the nearest BS of a PPP with intensity ``lam``."""
    r = np.asarray(r, dtype=float)
    out = 2.0 * math.pi * lam * r * np.exp(-math.pi * lam * r * r)
    return float(out) if out.ndim == 0 else out


def interferer_power_cdf(p, cfg: NetworkParams):
    """CDF of an interferer's transmit power ``rho * r**(eta*eps)``.

    The serving distance is Rayleigh, so
    ``P{P_i <= p} = 1 - exp(-pi*lam*(p/rho)**(2/(eta*eps)))``.

    >>> from spatiotemporal_paoi.config import NetworkParams
    >>> cfg = NetworkParams(bs_intensity=1.0, pathloss_exponent=4.0,
    ...                     power_control_epsilon=0.5, power_control_rho=1.0)
    >>> round(interferer_power_cdf(1.0, cfg), 12)  # p = rho  <=>  r = 1
    0.956786081736
    >>> round(1 - math.exp(-math.pi), 12)
    0.956786081736
    """
    eta, eps = cfg.pathloss_exponent, cfg.power_control_epsilon
    if eps == 0:
        return np.where(np.asarray(p) >= cfg.power_control_rho, 1.0, 0.0)
    p = np.asarray(p, dtype=float)
    out = 1.0 - np.exp(-math.pi * cfg.bs_intensity * (p / cfg.power_control_rho) ** (2.0 / (eta * eps)))
    return float(out) if out.ndim == 0 else out


def mapped_intensity_tt(omega: float, theta_T: float, cfg: NetworkParams, T: int) -> float:
    """Intensity of the mapped interferer process for TT traffic at ratio ``omega``."""
    eta, eps = cfg.pathloss_exponent, cfg.power_control_epsilon
    if eps >= 1.0:
        raise EpsilonOne("mapped intensity is singular at eps=1; use the limiting moment branch")
    lam, rho = cfg.bs_intensity, cfg.power_control_rho
    pref = 2.0 * (1.0 + theta_T) * (math.pi * lam) ** (1.0 - eps) * rho ** (2.0 / eta)
    pref /= T * eta * omega ** (1.0 - 2.0 / eta)
    arg = math.pi * lam * (omega * rho) ** (2.0 / (eta * (1.0 - eps)))
    return pref * lower_gamma(1.0 + eps, arg)


# moments --------------------------------------------------------------------

def _quad(f, a, b, rel_tol, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=1e-15, epsrel=rel_tol, limit=200, **kw)
    if not math.isfinite(val) or err > max(100.0 * rel_tol * abs(val), 1e-11):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] reached error {err:.2e} for value {val:.6e}")
    return val


@functools.lru_cache(maxsize=1 << 16)
def _lower_gamma_cached(a: float, x: float) -> float:
    # the gamma argument depends on the quadrature node only, not on z, so
    # the fixed Kronrod nodes repeat across outer evaluations
    return lower_gamma(a, x)


def _upper_tail(weight: Callable[[float], float], y0: float, h: Callable[[float], float], theta: float,
                eta: float, rel_tol: float) -> float:
    """int_y0^inf y^(2/eta-1) h(y) weight(y) dy.

    With q = 1 - 2/eta and s = (y/y0)^-q the y^(2/eta-2) decay of the
    integrand is absorbed and the transformed integrand stays bounded on (0, 1].
    """
    q = 1.0 - 2.0 / eta

    def f(s: float) -> float:
        if s <= 0.0:
            return 0.0
        y = y0 * s ** (-1.0 / q)
        v = theta / (y + theta)
        # y^(2/eta-1) dy = y0^(1-q) / q * s^(-1/q) ds
        return y0 ** (1.0 - q) / q * s ** (-1.0 / q) * h(v) * weight(y)

    return _quad(f, 0.0, 1.0, rel_tol)


def _inner(z: float, h: Callable[[float], float], theta: float, eta: float, eps: float, rel_tol: float) -> float:
    """int_0^inf y^(2/eta-1) h(y) gamma(1+eps, z*y^k) dy.

    ``h`` takes v = theta/(y+theta). The gamma argument crosses 1 at
    y* = z^(-1/k); below it the integral runs in log(y/y*), above it through
    the tail substitution.
    """
    k = 2.0 / (eta * (1.0 - eps))
    a = 1.0 + eps
    p = 2.0 / eta - 1.0
    y_star = math.exp(-math.log(z) / k)
    g_inf = math.gamma(a)

    def gam(x: float) -> float:
        return g_inf if x > 700.0 else _lower_gamma_cached(a, x)

    def lower(w: float) -> float:
        # t = e^w; the integrand behaves like t^(p+1+k*a) at the bottom and
        # like 1/t between the knee t = theta/y* and 1, both tame in w
        t = math.exp(w)
        if t == 0.0:
            return 0.0
        y = y_star * t
        return y_star ** (p + 1.0) * t ** (p + 1.0) * h(theta / (y + theta)) * gam(t**k)

    log_knee = math.log(theta) - math.log(y_star)
    if log_knee < 0.0:
        total = _quad(lower, -math.inf, log_knee, rel_tol) + _quad(lower, log_knee, 0.0, rel_tol)
    else:
        total = _quad(lower, -math.inf, 0.0, rel_tol)
    # z y^k = (y/y*)^k, taken through logs since k is huge as eps -> 1
    log_cap = math.log(700.0)
    upper_gam = lambda y: g_inf if k * math.log(y / y_star) > log_cap else gam((y / y_star) ** k)
    total += _upper_tail(upper_gam, y_star, h, theta, eta, rel_tol)
    return total


def _limit_inner(h: Callable[[float], float], theta: float, eta: float, rel_tol: float) -> float:
    """eps=1 inner integral: int_1^inf y^(2/eta-1) h(y) dy (gamma(2, .) -> indicator y>1)."""
    return _upper_tail(lambda y: 1.0, 1.0, h, theta, eta, rel_tol)


def _moment(coef: float, h: Callable[[float], float], theta: float, cfg: NetworkParams, rel_tol: float) -> float:
    """int_0^inf exp(-z - coef * z^(1-eps) * inner(z)) dz."""
    eta, eps = cfg.pathloss_exponent, cfg.power_control_epsilon
    if coef == 0.0:
        return 1.0
    if eps >= 1.0:
        return math.exp(-coef * _limit_inner(h, theta, eta, rel_tol))

    def outer(z: float) -> float:
        if z <= 0.0:
            return 1.0
        return math.exp(-z - coef * z ** (1.0 - eps) * _inner(z, h, theta, eta, eps, rel_tol))

    z_max = max(Z_MAX_FLOOR, -math.log(rel_tol * 1e-3))
    val = _quad(outer, 0.0, z_max, rel_tol, points=[1.0, 5.0])
    return min(max(val, 0.0), 1.0)


def _one_minus_pow(w: float, b: float) -> float:
    """1 - (1-w)^b, without cancellation as w -> 0."""
    if w < 0.5:
        return -math.expm1(b * math.log1p(-w))
    return 1.0 - (1.0 - w) ** b


def moment_tt(b: float, theta: float, theta_T: float, cfg: NetworkParams, T: int, rel_tol: float = 1e-8) -> float:
    """b-th moment of the TT conditional success probability at load factor ``theta_T``."""
    if b < 0:
        raise ValueError("b must be >= 0")
    if b == 0:
        # inner bracket vanishes identically; still honour the outer integral
        return _moment(0.0, lambda v: 0.0, theta, cfg, rel_tol)
    coef = 2.0 * (1.0 + theta_T) / (T * cfg.pathloss_exponent)
    return _moment(coef, lambda v: _one_minus_pow(v, b), theta, cfg, rel_tol)


def moment_et(b: float, theta: float, theta_E: float, cfg: NetworkParams, rel_tol: float = 1e-8) -> float:
    """b-th moment of the ET conditional success probability at idle probability ``theta_E``."""
    if b < 0:
        raise ValueError("b must be >= 0")
    if b == 0 or theta_E >= 1.0:
        return 1.0
    coef = 2.0 / cfg.pathloss_exponent
    # (y + theta*idle)/(y + theta) = 1 - (1-idle) v
    busy = 1.0 - theta_E
    return _moment(coef, lambda v: _one_minus_pow(busy * v, b), theta, cfg, rel_tol)


def moments_tt(theta: float, theta_T: float, cfg: NetworkParams, T: int, rel_tol: float = 1e-8) -> MomentPair:
    return MomentPair(moment_tt(1, theta, theta_T, cfg, T, rel_tol), moment_tt(2, theta, theta_T, cfg, T, rel_tol))


def moments_et(theta: float, theta_E: float, cfg: NetworkParams, rel_tol: float = 1e-8) -> MomentPair:
    return MomentPair(moment_et(1, theta, theta_E, cfg, rel_tol), moment_et(2, theta, theta_E, cfg, rel_tol))
