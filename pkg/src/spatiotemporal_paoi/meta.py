"""Beta approximation of the meta distribution and its quantisation into QoS classes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import BisectionFailure, DegenerateVariance
from .geometry import MomentPair

DEGENERATE_TOL = 1e-12
MIN_SHAPE = 1e-8
BISECT_ITERS = 200
BISECT_TOL = 1e-10


@dataclass(frozen=True)
class BetaFit:
    shape_a: float
    shape_b: float

    @property
    def mean(self) -> float:
        return self.shape_a / (self.shape_a + self.shape_b)

    @property
    def second_moment(self) -> float:
        a, b = self.shape_a, self.shape_b
        return a * (a + 1) / ((a + b) * (a + b + 1))

    def cdf(self, x):
        return special.betainc(self.shape_a, self.shape_b, np.clip(x, 0.0, 1.0))


@dataclass(frozen=True)
class PointMass:
    """Zero-variance stand-in for a beta fit."""

    at: float

    @property
    def mean(self) -> float:
        return self.at

    def cdf(self, x):
        return np.where(np.asarray(x) >= self.at, 1.0, 0.0)


@dataclass
class QosClasses:
    departure_probs: np.ndarray
    edges: np.ndarray
    stable_mask: np.ndarray | None = field(default=None)

    @property
    def n(self) -> int:
        return len(self.departure_probs)


def fit_beta(m: MomentPair) -> BetaFit:
    """Moment-matched beta: a = M1*Mh/var, b = (1-M1)*Mh/var with Mh = M1 - M2."""
    m1, m2 = m.m1, m.m2
    var = m2 - m1 * m1
    if var <= DEGENERATE_TOL:
        raise DegenerateVariance(m1, var)
    m_hat = m1 - m2
    a = m1 * m_hat / var
    b = (1.0 - m1) * m_hat / var
    if a < MIN_SHAPE or b < MIN_SHAPE:
        raise DegenerateVariance(m1, var)
    return BetaFit(a, b)


def fit_or_point_mass(m: MomentPair) -> BetaFit | PointMass:
    try:
        return fit_beta(m)
    except DegenerateVariance as exc:
        return PointMass(min(max(exc.mean, 0.0), 1.0))


def meta_ccdf(fit: BetaFit | PointMass, xi):
    """Fraction of links whose success probability exceeds ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if isinstance(fit, PointMass):
        out = np.where(xi < fit.at, 1.0, 0.0)
    else:
        out = special.betaincc(fit.shape_a, fit.shape_b, np.clip(xi, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def _bisect(cdf, target: float, lo: float, hi: float) -> float:
    f_lo = float(cdf(lo)) - target
    f_hi = float(cdf(hi)) - target
    if f_lo > BISECT_TOL or f_hi < -BISECT_TOL:
        raise BisectionFailure(f"target {target} not bracketed by [{lo}, {hi}]")
    mid = 0.5 * (lo + hi)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        f_mid = float(cdf(mid)) - target
        if abs(f_mid) < BISECT_TOL or hi - lo < 1e-300:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return mid


def _quantile(fit: BetaFit, p: float) -> float:
    """Bisection quantile. Upper-half targets are solved for 1 - x through the
    complementary function, which keeps a bracket when the mass sits within
    machine precision of 1 (tiny second shape)."""
    if p <= 0.5:
        return _bisect(fit.cdf, p, 0.0, 1.0)
    upper = lambda y: special.betainc(fit.shape_b, fit.shape_a, y)  # P{1 - X <= y}
    return 1.0 - _bisect(upper, 1.0 - p, 0.0, 1.0)


def quantize(fit: BetaFit | PointMass, n_classes: int) -> QosClasses:
    """Split the fitted distribution into ``n_classes`` equiprobable cells.

    Cell edges are the n/N quantiles; each class representative d_n is the
    median of its cell, i.e. the (n - 1/2)/N quantile.
    """
    if isinstance(fit, PointMass):
        d = np.full(n_classes, fit.at)
        edges = np.concatenate([[0.0], np.full(n_classes - 1, fit.at), [1.0]])
        return QosClasses(d, edges)

    edges = np.empty(n_classes + 1)
    edges[0], edges[-1] = 0.0, 1.0
    d = np.array([_quantile(fit, (n + 0.5) / n_classes) for n in range(n_classes)])
    for n in range(1, n_classes):
        edges[n] = _quantile(fit, n / n_classes)
    return QosClasses(d, edges)
