"""Self-consistent coupling of interference (moments, QoS classes) and queue activity."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import AnalysisParams, NetworkParams
from .errors import NonConvergence
from .geometry import MomentPair, moments_et, moments_tt
from .meta import BetaFit, PointMass, QosClasses, fit_or_point_mass, quantize
from .queueing import is_stable_tt, steady_state_et

log = logging.getLogger(__name__)

DAMPING = 0.5


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    theta: float
    m1: float
    m2: float
    n_unstable: int


@dataclass
class CoupledSolution:
    theta: float
    moments: MomentPair
    fit: BetaFit | PointMass
    classes: QosClasses
    per_class_idle: np.ndarray
    iterations: int
    converged: bool
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def n_unstable(self) -> int:
        return int(np.sum(~self.classes.stable_mask))


def theta_tt(classes: QosClasses, T: int) -> float:
    """Aggregate fraction of other-offset devices active in a slot.

    Unstable classes interfere in every one of the T-1 foreign slots; a stable
    class with departure probability d is still active tau slots after its
    arrival with probability (1-d)^tau.
    """
    d = np.asarray(classes.departure_probs, dtype=float)
    stable = np.array([is_stable_tt(x, T) for x in d], dtype=bool)
    n_unstable = int(np.sum(~stable))
    taus = np.arange(1, T)
    stable_part = np.sum((1.0 - d[stable, None]) ** taus[None, :], axis=0)
    value = np.sum(n_unstable + stable_part) / len(d)
    return float(np.clip(value, 0.0, T - 1))


def theta_et(per_class_idle) -> float:
    idle = np.asarray(per_class_idle, dtype=float)
    return float(np.clip(idle.mean(), 0.0, 1.0))


def idle_probs_et(alpha: float, d) -> np.ndarray:
    """Per-class idle probability, pinned to zero for classes with alpha >= d."""
    return np.array([steady_state_et(alpha, float(x)).x0 for x in d])


def _iterate(step, theta0: float, lo: float, hi: float, analysis: AnalysisParams, what: str):
    """Damped fixed-point iteration on theta -> step(theta).

    The damping factor halves after two consecutive sign flips of the
    increment. When the increment keeps its sign for three iterations (slow
    monotone creep, map slope near one), a secant step on g(theta) - theta is
    tried; it must move the way the increment points and is kept only if it
    shrinks the residual.
    """
    theta = theta0
    beta = DAMPING
    trace: list[TraceRow] = []
    prev_incr = 0.0
    prev_theta = None
    flips = 0
    same_sign = 0
    cache: dict[float, tuple[float, tuple]] = {}

    def evaluate(x: float):
        if x not in cache:
            cache.clear()
            cache[x] = step(x)
        return cache[x]

    for k in range(1, analysis.max_iters + 1):
        new_theta, state = evaluate(theta)
        trace.append(TraceRow(k, theta, state[0].m1, state[0].m2, state[3]))
        incr = new_theta - theta
        if abs(incr) < analysis.fixed_point_tol:
            return new_theta, state, k, True, trace
        if prev_incr * incr < 0:
            flips += 1
            same_sign = 0
            if flips >= 2:
                beta *= 0.5
                flips = 0
        else:
            flips = 0
            same_sign += 1
        candidate = float(np.clip(theta + beta * incr, lo, hi))
        if same_sign >= 3 and prev_theta is not None and incr != prev_incr:
            secant = float(np.clip(theta - incr * (theta - prev_theta) / (incr - prev_incr), lo, hi))
            if (secant - theta) * incr > 0:
                sec_new, _ = evaluate(secant)
                if abs(sec_new - secant) < abs(incr):
                    candidate = secant
                    same_sign = 0
        prev_incr, prev_theta = incr, theta
        theta = candidate
    raise NonConvergence(f"{what} fixed point not converged after {analysis.max_iters} iterations "
                         f"(last theta={theta:.6g}, damping={beta:.3g})")


def solve_coupled_tt(cfg: NetworkParams, T: int, analysis: AnalysisParams, theta0: float = 0.0) -> CoupledSolution:
    theta = cfg.sir_threshold
    N = analysis.n_classes

    def step(theta_T: float):
        m = moments_tt(theta, theta_T, cfg, T, analysis.quad_rel_tol)
        fit = fit_or_point_mass(m)
        classes = quantize(fit, N)
        classes.stable_mask = np.array([is_stable_tt(x, T) for x in classes.departure_probs])
        n_unstable = int(np.sum(~classes.stable_mask))
        return theta_tt(classes, T), (m, fit, classes, n_unstable)

    value, (m, fit, classes, _), k, ok, trace = _iterate(step, theta0, 0.0, T - 1.0, analysis, "TT")
    taus = np.arange(1, T)
    d = classes.departure_probs
    activity = np.where(classes.stable_mask, np.sum((1.0 - d[:, None]) ** taus[None, :], axis=1), T - 1.0)
    return CoupledSolution(value, m, fit, classes, activity, k, ok, trace)


def solve_coupled_et(cfg: NetworkParams, alpha: float, analysis: AnalysisParams, theta0: float = 1.0) -> CoupledSolution:
    theta = cfg.sir_threshold
    N = analysis.n_classes

    def step(theta_E: float):
        m = moments_et(theta, theta_E, cfg, analysis.quad_rel_tol)
        fit = fit_or_point_mass(m)
        classes = quantize(fit, N)
        classes.stable_mask = np.array([alpha < x for x in classes.departure_probs])
        idle = idle_probs_et(alpha, classes.departure_probs)
        return theta_et(idle), (m, fit, classes, int(np.sum(~classes.stable_mask)), idle)

    value, (m, fit, classes, _, idle), k, ok, trace = _iterate(step, theta0, 0.0, 1.0, analysis, "ET")
    return CoupledSolution(value, m, fit, classes, idle, k, ok, trace)
