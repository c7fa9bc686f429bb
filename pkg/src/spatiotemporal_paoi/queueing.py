"""Per-class queue models.

TT traffic: a PH/Geo/1 queue whose PH arrival process is a deterministic
T-slot counter, solved as a QBD with the matrix-analytic method.
ET traffic: a Geo/Geo/1 queue with closed-form geometric level law.

Slot conventions (shared with the single-queue oracles and the network
simulator): a packet generated in slot t may be transmitted in slot t, and
its waiting time counts slots in the system including the successful one,
so a packet delivered on its generation slot waits 1 slot. A packet that
finds v packets ahead therefore waits NegBin(v + 1, d) slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, SingularBoundary, TruncationFailure, Unstable

MAX_PMF_TERMS = 1_000_000


@dataclass(frozen=True)
class PhCounter:
    init: np.ndarray  # zeta, shape (T,)
    transient: np.ndarray  # S, shape (T, T)
    absorb: np.ndarray  # s, shape (T,)


@dataclass(frozen=True)
class QbdModel:
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray
    A0: np.ndarray  # up a level
    A1: np.ndarray  # same level
    A2: np.ndarray  # down a level
    d: float
    T: int


@dataclass(frozen=True)
class SteadyState:
    R: np.ndarray
    x0: np.ndarray
    x1: np.ndarray

    def level(self, i: int) -> np.ndarray:
        if i == 0:
            return self.x0
        return self.x1 @ np.linalg.matrix_power(self.R, i - 1)

    def levels(self, n_levels: int) -> np.ndarray:
        """Rows 0..n_levels-1 of the level/phase probabilities."""
        out = np.zeros((n_levels, len(self.x0)))
        out[0] = self.x0
        if n_levels > 1:
            v = self.x1.copy()
            for i in range(1, n_levels):
                out[i] = v
                v = v @ self.R
        return out

    @property
    def idle_prob(self) -> float:
        return float(self.x0.sum())

    @property
    def decay_rate(self) -> float:
        return spectral_radius(self.R)


@dataclass(frozen=True)
class WaitingDist:
    pmf: np.ndarray
    tail_mass: float
    mean: float  # exact, from the closed-form level sums

    def truncated_mean(self) -> float:
        return float(np.arange(len(self.pmf)) @ self.pmf)


@dataclass(frozen=True)
class EtSteadyState:
    stable: bool
    x0: float
    R: float
    x1: float  # P{1 packet}; x_i = x1 * R**(i-1) for i >= 1

    def level_pmf(self, n_levels: int) -> np.ndarray:
        out = np.zeros(n_levels)
        if not self.stable:
            return out
        out[0] = self.x0
        if n_levels > 1:
            out[1:] = self.x1 * self.R ** np.arange(n_levels - 1)
        return out

    @property
    def mean_level(self) -> float:
        if not self.stable:
            return math.inf
        return self.x1 / (1.0 - self.R) ** 2


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


# TT: PH/Geo/1 -----------------------------------------------------------------

def build_ph_counter(T: int) -> PhCounter:
    """Deterministic counter: phase k moves to k+1, phase T absorbs (packet arrival)."""
    if T < 2:
        raise ValueError("T must be >= 2")
    S = np.eye(T, k=1)
    s = np.ones(T) - S @ np.ones(T)
    zeta = np.zeros(T)
    zeta[0] = 1.0
    return PhCounter(zeta, S, s)


def build_qbd(T: int, d: float) -> QbdModel:
    ph = build_ph_counter(T)
    S = ph.transient
    s_zeta = np.outer(ph.absorb, ph.init)
    return QbdModel(
        B=S.copy(),
        C=s_zeta.copy(),
        E=d * S,
        A0=(1.0 - d) * s_zeta,
        A1=d * s_zeta + (1.0 - d) * S,
        A2=d * S,
        d=float(d),
        T=T,
    )


def is_stable_tt(d: float, T: int) -> bool:
    return d >= 1.0 / (T - 1)


def solve_R(model: QbdModel, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Minimal nonnegative solution of R = A0 + R A1 + R^2 A2.

    Monotone iteration R <- A0 (I - A1 - R A2)^-1 started from zero.
    """
    if not is_stable_tt(model.d, model.T):
        raise Unstable(f"d={model.d} < 1/(T-1) for T={model.T}")
    T = model.T
    I = np.eye(T)
    R = np.zeros((T, T))
    for _ in range(max_iter):
        R_new = model.A0 @ np.linalg.inv(I - model.A1 - R @ model.A2)
        if np.max(np.abs(R_new - R)) < tol:
            R = R_new
            break
        R = R_new
    else:
        raise NoConvergence(f"R iteration did not converge in {max_iter} steps (d={model.d}, T={T})")
    return np.maximum(R, 0.0)


def r_residual(model: QbdModel, R: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(R - (model.A0 + R @ model.A1 + R @ R @ model.A2)), axis=1)))


def solve_boundary(model: QbdModel, R: np.ndarray) -> SteadyState:
    """Boundary vectors from [x0 x1] = [x0 x1] [[B, C], [E, A1 + R A2]] plus normalisation."""
    T = model.T
    I = np.eye(T)
    M = np.block([[model.B, model.C], [model.E, model.A1 + R @ model.A2]])
    norm = np.concatenate([np.ones(T), np.linalg.solve(I - R, np.ones(T))])
    A = np.vstack([(M - np.eye(2 * T)).T, norm[None, :]])
    rhs = np.zeros(2 * T + 1)
    rhs[-1] = 1.0
    sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < 2 * T:
        raise SingularBoundary(f"boundary system rank {rank} < {2 * T}")
    if np.max(np.abs(A @ sol - rhs)) > 1e-10:
        raise SingularBoundary("boundary system residual exceeds 1e-10")
    sol = np.where(np.abs(sol) < 1e-15, 0.0, sol)
    return SteadyState(R, sol[:T], sol[T:])


def solve_tt(T: int, d: float) -> tuple[QbdModel, SteadyState]:
    model = build_qbd(T, d)
    R = solve_R(model)
    return model, solve_boundary(model, R)


def _nb_mixture_pmf(found: np.ndarray, d: float, tail: float, exact_mean: float) -> WaitingDist:
    """P{W=m} = sum_v found[v] C(m-1, v) d^(v+1) (1-d)^(m-v-1) for m >= 1, P{W=0} = 0.

    ``found[v]`` is the probability of finding v packets ahead; the packet
    needs v + 1 successful slots. Evaluated by propagating the number of
    packets still to clear (own one included) one slot at a time.
    """
    pmf = [0.0]
    left = np.asarray(found, dtype=float).copy()  # left[j] = P{j+1 packets to clear}
    cum = 0.0
    total = float(np.sum(found))
    for _ in range(MAX_PMF_TERMS):
        if cum >= total - tail or left.size == 0:
            break
        done = d * left[0]
        pmf.append(done)
        cum += done
        nxt = (1.0 - d) * left
        nxt[:-1] += d * left[1:]
        left = nxt
    else:
        raise TruncationFailure(f"tail target {tail} not reached in {MAX_PMF_TERMS} terms")
    pmf_arr = np.asarray(pmf)
    return WaitingDist(pmf_arr, max(0.0, 1.0 - float(pmf_arr.sum())), exact_mean)


def arrival_law_tt(state: SteadyState, model: QbdModel, tail: float) -> np.ndarray:
    """Law of the number of packets an arriving packet finds (after a same-slot departure).

    q_0 ~ x_{0,T} + d x_{1,T};  q_l ~ (1-d) x_{l,T} + d x_{l+1,T}, scaled by
    sigma = zeta (I-S)^-1 1 = T (the arrival phase has stationary mass 1/T),
    then renormalised.
    """
    d, T = model.d, model.T
    r = state.decay_rate
    n_levels = 2
    if r > 0:
        n_levels = max(2, int(math.ceil(math.log(tail * 1e-4 * (1 - r)) / math.log(r))) + 3)
    xs = state.levels(n_levels + 1)[:, T - 1]  # arrival-phase column
    q = np.empty(n_levels)
    q[0] = xs[0] + d * xs[1]
    q[1:] = (1.0 - d) * xs[1:n_levels] + d * xs[2 : n_levels + 1]
    sigma = T  # zeta (I - S)^-1 1 for the deterministic counter
    q *= sigma
    total = q.sum()
    return q / total


def waiting_dist_tt(state: SteadyState, model: QbdModel, tail: float = 1e-8) -> WaitingDist:
    d, T = model.d, model.T
    q = arrival_law_tt(state, model, tail)
    # exact mean from closed-form sums: sum_v v q_v = [S1 - d S0]_T / sum_v q_v
    I = np.eye(T)
    inv = np.linalg.inv(I - state.R)
    S0 = state.x1 @ inv
    S1 = state.x1 @ inv @ inv
    mass = state.x0[T - 1] + S0[T - 1]  # stationary mass of the arrival phase (= 1/T)
    mean_found = (S1[T - 1] - d * S0[T - 1]) / mass
    return _nb_mixture_pmf(q, d, tail, (mean_found + 1.0) / d)


# ET: Geo/Geo/1 ---------------------------------------------------------------

def steady_state_et(alpha: float, d: float) -> EtSteadyState:
    """x0 = (d-a)/d, R = a(1-d)/((1-a)d), x_i = R^i x0/(1-d) (written to survive d=1)."""
    if not alpha < d:
        return EtSteadyState(False, 0.0, math.nan, 0.0)
    x0 = (d - alpha) / d
    R = alpha * (1.0 - d) / ((1.0 - alpha) * d)
    x1 = x0 * alpha / ((1.0 - alpha) * d)
    return EtSteadyState(True, x0, R, x1)


def arrival_law_et(alpha: float, d: float, tail: float) -> np.ndarray:
    """Packets found by an arrival: the end-of-slot level law after this slot's departure.

    q_0 = x_0 + d x_1,  q_v = (1-d) x_v + d x_{v+1}; same form as the TT law
    with every slot an arrival slot.
    """
    st = steady_state_et(alpha, d)
    if not st.stable:
        raise Unstable(f"alpha={alpha} >= d={d}")
    n_levels = 2
    if st.R > 0:
        n_levels = max(2, int(math.ceil(math.log(tail * 1e-4 * (1 - st.R)) / math.log(st.R))) + 3)
    x = st.level_pmf(n_levels + 1)
    q = np.empty(n_levels)
    q[0] = x[0] + d * x[1]
    q[1:] = (1.0 - d) * x[1:n_levels] + d * x[2 : n_levels + 1]
    return q / q.sum()


def waiting_dist_et(alpha: float, d: float, tail: float = 1e-8) -> WaitingDist:
    st = steady_state_et(alpha, d)
    q = arrival_law_et(alpha, d, tail)
    # E[found] = E[L] - d (1 - x0) = E[L] - alpha
    return _nb_mixture_pmf(q, d, tail, (st.mean_level - alpha + 1.0) / d)
