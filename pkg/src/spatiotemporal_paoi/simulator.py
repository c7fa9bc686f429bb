"""Slot-level Monte Carlo of the uplink network with queue-coupled interference.

One realization: a toroidal PPP of base stations, one device dropped
uniformly in each Voronoi cell, fractional power control. Every slot, new
packets join the device queues, every device with a non-empty queue
transmits its head-of-line packet, and the packet leaves iff its SIR at the
serving BS exceeds the threshold. Fading is redrawn i.i.d. every slot.

Waiting time counts slots in the system including the successful one, so a
packet delivered in its generation slot waits 1 slot.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import ET, TT, NetworkParams, SimParams, TrafficModel
from .errors import DegenerateRealization, InsufficientSamples, WarmupTimeout

log = logging.getLogger(__name__)

WARMUP_WINDOW = 50
MIN_ATTEMPTS = 200
MIN_PEAK_SAMPLES = 100
PLACEMENT_BATCH = 4096


@dataclass(frozen=True)
class Realization:
    side: float
    bs_positions: np.ndarray  # (n, 2)
    device_positions: np.ndarray  # (n, 2); device i is served by BS i
    serving_distance: np.ndarray  # (n,)
    tx_power: np.ndarray  # (n,)
    offsets: np.ndarray | None = None  # TT arrival offsets in {0..T-1}

    @property
    def n(self) -> int:
        return len(self.bs_positions)


@dataclass
class DeviceState:
    """FCFS queue of generation slots."""

    stamps: deque = field(default_factory=deque)

    @property
    def queue_len(self) -> int:
        return len(self.stamps)

    @property
    def head_arrival_slot(self) -> int | None:
        return self.stamps[0] if self.stamps else None


@dataclass
class SlotMetrics:
    attempts: np.ndarray
    successes: np.ndarray
    cond_success_sum: np.ndarray  # sum over attempts of P{success | active set}
    wait_sum: np.ndarray
    peak_sum: np.ndarray
    n_delivered: np.ndarray
    n_peak: np.ndarray
    waits: list[int]
    idle_fraction: np.ndarray  # per post-warm-up slot
    warmup_slots: int
    serving_distance: np.ndarray
    inter_arrival_mean: float

    @property
    def success_ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempts > 0, self.successes / np.maximum(self.attempts, 1), np.nan)

    @property
    def conditional_success(self) -> np.ndarray:
        """Per-device success probability with the fading averaged out exactly.

        Same target as ``success_ratio`` but without the binomial noise of
        counting successes.
        """
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempts > 0, self.cond_success_sum / np.maximum(self.attempts, 1), np.nan)


def torus_delta(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    d = np.abs(a - b)
    return np.minimum(d, side - d)


def torus_dist(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    return np.hypot(*np.moveaxis(torus_delta(a, b, side), -1, 0))


def realization_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(index)])


def _place_devices(bs: np.ndarray, side: float, rng: np.random.Generator) -> np.ndarray:
    """First uniform torus point whose nearest BS is the target, for every BS."""
    tree = cKDTree(bs, boxsize=side)
    out = np.full(bs.shape, np.nan)
    missing = np.ones(len(bs), dtype=bool)
    while missing.any():
        pts = rng.uniform(0.0, side, size=(PLACEMENT_BATCH, 2))
        _, owner = tree.query(pts)
        # first occurrence of each owner in this batch
        owners, first = np.unique(owner, return_index=True)
        take = missing[owners]
        out[owners[take]] = pts[first[take]]
        missing[owners[take]] = False
    return out


def sample_realization(net: NetworkParams, sim: SimParams, seed, duty_cycle: int | None = None,
                       bs_positions: np.ndarray | None = None) -> Realization:
    """Draw BSs, one device per cell, powers and (TT) offsets.

    ``bs_positions`` overrides the PPP draw (e.g. a single-BS network).
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    side = sim.area_side
    attempt = 0
    while True:
        rng = np.random.default_rng(ss.spawn(1)[0] if attempt else ss)
        if bs_positions is not None:
            bs = np.asarray(bs_positions, dtype=float).reshape(-1, 2)
            break
        n = rng.poisson(net.bs_intensity * side * side)
        if n >= 2:
            bs = rng.uniform(0.0, side, size=(n, 2))
            break
        attempt += 1
        log.warning("%s", DegenerateRealization(f"PPP draw gave {n} BSs; resampling (attempt {attempt})"))
    dev = _place_devices(bs, side, rng)
    r = torus_dist(dev, bs, side)
    power = net.power_control_rho * r ** (net.pathloss_exponent * net.power_control_epsilon)
    offsets = rng.integers(0, duty_cycle, size=len(bs)) if duty_cycle else None
    return Realization(side, bs, dev, r, power, offsets)


def _gain_matrix(real: Realization, eta: float) -> np.ndarray:
    """G[i, o] = P_i * dist(x_i, b_o)^-eta with the diagonal zeroed."""
    d = torus_dist(real.device_positions[:, None, :], real.bs_positions[None, :, :], real.side)
    with np.errstate(divide="ignore"):
        G = real.tx_power[:, None] * d ** (-eta)
    np.fill_diagonal(G, 0.0)
    return G


def run(real: Realization, traffic: TrafficModel, net: NetworkParams, sim: SimParams,
        phi: float = 1e-4, seed=0) -> SlotMetrics:
    """Simulate until warm-up converges, then collect ``sim.slots_after_warmup`` slots.

    Warm-up: the network idle fraction is averaged over consecutive windows of
    50 slots; the running mean of those window averages is compared between
    consecutive windows and warm-up ends once it moves by less than ``phi``
    (and at least ``sim.warmup_slots`` have elapsed).
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    n = real.n
    eta, eps = net.pathloss_exponent, net.power_control_epsilon
    G = _gain_matrix(real, eta)
    signal_scale = net.power_control_rho * real.serving_distance ** (eta * (eps - 1.0))
    theta = net.sir_threshold
    if isinstance(traffic, TT):
        T = traffic.duty_cycle
        offsets = real.offsets if real.offsets is not None else rng.integers(0, T, size=n)
        inter_arrival = float(T)
    else:
        alpha = traffic.arrival_prob
        inter_arrival = 1.0 / alpha

    queues = [deque() for _ in range(n)]
    last_gen = np.full(n, -1, dtype=np.int64)  # generation slot of last delivered packet
    attempts = np.zeros(n, dtype=np.int64)
    successes = np.zeros(n, dtype=np.int64)
    cond_sum = np.zeros(n)
    wait_sum = np.zeros(n)
    peak_sum = np.zeros(n)
    n_deliv = np.zeros(n, dtype=np.int64)
    n_peak = np.zeros(n, dtype=np.int64)
    waits: list[int] = []
    idle_post: list[float] = []

    warm = True
    warm_end = 0
    win_sum = 0.0
    win_count = 0
    run_mean_prev = None
    n_windows = 0
    run_total = 0.0
    t = 0
    collected = 0
    while True:
        if warm and t >= sim.max_slots:
            raise WarmupTimeout(f"warm-up not converged within {sim.max_slots} slots")
        if not warm and collected >= sim.slots_after_warmup:
            break
        if isinstance(traffic, TT):
            for i in np.flatnonzero(offsets == t % T):
                queues[i].append(t)
        else:
            for i in np.flatnonzero(rng.random(n) < alpha):
                queues[i].append(t)
        active = np.fromiter((len(q) > 0 for q in queues), dtype=bool, count=n)
        idx = np.flatnonzero(active)
        idle = 1.0 - idx.size / n
        if idx.size:
            k = idx.size
            h = rng.exponential(size=k)
            g = rng.exponential(size=(k, k))
            Gs = G[np.ix_(idx, idx)]
            interf = np.einsum("io,io->o", Gs, g)
            with np.errstate(divide="ignore"):
                sir = signal_scale[idx] * h / interf
            ok = sir > theta
            if not warm:
                attempts[idx] += 1
                successes[idx[ok]] += 1
                # Rayleigh h: P{h S > theta I | active set} = prod_i 1 / (1 + theta G_io / S)
                cond_sum[idx] += np.exp(-np.log1p(theta * Gs / signal_scale[idx][None, :]).sum(axis=0))
            for i in idx[ok]:
                gen = queues[i].popleft()
                if not warm:
                    w = t - gen + 1
                    waits.append(w)
                    wait_sum[i] += w
                    n_deliv[i] += 1
                    if last_gen[i] >= 0:
                        peak_sum[i] += t + 1 - last_gen[i]
                        n_peak[i] += 1
                last_gen[i] = gen
        if warm:
            win_sum += idle
            win_count += 1
            if win_count == WARMUP_WINDOW:
                n_windows += 1
                run_total += win_sum / WARMUP_WINDOW
                run_mean = run_total / n_windows
                if (run_mean_prev is not None and abs(run_mean - run_mean_prev) < phi
                        and t + 1 >= sim.warmup_slots):
                    warm = False
                    warm_end = t + 1
                run_mean_prev = run_mean
                win_sum, win_count = 0.0, 0
        else:
            idle_post.append(idle)
            collected += 1
        t += 1

    return SlotMetrics(attempts, successes, cond_sum, wait_sum, peak_sum, n_deliv, n_peak, waits,
                       np.asarray(idle_post), warm_end, real.serving_distance.copy(), inter_arrival)


def _one(args):
    net, traffic, sim, phi, master, index = args
    ss = realization_seed(master, index)
    place_ss, run_ss = ss.spawn(2)
    T = traffic.duty_cycle if isinstance(traffic, TT) else None
    real = sample_realization(net, sim, place_ss, T)
    return run(real, traffic, net, sim, phi, run_ss)


def run_many(net: NetworkParams, traffic: TrafficModel, sim: SimParams, phi: float = 1e-4,
             workers: int = 1) -> list[SlotMetrics]:
    """All realizations, each on its own seed substream; results in index order."""
    jobs = [(net, traffic, sim, phi, sim.seed, i) for i in range(sim.n_realizations)]
    if workers <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))


def _pool(metrics) -> list[SlotMetrics]:
    return [metrics] if isinstance(metrics, SlotMetrics) else list(metrics)


def measure_meta(metrics, xi, min_attempts: int = MIN_ATTEMPTS, estimator: str = "conditional") -> np.ndarray:
    """Empirical meta CCDF: fraction of devices whose success probability exceeds each xi.

    ``estimator="ratio"`` uses raw success counts; ``"conditional"`` (default)
    uses the fading-averaged per-attempt success probability.
    """
    ms = _pool(metrics)
    att = np.concatenate([m.attempts for m in ms])
    if att.size == 0 or att.min() < min_attempts:
        raise InsufficientSamples(f"a device has {int(att.min()) if att.size else 0} attempts (< {min_attempts})")
    if estimator not in ("ratio", "conditional"):
        raise ValueError(f"unknown estimator {estimator!r}")
    attr = "success_ratio" if estimator == "ratio" else "conditional_success"
    ratio = np.concatenate([getattr(m, attr) for m in ms])
    xi = np.asarray(xi, dtype=float)
    return (ratio[None, :] > xi.reshape(-1, 1)).mean(axis=1).reshape(xi.shape)


@dataclass(frozen=True)
class EmpiricalPaoi:
    overall: float
    mean_wait: float
    inter_arrival_mean: float
    per_decile: tuple[float, ...]
    per_decile_wait: tuple[float, ...]


def measure_paoi(metrics, n_bins: int = 10, min_samples: int = MIN_PEAK_SAMPLES) -> EmpiricalPaoi:
    """Spatially averaged mean peak age, plus a breakdown over success-ratio bins.

    Devices are sorted by empirical success ratio and split into ``n_bins``
    equal-count bins (lowest ratio first, like the class index).
    """
    ms = _pool(metrics)
    peak = np.concatenate([m.peak_sum for m in ms])
    n_peak = np.concatenate([m.n_peak for m in ms])
    wsum = np.concatenate([m.wait_sum for m in ms])
    n_del = np.concatenate([m.n_delivered for m in ms])
    ratio = np.concatenate([m.success_ratio for m in ms])
    use = n_peak > 0
    if not use.any():
        raise InsufficientSamples("no peak-age samples")
    dev_peak = peak[use] / n_peak[use]
    dev_wait = wsum[use] / n_del[use]
    order = np.argsort(ratio[use], kind="stable")
    bins = np.array_split(order, n_bins)
    per_bin, per_bin_wait = [], []
    for b in bins:
        if n_peak[use][b].sum() < min_samples:
            raise InsufficientSamples(f"bin holds {int(n_peak[use][b].sum())} peak-age samples (< {min_samples})")
        per_bin.append(float(dev_peak[b].mean()))
        per_bin_wait.append(float(dev_wait[b].mean()))
    return EmpiricalPaoi(float(dev_peak.mean()), float(dev_wait.mean()), ms[0].inter_arrival_mean,
                         tuple(per_bin), tuple(per_bin_wait))


RAW_HEADER = ["device_id", "r_o", "success_ratio", "mean_wait", "mean_peak_age", "n_samples"]


def raw_rows(m: SlotMetrics) -> list[list[str]]:
    rows = []
    for i in range(len(m.attempts)):
        sr = m.successes[i] / m.attempts[i] if m.attempts[i] else math.nan
        mw = m.wait_sum[i] / m.n_delivered[i] if m.n_delivered[i] else math.nan
        mp = m.peak_sum[i] / m.n_peak[i] if m.n_peak[i] else math.nan
        rows.append([str(i), repr(float(m.serving_distance[i])), repr(float(sr)), repr(float(mw)),
                     repr(float(mp)), str(int(m.n_peak[i]))])
    return rows


def write_raw(path, m: SlotMetrics, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        w.writerows(raw_rows(m))
