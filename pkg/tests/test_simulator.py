import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from spatiotemporal_paoi.config import ET, TT, NetworkParams, SimParams
from spatiotemporal_paoi.errors import InsufficientSamples, WarmupTimeout
from spatiotemporal_paoi.simulator import (measure_meta, measure_paoi, raw_rows, realization_seed, run, run_many,
                                           sample_realization, torus_delta, torus_dist)

SMALL = SimParams(area_side=4.0, seed=3, n_realizations=2, warmup_slots=100, slots_after_warmup=600)


def test_torus_distance():
    side = 10.0
    a = np.array([[0.5, 0.5]])
    b = np.array([[9.5, 9.5]])
    assert torus_dist(a, b, side)[0] == pytest.approx(math.sqrt(2))
    assert np.allclose(torus_delta(a, b, side), [[1.0, 1.0]])
    assert np.allclose(torus_delta(a, b, side), torus_delta(b, a, side))
    rng = np.random.default_rng(0)
    p, q = rng.uniform(0, side, (500, 2)), rng.uniform(0, side, (500, 2))
    d = torus_dist(p, q, side)
    assert np.allclose(d, torus_dist(q, p, side))
    assert d.max() <= side / math.sqrt(2) + 1e-12
    shift = np.array([3.3, -7.1])
    assert np.allclose(d, torus_dist((p + shift) % side, (q + shift) % side, side))


def test_bs_count_is_poisson():
    counts = [sample_realization(NetworkParams(), SimParams(), realization_seed(99, i)).n for i in range(200)]
    assert np.mean(counts) == pytest.approx(100.0, abs=3.0)
    assert np.var(counts) == pytest.approx(100.0, rel=0.35)


def test_devices_sit_in_their_own_cell():
    side = 10.0
    real = sample_realization(NetworkParams(), SimParams(area_side=side), 5)
    tree = cKDTree(real.bs_positions, boxsize=side)
    _, nearest = tree.query(real.device_positions)
    assert np.array_equal(nearest, np.arange(real.n))
    assert np.allclose(real.serving_distance,
                       torus_dist(real.device_positions, real.bs_positions, side))


def test_full_inversion_received_power():
    net = NetworkParams(power_control_rho=2.5)
    real = sample_realization(net, SimParams(), 8)
    received = real.tx_power * real.serving_distance ** (-net.pathloss_exponent)
    assert np.allclose(received, 2.5, rtol=1e-12)


def test_offsets_drawn_for_tt():
    real = sample_realization(NetworkParams(), SimParams(), 4, duty_cycle=7)
    assert real.offsets.min() >= 0 and real.offsets.max() < 7
    assert sample_realization(NetworkParams(), SimParams(), 4).offsets is None


def test_no_interference_limit():
    net = NetworkParams().with_theta_db(-120.0)
    real = sample_realization(net, SMALL, 11, duty_cycle=6)
    m = run(real, TT(6), net, SMALL, seed=1)
    assert set(m.waits) == {1}
    assert np.all(m.peak_sum[m.n_peak > 0] / m.n_peak[m.n_peak > 0] == 7.0)
    # each device is active only on its own offset slot
    per_slot = np.bincount(real.offsets, minlength=6) / real.n
    assert np.allclose(np.unique(np.round(1 - m.idle_fraction, 12)), np.unique(np.round(per_slot, 12)))


def test_single_cell_network():
    net = NetworkParams().with_theta_db(20.0)
    real = sample_realization(net, SMALL, 2, bs_positions=[[2.0, 2.0]])
    assert real.n == 1
    m = run(real, ET(0.3), net, SMALL, seed=4)
    assert set(m.waits) == {1}
    assert m.conditional_success[0] == 1.0 and m.success_ratio[0] == 1.0


def test_conditional_estimator_tracks_success_ratio():
    net = NetworkParams()
    sim = SimParams(area_side=5.0, seed=2, n_realizations=1, warmup_slots=100, slots_after_warmup=3000)
    m = run_many(net, TT(4), sim)[0]
    diff = m.success_ratio - m.conditional_success
    se = np.sqrt(m.conditional_success * (1 - m.conditional_success) / m.attempts)
    assert np.all(np.abs(diff) <= 5 * se + 1e-9)


def test_meta_ccdf_properties():
    metrics = run_many(NetworkParams(), ET(0.2), SMALL)
    xi = np.linspace(0, 1, 21)
    for est in ("conditional", "ratio"):
        y = measure_meta(metrics, xi, min_attempts=1, estimator=est)
        assert np.all((0 <= y) & (y <= 1))
        assert np.all(np.diff(y) <= 0)
        assert y[-1] == 0.0
    with pytest.raises(InsufficientSamples):
        measure_meta(metrics, xi, min_attempts=10**9)
    with pytest.raises(ValueError):
        measure_meta(metrics, xi, min_attempts=1, estimator="other")


def test_peak_age_measurement():
    metrics = run_many(NetworkParams(), ET(0.2), SMALL)
    emp = measure_paoi(metrics, n_bins=2, min_samples=10)
    assert emp.inter_arrival_mean == 5.0
    assert emp.overall > emp.inter_arrival_mean
    assert emp.mean_wait >= 1.0
    with pytest.raises(InsufficientSamples):
        measure_paoi(metrics, n_bins=2, min_samples=10**9)
    rows = raw_rows(metrics[0])
    assert len(rows) == len(metrics[0].attempts) and rows[0][0] == "0"


def test_runs_are_reproducible():
    a = run_many(NetworkParams(), TT(5), SMALL)
    b = run_many(NetworkParams(), TT(5), SMALL)
    for x, y in zip(a, b):
        assert np.array_equal(x.successes, y.successes)
        assert x.waits == y.waits and x.warmup_slots == y.warmup_slots
    c = run_many(NetworkParams(), TT(5), SimParams(**{**SMALL.__dict__, "seed": 4}))
    assert not np.array_equal(a[0].successes, c[0].successes)


def test_warmup_timeout():
    sim = SimParams(area_side=4.0, warmup_slots=100, max_slots=120, slots_after_warmup=10)
    real = sample_realization(NetworkParams(), sim, 1)
    with pytest.raises(WarmupTimeout):
        run(real, ET(0.2), NetworkParams(), sim, phi=0.0)
