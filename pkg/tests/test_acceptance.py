"""Acceptance criteria 1-10. Each test prints one pass/fail line at the stated tolerance."""

import math
import time

import numpy as np
import pytest

from oracles import et_arrivals, simulate_queue_waits, truncated_qbd_stationary, tt_arrivals
from spatiotemporal_paoi.cli import main
from spatiotemporal_paoi.config import ET, TT, AnalysisParams, NetworkParams, SimParams
from spatiotemporal_paoi.geometry import moment_et, moment_tt
from spatiotemporal_paoi.meta import meta_ccdf
from spatiotemporal_paoi.paoi import analyze_et, analyze_tt, stability_frontier
from spatiotemporal_paoi.queueing import is_stable_tt, r_residual, solve_tt, waiting_dist_et, waiting_dist_tt
from spatiotemporal_paoi.simulator import measure_meta, run_many

AN = AnalysisParams()


def test_criterion_01_moment_sanity(criterion):
    start = time.perf_counter()
    grid = []
    for eps in (0.0, 0.5, 0.8, 1.0):
        for eta in (3.0, 4.0):
            grid.append(("tt", eps, eta, 4 if eta == 3.0 else 12))
            grid.append(("et", eps, eta, 0.3 if eta == 3.0 else 0.8))
    grid += [("tt", 0.3, 3.5, 2), ("et", 0.3, 3.5, 0.1), ("tt", 1.0, 2.5, 30), ("et", 1.0, 2.5, 0.5)]
    worst_one, worst_order = 0.0, -math.inf
    for kind, eps, eta, load in grid:
        cfg = NetworkParams(power_control_epsilon=eps, pathloss_exponent=eta)
        if kind == "tt":
            m = lambda b, th: moment_tt(b, th, 0.5, cfg, load)
        else:
            m = lambda b, th: moment_et(b, th, load, cfg)
        for b in (1, 2):
            worst_one = max(worst_one, abs(m(0, 1.0) - 1.0), abs(m(b, 1e-12) - 1.0))
        for th in (0.3, 1.0, 10.0):
            worst_order = max(worst_order, m(2, th) - m(1, th))
    runtime = time.perf_counter() - start
    ok = len(grid) == 20 and worst_one <= 1e-6 and worst_order <= 0 and runtime < 60
    criterion(1, ok, f"{len(grid)} grid points, max |M-1| = {worst_one:.2e} (<= 1e-6), "
                     f"max M2-M1 = {worst_order:.2e} (<= 0), {runtime:.1f} s")
    assert ok


def test_criterion_02_full_inversion_branch(criterion):
    start = time.perf_counter()
    exact_cfg = NetworkParams(power_control_epsilon=1.0)
    near_cfg = NetworkParams(power_control_epsilon=1.0 - 1e-6)
    worst = 0.0
    for th_db in np.linspace(-10, 15, 10):
        th = 10 ** (th_db / 10)
        for b in (1, 2):
            a = moment_tt(b, th, 0.4, exact_cfg, 8)
            n = moment_tt(b, th, 0.4, near_cfg, 8)
            worst = max(worst, abs(a - n) / a)
            a = moment_et(b, th, 0.6, exact_cfg)
            n = moment_et(b, th, 0.6, near_cfg)
            worst = max(worst, abs(a - n) / a)
    runtime = time.perf_counter() - start
    ok = worst <= 1e-3 and runtime < 60
    criterion(2, ok, f"10 thresholds, max rel. diff {worst:.2e} (<= 1e-3), {runtime:.1f} s")
    assert ok


def test_criterion_03_qbd_oracle(criterion):
    start = time.perf_counter()
    worst_tv, worst_res, n = 0.0, 0.0, 0
    for T in (3, 4, 8):
        for d in (0.4, 0.6, 0.9):
            if not is_stable_tt(d, T):
                continue
            model, state = solve_tt(T, d)
            n_levels = 200
            tv = 0.5 * np.abs(truncated_qbd_stationary(model, n_levels) - state.levels(n_levels)).sum()
            worst_tv = max(worst_tv, tv)
            worst_res = max(worst_res, r_residual(model, state.R))
            n += 1
    runtime = time.perf_counter() - start
    ok = worst_tv <= 1e-8 and worst_res <= 1e-12 and runtime < 60
    criterion(3, ok, f"{n} stable (T, d) cases, max TV {worst_tv:.1e} (<= 1e-8), "
                     f"max R residual {worst_res:.1e} (<= 1e-12), {runtime:.1f} s")
    assert ok


def test_criterion_04_waiting_time_oracle(criterion):
    start = time.perf_counter()
    n_slots = 10**6
    rng = np.random.default_rng(2024)
    parts, worst = [], 0.0
    for T, d in [(8, 0.5), (4, 0.4), (3, 0.9)]:
        sim = simulate_queue_waits(tt_arrivals(T, n_slots // T), d, rng).mean()
        ana = waiting_dist_tt(*reversed(solve_tt(T, d))).mean
        worst = max(worst, abs(ana - sim) / sim)
        parts.append(f"TT({T},{d}) {ana:.4f}/{sim:.4f}")
    for a, d in [(0.125, 0.5), (0.3, 0.4), (0.05, 0.9)]:
        sim = simulate_queue_waits(et_arrivals(a, n_slots, rng), d, rng).mean()
        ana = waiting_dist_et(a, d).mean
        worst = max(worst, abs(ana - sim) / sim)
        parts.append(f"ET({a},{d}) {ana:.4f}/{sim:.4f}")
    runtime = time.perf_counter() - start
    ok = worst <= 0.02 and runtime < 300
    criterion(4, ok, f"max rel. error {worst:.2%} (<= 2%), {runtime:.1f} s; " + ", ".join(parts))
    assert ok


def _ks(fit, values):
    xi = np.unique(np.concatenate([np.linspace(0, 1, 2001), values, np.nextafter(values, -np.inf)]))
    xi = xi[(xi >= 0) & (xi <= 1)]
    emp = (values[None, :] > xi[:, None]).mean(axis=1)
    return xi, np.abs(np.atleast_1d(meta_ccdf(fit, xi)) - emp)


@pytest.mark.slow
def test_criterion_05_meta_cross_validation(criterion):
    start = time.perf_counter()
    net = NetworkParams()
    sim = SimParams(n_realizations=20)
    inner = np.linspace(0.1, 0.9, 81)
    lines, ok = [], True
    curves = {"tt": [], "et": []}
    for traffic in [TT(5), TT(10), TT(15), ET(1 / 15), ET(1 / 10), ET(1 / 5)]:
        metrics = run_many(net, traffic, sim)
        measure_meta(metrics, inner)  # enforces the minimum number of attempts per device
        values = np.concatenate([m.conditional_success for m in metrics])
        if isinstance(traffic, TT):
            res = analyze_tt(net, traffic.duty_cycle, AN)
            label = f"TT T={traffic.duty_cycle}"
        else:
            res = analyze_et(net, traffic.arrival_prob, AN)
            label = f"ET a={traffic.arrival_prob:.4g}"
        xi, dist = _ks(res.solution.fit, values)
        ks = float(dist.max())
        ks_inner = float(dist[(xi >= 0.1) & (xi <= 0.9)].max())
        ok &= ks <= 0.08
        lines.append(f"{label}: KS {ks:.3f} ([0.1,0.9]: {ks_inner:.3f})")
        curves[traffic.kind].append((np.atleast_1d(meta_ccdf(res.solution.fit, inner)),
                                     measure_meta(metrics, inner)))
    # TT: longer period -> fewer interferers -> CCDF rises; ET: higher alpha -> CCDF falls
    order_ok = True
    for kind, sign in (("tt", 1), ("et", -1)):
        for which in (0, 1):
            c = [pair[which] for pair in curves[kind]]
            order_ok &= all(np.all(sign * (b - a) >= -1e-12) for a, b in zip(c, c[1:]))
    ok &= order_ok
    runtime = time.perf_counter() - start
    ok &= runtime <= 1800
    criterion(5, ok, "; ".join(lines) + f"; load ordering on [0.1,0.9] {'holds' if order_ok else 'violated'}; "
                     f"{runtime:.0f} s (KS <= 0.08)")
    assert ok


def test_criterion_06_tt_sweep(criterion):
    net0 = NetworkParams()
    p0 = {T: analyze_tt(net0, T, AN).report.overall for T in range(4, 21)}
    net5 = NetworkParams().with_theta_db(5.0)
    p5 = {T: analyze_tt(net5, T, AN).report.overall for T in range(4, 9)}
    finite0 = {T: v for T, v in p0.items() if math.isfinite(v)}
    t_min = min(finite0, key=finite0.get)
    checks = {
        "T=4 ~ 23.1": math.isfinite(p0[4]) and abs(p0[4] - 23.1) <= 0.1 * 23.1,
        "minimum near T=8": abs(t_min - 8) <= 1,
        "minimum ~ 12.15": abs(finite0[t_min] - 12.15) <= 0.1 * 12.15,
        "slope 1": abs((p0[20] - p0[16]) / 4 - 1.0) <= 0.05,
        "5 dB inf for T<=7": all(math.isinf(p5[T]) for T in range(4, 8)),
        "5 dB T=8 ~ 17.2": math.isfinite(p5[8]) and abs(p5[8] - 17.2) <= 0.1 * 17.2,
    }
    ok = all(checks.values())
    status = ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in checks.items())
    criterion(6, ok, f"{status}; 0 dB T=4 {p0[4]:.2f}, T=8 {p0[8]:.2f}, min {finite0[t_min]:.2f} at T={t_min}; "
                     f"5 dB T=8 {p5[8]:.2f}")
    assert ok


def test_criterion_07_et_sweep(criterion):
    net0 = NetworkParams()
    netm5 = NetworkParams().with_theta_db(-5.0)
    v05 = analyze_et(net0, 0.05, AN).report.overall
    finite_through = all(math.isfinite(analyze_et(net0, a, AN).report.overall)
                         for a in np.round(np.arange(0.05, 0.351, 0.05), 2))
    inf37 = math.isinf(analyze_et(net0, 0.37, AN).report.overall)
    f61 = math.isfinite(analyze_et(netm5, 0.61, AN).report.overall)
    i63 = math.isinf(analyze_et(netm5, 0.63, AN).report.overall)
    ok = abs(v05 - 21.1) <= 2.11 and finite_through and inf37 and f61 and i63
    criterion(7, ok, f"0 dB a=0.05 {v05:.3f} (21.1 +-10%), finite to 0.35: {finite_through}, inf at 0.37: {inf37}; "
                     f"-5 dB finite at 0.61: {f61}, inf at 0.63: {i63}")
    assert ok


def test_criterion_08_et_beats_tt(criterion):
    parts, ok = [], True
    for tdb in (-5.0, 0.0, 5.0):
        net = NetworkParams().with_theta_db(tdb)
        for T in (5, 10, 15):
            tt = analyze_tt(net, T, AN).report.overall
            et = analyze_et(net, 1.0 / T, AN).report.overall
            good = et <= tt
            ok &= good
            parts.append(f"({tdb:g} dB, T={T}) ET {et:.3f} {'<=' if good else '>'} TT {tt:.3f}")
    criterion(8, ok, "; ".join(parts))
    assert ok


def test_criterion_09_frontier_shape(criterion):
    net = NetworkParams()
    thetas = [-5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0]
    et = stability_frontier(net, "et", thetas, np.round(np.arange(0.01, 0.801, 0.01), 2), AN)
    tt = stability_frontier(net, "tt", thetas, list(range(3, 31)), AN)

    def series(front, n):
        return np.array([s for _, s in sorted(front.frontier[n])])

    def nonincreasing(x):
        x = np.where(np.isnan(x), -np.inf, x)
        return bool(np.all(np.diff(x) <= 0))

    def nondecreasing(x):
        x = np.where(np.isnan(x), np.inf, x)
        return bool(np.all(np.diff(x) >= 0))

    classes = sorted(et.frontier)
    et_theta = all(nonincreasing(series(et, n)) for n in classes)
    tt_theta = all(nondecreasing(series(tt, n)) for n in classes)
    et_cls = all(nondecreasing(np.array([series(et, n)[k] for n in classes])) for k in range(len(thetas)))
    tt_cls = all(nonincreasing(np.array([series(tt, n)[k] for n in classes])) for k in range(len(thetas)))
    failures = len(et.failures) + len(tt.failures)
    ok = et_theta and tt_theta and et_cls and tt_cls and failures == 0
    criterion(9, ok, f"ET alpha* nonincreasing in theta: {et_theta}, TT T* nondecreasing in theta: {tt_theta}, "
                     f"class dominance ET: {et_cls}, TT: {tt_cls}, failed grid points: {failures}")
    assert ok


def test_criterion_10_determinism(tmp_path, criterion):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[network]\ntheta_db = 0\n[traffic]\nduty_cycle = 8\n"
                   "[sim]\narea_side = 5\nseed = 11\nn_realizations = 2\nslots_after_warmup = 1500\n")
    runs = [
        ["analyze-tt", "--duty-cycle", "6,8"],
        ["analyze-et", "--alpha", "0.1,0.2"],
        ["simulate", "--duty-cycle", "8"],
        ["simulate", "--alpha", "0.125"],
        ["frontier", "--alpha", "0.1,0.3", "--theta-db", "0,5"],
    ]
    mismatches = []
    for k, argv in enumerate(runs):
        outs = []
        for rep in (0, 1):
            out = tmp_path / f"run{k}_{rep}"
            assert main(argv + ["--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out)
        files_a = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
        if files_a != files_b:
            mismatches.append(f"{argv[0]}: file sets differ")
            continue
        mismatches += [f"{argv[0]}:{f}" for f in files_a
                       if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    ok = not mismatches
    criterion(10, ok, f"{len(runs)} CLI runs repeated, byte-identical: {ok}"
                      + (f" (differ: {', '.join(mismatches)})" if mismatches else ""))
    assert ok
