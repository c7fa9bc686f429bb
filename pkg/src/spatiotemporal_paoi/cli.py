"""Command-line runner: analytical solves, simulations, comparisons and frontiers.

Exit codes: 0 success, 1 error (bad input or a failed solve), 2 a comparison
outside its tolerance. Output files are only written once every computation
of a run has finished, so a failing run leaves no partial files.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import ET, TT, Config, load_config, validate
from .errors import PaoiError
from .meta import meta_ccdf
from .paoi import (FRONTIER_HEADER, PAOI_HEADER, analyze, fmt_float, frontier_rows, paoi_rows,
                   stability_frontier, write_csv)
from .simulator import RAW_HEADER, measure_meta, measure_paoi, raw_rows, run_many

log = logging.getLogger("spatiotemporal_paoi")

MODES = ("analyze-tt", "analyze-et", "simulate", "compare", "frontier")
XI_GRID = np.linspace(0.0, 1.0, 101)
KS_TOL = 0.08
PAOI_REL_TOL = 0.10


class UsageError(PaoiError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    config: Config
    out: Path
    theta_db: tuple[float, ...]
    loads: tuple[float, ...]
    traffic: str


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(not v.is_integer() for v in vals):
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}")
    return [int(v) for v in vals]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="paoi", description="Spatiotemporal peak-AoI analysis and simulation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", help="config file (default: $PAOI_CONFIG)")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, help="master seed for simulations")
        s.add_argument("--theta-db", type=_float_list, help="SIR thresholds in dB, comma separated")
        s.add_argument("--duty-cycle", type=_int_list, help="TT periods T, comma separated")
        s.add_argument("--alpha", type=_float_list, help="ET arrival probabilities, comma separated")
        s.add_argument("--realizations", type=int, help="number of spatial realizations")
        s.add_argument("--classes", type=int, help="number of QoS classes")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def make_spec(args) -> ExperimentSpec:
    cfg = validate(load_config(args.config))
    sim, an = cfg.sim, cfg.analysis
    if args.seed is not None:
        sim = replace(sim, seed=args.seed)
    if args.realizations is not None:
        if args.realizations < 1:
            raise UsageError("--realizations must be >= 1")
        sim = replace(sim, n_realizations=args.realizations)
    if args.classes is not None:
        if args.classes < 1:
            raise UsageError("--classes must be >= 1")
        an = replace(an, n_classes=args.classes)
    cfg = replace(cfg, sim=sim, analysis=an)

    if args.mode == "analyze-tt":
        traffic = "tt"
    elif args.mode == "analyze-et":
        traffic = "et"
    elif args.duty_cycle and args.alpha:
        raise UsageError("give --duty-cycle or --alpha, not both")
    elif args.duty_cycle:
        traffic = "tt"
    elif args.alpha:
        traffic = "et"
    else:
        traffic = cfg.traffic.kind

    if traffic == "tt":
        if args.alpha:
            raise UsageError("--alpha does not apply to TT traffic")
        loads = args.duty_cycle or ([cfg.traffic.duty_cycle] if isinstance(cfg.traffic, TT) else None)
        if not loads or min(loads) < 2:
            raise UsageError("TT runs need duty cycles >= 2 (--duty-cycle or [traffic] duty_cycle)")
    else:
        if args.duty_cycle:
            raise UsageError("--duty-cycle does not apply to ET traffic")
        loads = args.alpha or ([cfg.traffic.arrival_prob] if isinstance(cfg.traffic, ET) else None)
        if not loads or not all(0 < a <= 1 for a in loads):
            raise UsageError("ET runs need arrival probabilities in (0, 1] (--alpha or [traffic] arrival_prob)")
    thetas = args.theta_db or [cfg.network.theta_db]
    if args.mode in ("simulate", "compare") and cfg.sim.n_realizations < 1:
        raise UsageError(f"{args.mode} needs at least one realization")
    return ExperimentSpec(args.mode, cfg, Path(args.out), tuple(sorted(set(thetas))),
                          tuple(sorted(set(float(x) for x in loads))), traffic)


def _provenance(spec: ExperimentSpec) -> str:
    return (f"spatiotemporal_paoi {__version__} mode={spec.mode} config={spec.config.digest()} "
            f"seed={spec.config.sim.seed}")


def _traffic(kind: str, load: float):
    return TT(int(load)) if kind == "tt" else ET(float(load))


def _load_str(kind: str, load: float) -> str:
    return str(int(load)) if kind == "tt" else fmt_float(float(load))


# A run produces a list of deferred writers; nothing touches disk until all succeed.
Writer = Callable[[Path], None]


def _csv(name, header, rows, comment) -> Writer:
    return lambda out: write_csv(out / name, header, rows, comment)


def cmd_analyze(spec: ExperimentSpec) -> tuple[int, list[Writer]]:
    cfg, kind, prov = spec.config, spec.traffic, _provenance(spec)
    moments, ccdf, classes, paoi, trace = [], [], [], [], []
    meta_curves, series = {}, {}
    for tdb in spec.theta_db:
        net = cfg.network.with_theta_db(tdb)
        xs, ys = [], []
        for load in spec.loads:
            res = analyze(net, kind, load, cfg.analysis)
            sol, ls = res.solution, _load_str(kind, load)
            fit = sol.fit
            shape = (fit.shape_a, fit.shape_b) if hasattr(fit, "shape_a") else (math.nan, math.nan)
            moments.append([kind, fmt_float(tdb), ls, fmt_float(sol.moments.m1), fmt_float(sol.moments.m2),
                            fmt_float(shape[0]), fmt_float(shape[1]), fmt_float(sol.theta),
                            str(sol.iterations)])
            cc = np.atleast_1d(meta_ccdf(fit, XI_GRID))
            ccdf += [[kind, fmt_float(tdb), ls, fmt_float(x), fmt_float(float(c))] for x, c in zip(XI_GRID, cc)]
            meta_curves[f"{tdb:g} dB, {ls}"] = cc
            for n, (d, ok, w, p) in enumerate(zip(sol.classes.departure_probs, sol.classes.stable_mask,
                                                  res.report.mean_wait_per_class, res.report.per_class), 1):
                classes.append([kind, fmt_float(tdb), ls, str(n), fmt_float(float(d)), str(int(ok)),
                                fmt_float(w), fmt_float(p)])
            paoi += paoi_rows(res)
            trace += [[kind, fmt_float(tdb), ls, str(r.iteration), fmt_float(r.theta), fmt_float(r.m1),
                       fmt_float(r.m2), str(r.n_unstable)] for r in sol.trace]
            xs.append(load)
            ys.append(res.report.overall)
        series[f"{tdb:g} dB"] = (xs, ys)

    from . import plots

    xlabel = "T [slots]" if kind == "tt" else r"$\alpha$"
    writers = [
        _csv("moments.csv", ["traffic", "theta_db", "load", "m1", "m2", "shape_a", "shape_b", "load_factor",
                             "iterations"], moments, prov),
        _csv("meta_ccdf.csv", ["traffic", "theta_db", "load", "xi", "ccdf"], ccdf, prov),
        _csv("classes.csv", ["traffic", "theta_db", "load", "class", "d_n", "stable", "mean_wait", "paoi"],
             classes, prov),
        _csv("paoi.csv", PAOI_HEADER, paoi, prov),
        _csv("trace.csv", ["traffic", "theta_db", "load", "iteration", "load_factor", "m1", "m2", "n_unstable"],
             trace, prov),
        lambda out: plots.meta_ccdf_figure(out / "meta_ccdf.png", XI_GRID, meta_curves),
        lambda out: plots.paoi_figure(out / "paoi.png", series, xlabel),
    ]
    return 0, writers


def _simulate_all(spec: ExperimentSpec):
    cfg = spec.config
    for tdb in spec.theta_db:
        net = cfg.network.with_theta_db(tdb)
        for load in spec.loads:
            yield tdb, load, net, run_many(net, _traffic(spec.traffic, load), cfg.sim, cfg.analysis.fixed_point_tol)


SUMMARY_HEADER = ["traffic", "theta_db", "load", "realization", "n_devices", "warmup_slots", "idle_fraction",
                  "mean_success", "mean_wait", "mean_peak_age"]


def _summary_row(kind, tdb, load, i, m) -> list[str]:
    dev_wait = m.wait_sum[m.n_delivered > 0] / m.n_delivered[m.n_delivered > 0]
    dev_peak = m.peak_sum[m.n_peak > 0] / m.n_peak[m.n_peak > 0]
    return [kind, fmt_float(tdb), _load_str(kind, load), str(i), str(len(m.attempts)), str(m.warmup_slots),
            fmt_float(float(m.idle_fraction.mean())), fmt_float(float(np.nanmean(m.success_ratio))),
            fmt_float(float(dev_wait.mean()) if dev_wait.size else math.nan),
            fmt_float(float(dev_peak.mean()) if dev_peak.size else math.nan)]


def cmd_simulate(spec: ExperimentSpec) -> tuple[int, list[Writer]]:
    kind, prov = spec.traffic, _provenance(spec)
    summary, raw = [], []
    for tdb, load, _, ms in _simulate_all(spec):
        for i, m in enumerate(ms):
            summary.append(_summary_row(kind, tdb, load, i, m))
            name = f"raw_{kind}_{tdb:g}dB_{_load_str(kind, load)}_r{i:03d}.csv"
            raw.append(_csv(name, RAW_HEADER, raw_rows(m), prov))

    def make_raw_dir(out: Path) -> None:
        (out / "raw").mkdir(exist_ok=True)

    raw_writers = [lambda out, w=w: w(out / "raw") for w in raw]
    return 0, [_csv("summary.csv", SUMMARY_HEADER, summary, prov), make_raw_dir, *raw_writers]


COMPARE_HEADER = ["traffic", "theta_db", "load", "kolmogorov", "paoi_analytical", "paoi_empirical",
                  "paoi_rel_err", "pass"]


def cmd_compare(spec: ExperimentSpec) -> tuple[int, list[Writer]]:
    cfg, kind, prov = spec.config, spec.traffic, _provenance(spec)
    rows, meta_rows, curves = [], [], {}
    all_ok = True
    for tdb, load, net, ms in _simulate_all(spec):
        res = analyze(net, kind, load, cfg.analysis)
        ana = np.atleast_1d(meta_ccdf(res.solution.fit, XI_GRID))
        emp = measure_meta(ms, XI_GRID)
        ks = float(np.max(np.abs(ana - emp)))
        emp_paoi = measure_paoi(ms, n_bins=1, min_samples=1).overall
        ana_paoi = res.report.overall
        rel = abs(emp_paoi - ana_paoi) / ana_paoi if math.isfinite(ana_paoi) else math.inf
        ok = ks <= KS_TOL and rel <= PAOI_REL_TOL
        all_ok &= ok
        ls = _load_str(kind, load)
        rows.append([kind, fmt_float(tdb), ls, fmt_float(ks), fmt_float(ana_paoi), fmt_float(emp_paoi),
                     fmt_float(rel), str(int(ok))])
        meta_rows += [[kind, fmt_float(tdb), ls, fmt_float(x), fmt_float(float(a)), fmt_float(float(e))]
                      for x, a, e in zip(XI_GRID, ana, emp)]
        curves[f"analysis {tdb:g} dB, {ls}"] = ana
        curves[f"simulation {tdb:g} dB, {ls}"] = emp

    from . import plots

    writers = [
        _csv("compare.csv", COMPARE_HEADER, rows, prov),
        _csv("meta_compare.csv", ["traffic", "theta_db", "load", "xi", "analytical", "empirical"], meta_rows, prov),
        lambda out: plots.meta_ccdf_figure(out / "meta_compare.png", XI_GRID, curves),
    ]
    for r in rows:
        log.info("%s theta=%s dB load=%s: Kolmogorov %s, PAoI rel. error %s -> %s", *r[:4], r[6],
                 "pass" if r[7] == "1" else "FAIL")
    return (0 if all_ok else 2), writers


def cmd_frontier(spec: ExperimentSpec) -> tuple[int, list[Writer]]:
    cfg, kind, prov = spec.config, spec.traffic, _provenance(spec)
    front = stability_frontier(cfg.network, kind, spec.theta_db, spec.loads, cfg.analysis)
    grid = [[str(n), fmt_float(t), _load_str(kind, load), str(int(ok))] for t, load, n, ok in front.grid]
    grid += [["nan", fmt_float(t), _load_str(kind, load), "nan"] for t, load, _ in front.failures]

    from . import plots

    ylabel = "minimal stable T" if kind == "tt" else r"maximal stable $\alpha$"
    return 0, [
        _csv("frontier.csv", FRONTIER_HEADER, frontier_rows(front), prov),
        _csv("frontier_grid.csv", ["class", "theta_db", "load", "stable"], grid, prov),
        lambda out: plots.frontier_figure(out / "frontier.png", front.frontier, ylabel),
    ]


COMMANDS = {
    "analyze-tt": cmd_analyze,
    "analyze-et": cmd_analyze,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "frontier": cmd_frontier,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = make_spec(args)
        code, writers = COMMANDS[spec.mode](spec)
    except PaoiError as exc:
        print(f"paoi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    try:
        spec.out.mkdir(parents=True, exist_ok=True)
        for w in writers:
            w(spec.out)
    except OSError as exc:
        print(f"paoi: cannot write output: {exc}", file=sys.stderr)
        return 1
    if code == 2:
        print("paoi: comparison outside tolerance", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
