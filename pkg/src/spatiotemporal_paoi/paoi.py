"""Peak age of information from inter-arrival means and per-class waiting times."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import AnalysisParams, NetworkParams
from .errors import PaoiError
from .fixedpoint import CoupledSolution, solve_coupled_et, solve_coupled_tt
from .queueing import WaitingDist, solve_tt, waiting_dist_et, waiting_dist_tt

log = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class PaoiReport:
    overall: float
    per_class: tuple[float, ...]
    mean_wait_per_class: tuple[float, ...]
    inter_arrival_mean: float

    @property
    def stable(self) -> bool:
        return math.isfinite(self.overall)


@dataclass
class ClassAnalysis:
    """Everything a single (traffic, theta, load) solve produces."""

    traffic: str
    theta_db: float
    load: float
    solution: CoupledSolution
    waits: list[WaitingDist | None]
    report: PaoiReport


@dataclass
class ParetoFrontier:
    traffic: str
    grid: list[tuple[float, float, int, bool]] = field(default_factory=list)
    frontier: dict[int, list[tuple[float, float]]] = field(default_factory=dict)
    failures: list[tuple[float, float, str]] = field(default_factory=list)


def _report(inter_arrival: float, waits: Sequence[WaitingDist | None], stability) -> PaoiReport:
    stability = np.asarray(stability, dtype=bool)
    if len(waits) != len(stability):
        raise ValueError("waits and stability mask differ in length")
    means = tuple(w.mean if (ok and w is not None) else INF for w, ok in zip(waits, stability))
    per_class = tuple(inter_arrival + m for m in means)
    overall = inter_arrival + (float(np.mean(means)) if all(map(math.isfinite, means)) else INF)
    return PaoiReport(overall, per_class, means, inter_arrival)


def paoi_tt(T: int, waits: Sequence[WaitingDist | None], stability) -> PaoiReport:
    """Per-class PAoI = T + mean wait; overall is infinite when any class is unstable."""
    return _report(float(T), waits, stability)


def paoi_et(alpha: float, waits: Sequence[WaitingDist | None], stability) -> PaoiReport:
    """Per-class PAoI = 1/alpha + mean wait; aggregation as for TT."""
    return _report(1.0 / alpha, waits, stability)


def analyze_tt(net: NetworkParams, T: int, analysis: AnalysisParams) -> ClassAnalysis:
    sol = solve_coupled_tt(net, T, analysis)
    waits: list[WaitingDist | None] = []
    for d, ok in zip(sol.classes.departure_probs, sol.classes.stable_mask):
        if not ok:
            waits.append(None)
            continue
        model, state = solve_tt(T, float(d))
        waits.append(waiting_dist_tt(state, model, analysis.wait_pmf_tail_mass))
    rep = paoi_tt(T, waits, sol.classes.stable_mask)
    return ClassAnalysis("tt", net.theta_db, float(T), sol, waits, rep)


def analyze_et(net: NetworkParams, alpha: float, analysis: AnalysisParams) -> ClassAnalysis:
    sol = solve_coupled_et(net, alpha, analysis)
    waits: list[WaitingDist | None] = []
    for d, ok in zip(sol.classes.departure_probs, sol.classes.stable_mask):
        waits.append(waiting_dist_et(alpha, float(d), analysis.wait_pmf_tail_mass) if ok else None)
    rep = paoi_et(alpha, waits, sol.classes.stable_mask)
    return ClassAnalysis("et", net.theta_db, float(alpha), sol, waits, rep)


def analyze(net: NetworkParams, traffic: str, load: float, analysis: AnalysisParams) -> ClassAnalysis:
    if traffic == "tt":
        return analyze_tt(net, int(load), analysis)
    if traffic == "et":
        return analyze_et(net, float(load), analysis)
    raise ValueError(f"unknown traffic kind {traffic!r}")


def stability_frontier(net: NetworkParams, traffic: str, theta_grid_db: Sequence[float],
                       load_grid: Sequence[float], analysis: AnalysisParams) -> ParetoFrontier:
    """Per-class stability over a (theta, load) grid.

    The frontier of class n at a given theta is the smallest stable T (TT) or
    the largest stable alpha (ET) on the grid; NaN when no grid load is stable.
    Grid points whose solve fails are recorded and skipped.
    """
    out = ParetoFrontier(traffic)
    n_classes = analysis.n_classes
    for tdb in theta_grid_db:
        cfg = net.with_theta_db(float(tdb))
        stable_loads: dict[int, list[float]] = {n: [] for n in range(1, n_classes + 1)}
        for load in load_grid:
            try:
                sol = (solve_coupled_tt(cfg, int(load), analysis) if traffic == "tt"
                       else solve_coupled_et(cfg, float(load), analysis))
            except PaoiError as exc:
                log.warning("grid point theta=%s dB load=%s failed: %s", tdb, load, exc)
                out.failures.append((float(tdb), float(load), type(exc).__name__))
                continue
            for n, ok in enumerate(sol.classes.stable_mask, start=1):
                out.grid.append((float(tdb), float(load), n, bool(ok)))
                if ok:
                    stable_loads[n].append(float(load))
        for n, loads in stable_loads.items():
            if not loads:
                star = math.nan
            else:
                star = min(loads) if traffic == "tt" else max(loads)
            out.frontier.setdefault(n, []).append((float(tdb), star))
    return out


def fmt_float(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def paoi_rows(result: ClassAnalysis) -> list[list[str]]:
    """Rows (traffic, theta_db, load, class, stable, mean_wait, paoi); class 0 is the overall row."""
    rep = result.report
    load = str(int(result.load)) if result.traffic == "tt" else fmt_float(result.load)
    rows = [[result.traffic, fmt_float(result.theta_db), load, "0", str(int(rep.stable)),
             fmt_float(float(np.mean(rep.mean_wait_per_class))), fmt_float(rep.overall)]]
    for n, (w, p, ok) in enumerate(zip(rep.mean_wait_per_class, rep.per_class,
                                       result.solution.classes.stable_mask), start=1):
        rows.append([result.traffic, fmt_float(result.theta_db), load, str(n), str(int(ok)),
                     fmt_float(w), fmt_float(p)])
    return rows


PAOI_HEADER = ["traffic", "theta_db", "load", "class", "stable", "mean_wait", "paoi"]
FRONTIER_HEADER = ["class", "theta_db", "load_star"]


def frontier_rows(front: ParetoFrontier) -> list[list[str]]:
    rows = []
    for n in sorted(front.frontier):
        for tdb, star in front.frontier[n]:
            rows.append([str(n), fmt_float(tdb), fmt_float(star)])
    return rows


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence[str]], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
