"""Peak age of information in uplink cellular IoT networks with queue-coupled interference.

Analytical pipeline: interference moments (``geometry``) -> beta meta
distribution and QoS classes (``meta``) -> per-class queues (``queueing``)
-> self-consistent load factor (``fixedpoint``) -> peak AoI (``paoi``).
``simulator`` is an independent slot-level Monte Carlo of the same network.
"""

__version__ = "0.1.0"

from .config import ET, TT, AnalysisParams, Config, NetworkParams, SimParams, load_config, validate
from .fixedpoint import solve_coupled_et, solve_coupled_tt
from .paoi import analyze, analyze_et, analyze_tt, paoi_et, paoi_tt, stability_frontier

__all__ = [
    "ET", "TT", "AnalysisParams", "Config", "NetworkParams", "SimParams", "load_config", "validate",
    "solve_coupled_et", "solve_coupled_tt", "analyze", "analyze_et", "analyze_tt", "paoi_et", "paoi_tt",
    "stability_frontier",
]
