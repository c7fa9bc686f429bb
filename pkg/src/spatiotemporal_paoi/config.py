"""Configuration types, config-file parsing and validation.

Internal units are km, linear SIR and watts. The file format is INI-style
with ``[network]``, ``[traffic]``, ``[analysis]`` and ``[sim]`` sections;
``theta_db`` and ``rho_dbm`` are accepted in place of the linear
``sir_threshold`` and ``power_control_rho`` keys.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Union

from .errors import ConfigError, InvalidParam, ParseError

log = logging.getLogger(__name__)

CONFIG_ENV_VAR = "PAOI_CONFIG"


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class NetworkParams:
    bs_intensity: float = 1.0  # BS / km^2
    pathloss_exponent: float = 4.0
    power_control_epsilon: float = 1.0
    power_control_rho: float = 1e-12  # W  (-90 dBm)
    sir_threshold: float = 1.0  # linear

    @property
    def theta_db(self) -> float:
        return linear_to_db(self.sir_threshold)

    def with_theta_db(self, theta_db: float) -> "NetworkParams":
        return replace(self, sir_threshold=db_to_linear(theta_db))


@dataclass(frozen=True)
class TT:
    """Time-triggered traffic: one packet every ``duty_cycle`` slots."""

    duty_cycle: int

    kind = "tt"

    @property
    def load(self) -> float:
        return float(self.duty_cycle)

    @property
    def arrival_rate(self) -> float:
        return 1.0 / self.duty_cycle


@dataclass(frozen=True)
class ET:
    """Event-triggered traffic: Bernoulli arrivals with probability ``arrival_prob``."""

    arrival_prob: float

    kind = "et"

    @property
    def load(self) -> float:
        return self.arrival_prob

    @property
    def arrival_rate(self) -> float:
        return self.arrival_prob


TrafficModel = Union[TT, ET]


@dataclass(frozen=True)
class AnalysisParams:
    n_classes: int = 10
    fixed_point_tol: float = 1e-4
    max_iters: int = 200
    quad_rel_tol: float = 1e-8
    wait_pmf_tail_mass: float = 1e-8


@dataclass(frozen=True)
class SimParams:
    area_side: float = 10.0  # km
    seed: int = 1
    n_realizations: int = 20
    warmup_slots: int = 500  # minimum warm-up before the idle-fraction test applies
    max_slots: int = 200_000
    slots_after_warmup: int = 4000


@dataclass(frozen=True)
class Config:
    """A validated configuration (immutable, unit-converted)."""

    network: NetworkParams = field(default_factory=NetworkParams)
    traffic: TrafficModel = field(default_factory=lambda: TT(8))
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    sim: SimParams = field(default_factory=SimParams)

    def with_traffic(self, traffic: TrafficModel) -> "Config":
        return replace(self, traffic=traffic)

    def with_theta_db(self, theta_db: float) -> "Config":
        return replace(self, network=self.network.with_theta_db(theta_db))

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:12]


# raw parsing ----------------------------------------------------------------

_NETWORK_KEYS = {
    "bs_intensity": float,
    "pathloss_exponent": float,
    "power_control_epsilon": float,
    "power_control_rho": float,
    "rho_dbm": float,
    "sir_threshold": float,
    "theta_db": float,
}
_TRAFFIC_KEYS = {"kind": str, "duty_cycle": int, "arrival_prob": float}
_ANALYSIS_KEYS = {f.name: f.type for f in fields(AnalysisParams)}
_SIM_KEYS = {f.name: f.type for f in fields(SimParams)}
_SECTIONS = {
    "network": _NETWORK_KEYS,
    "traffic": _TRAFFIC_KEYS,
    "analysis": _ANALYSIS_KEYS,
    "sim": _SIM_KEYS,
}
_CASTS = {"float": float, "int": int, "str": str, float: float, int: int, str: str}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line it was defined on."""
    out: dict[tuple[str, str], int] = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif section is not None:
            for sep in ("=", ":"):
                if sep in s:
                    out[(section, s.split(sep, 1)[0].strip().lower())] = i
                    break
    return out


def _cast_int(raw: str) -> int:
    v = float(raw)
    if not v.is_integer():
        raise ValueError(f"{raw!r} is not an integer")
    return int(v)


def parse_config_text(text: str) -> dict[str, dict[str, object]]:
    """Parse config text into a nested dict of typed raw values with defaults filled."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from exc
    lines = _key_lines(text)

    raw: dict[str, dict[str, object]] = {s: {} for s in _SECTIONS}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SECTIONS:
            raise ParseError(f"unknown section [{section}]")
        schema = _SECTIONS[sec]
        for key, value in parser.items(section):
            if key not in schema:
                raise ParseError(f"unknown key in [{sec}]", line=lines.get((sec, key)), field=key)
            caster = _CASTS[schema[key]]
            try:
                raw[sec][key] = _cast_int(value) if caster is int else caster(value.strip())
            except ValueError as exc:
                raise ParseError(str(exc), line=lines.get((sec, key)), field=key) from exc

    if not raw["traffic"]:
        raise ParseError("missing [traffic] block")
    tr = raw["traffic"]
    kind = str(tr.get("kind", "")).lower()
    if not kind:
        if "duty_cycle" in tr and "arrival_prob" not in tr:
            kind = "tt"
        elif "arrival_prob" in tr and "duty_cycle" not in tr:
            kind = "et"
        else:
            raise ParseError("[traffic] needs exactly one of duty_cycle / arrival_prob", field="kind")
    if kind not in ("tt", "et"):
        raise ParseError(f"traffic kind must be 'tt' or 'et', got {kind!r}", line=lines.get(("traffic", "kind")), field="kind")
    need = "duty_cycle" if kind == "tt" else "arrival_prob"
    if need not in tr:
        raise ParseError(f"{kind} traffic requires {need}", field=need)
    tr["kind"] = kind

    net = raw["network"]
    for a, b in (("sir_threshold", "theta_db"), ("power_control_rho", "rho_dbm")):
        if a in net and b in net:
            raise ParseError(f"give only one of {a} / {b}", line=lines.get(("network", b)), field=b)
    defaults = NetworkParams()
    net.setdefault("bs_intensity", defaults.bs_intensity)
    net.setdefault("pathloss_exponent", defaults.pathloss_exponent)
    net.setdefault("power_control_epsilon", defaults.power_control_epsilon)
    if "power_control_rho" not in net:
        net.setdefault("rho_dbm", -90.0)
    if "sir_threshold" not in net:
        net.setdefault("theta_db", 0.0)
    for name, value in asdict(AnalysisParams()).items():
        raw["analysis"].setdefault(name, value)
    for name, value in asdict(SimParams()).items():
        raw["sim"].setdefault(name, value)
    return raw


def load_config(path: str | os.PathLike | None = None) -> dict[str, dict[str, object]]:
    """Read a config file; ``None`` falls back to the ``PAOI_CONFIG`` variable."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
        if not path:
            raise ParseError(f"no config path given and ${CONFIG_ENV_VAR} is unset")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_config_text(text)


def validate(raw: dict[str, dict[str, object]]) -> Config:
    """Apply unit conversions and check every invariant, collecting all violations."""
    bad: list[InvalidParam] = []
    net = dict(raw.get("network", {}))
    tr = dict(raw.get("traffic", {}))
    an = dict(raw.get("analysis", {}))
    sm = dict(raw.get("sim", {}))

    rho = net.pop("power_control_rho", None)
    if rho is None:
        rho = dbm_to_watts(float(net.pop("rho_dbm", -90.0)))
    net.pop("rho_dbm", None)
    theta = net.pop("sir_threshold", None)
    if theta is None:
        theta = db_to_linear(float(net.pop("theta_db", 0.0)))
    net.pop("theta_db", None)
    network = NetworkParams(sir_threshold=float(theta), power_control_rho=float(rho), **{k: float(v) for k, v in net.items()})

    if not network.bs_intensity > 0:
        bad.append(InvalidParam("bs_intensity", network.bs_intensity, "> 0"))
    if not network.pathloss_exponent > 2:
        bad.append(InvalidParam("pathloss_exponent", network.pathloss_exponent, "> 2"))
    if not 0 <= network.power_control_epsilon <= 1:
        bad.append(InvalidParam("power_control_epsilon", network.power_control_epsilon, "in [0, 1]"))
    if not network.power_control_rho > 0:
        bad.append(InvalidParam("power_control_rho", network.power_control_rho, "> 0"))
    if not network.sir_threshold > 0:
        bad.append(InvalidParam("sir_threshold", network.sir_threshold, "> 0"))

    kind = str(tr.get("kind", "tt" if "duty_cycle" in tr else "et")).lower()
    traffic: TrafficModel
    if kind == "tt":
        T = tr.get("duty_cycle")
        if not isinstance(T, int) or isinstance(T, bool) or T < 2:
            bad.append(InvalidParam("duty_cycle", T, "integer >= 2"))
            T = 2
        traffic = TT(int(T))
    elif kind == "et":
        a = tr.get("arrival_prob")
        if a is None or not 0 < float(a) <= 1:
            bad.append(InvalidParam("arrival_prob", a, "in (0, 1]"))
            a = 1.0
        traffic = ET(float(a))
    else:
        bad.append(InvalidParam("kind", kind, "'tt' or 'et'"))
        traffic = TT(2)

    analysis = AnalysisParams(**{**asdict(AnalysisParams()), **an})
    if not (isinstance(analysis.n_classes, int) and analysis.n_classes >= 1):
        bad.append(InvalidParam("n_classes", analysis.n_classes, "integer >= 1"))
    for name in ("fixed_point_tol", "quad_rel_tol", "wait_pmf_tail_mass"):
        if not getattr(analysis, name) > 0:
            bad.append(InvalidParam(name, getattr(analysis, name), "> 0"))
    if not analysis.max_iters >= 1:
        bad.append(InvalidParam("max_iters", analysis.max_iters, ">= 1"))

    sim = SimParams(**{**asdict(SimParams()), **sm})
    if not sim.area_side > 0:
        bad.append(InvalidParam("area_side", sim.area_side, "> 0"))
    if sim.n_realizations < 0:
        bad.append(InvalidParam("n_realizations", sim.n_realizations, ">= 0"))
    if sim.max_slots < sim.warmup_slots:
        bad.append(InvalidParam("max_slots", sim.max_slots, ">= warmup_slots"))
    if sim.slots_after_warmup < 1:
        bad.append(InvalidParam("slots_after_warmup", sim.slots_after_warmup, ">= 1"))

    if bad:
        raise ConfigError(bad)
    if network.bs_intensity * sim.area_side**2 < 10:
        log.warning("expected BS count %.2f < 10; simulation statistics will be poor",
                    network.bs_intensity * sim.area_side**2)
    return Config(network, traffic, analysis, sim)


def serialize(cfg: Config) -> str:
    """Render a validated config back to the file format (linear units, exact reprs)."""
    out = ["[network]"]
    for k, v in asdict(cfg.network).items():
        out.append(f"{k} = {v!r}")
    out.append("")
    out.append("[traffic]")
    if isinstance(cfg.traffic, TT):
        out += ["kind = tt", f"duty_cycle = {cfg.traffic.duty_cycle}"]
    else:
        out += ["kind = et", f"arrival_prob = {cfg.traffic.arrival_prob!r}"]
    for name, section in (("analysis", cfg.analysis), ("sim", cfg.sim)):
        out.append("")
        out.append(f"[{name}]")
        for k, v in asdict(section).items():
            out.append(f"{k} = {v!r}")
    return "\n".join(out) + "\n"
