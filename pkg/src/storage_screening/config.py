"""Scenario files: INI-style ``[section]`` headers over flat ``key = value`` lines.

Every key is validated before anything is solved, and unknown sections or
keys are rejected so that a typo cannot silently fall back to a default.

Example (the linear case)::

    [case]
    name = CaseB

    [market]
    curve = affine
    intercept = 20
    slope = 1.5

    [load]
    kind = uniform
    lo = 0
    hi = 100
    n = 101

    [storage]
    capacity_pct = 10, 50, 150
    fixed_cost = 5

A merit-order market replaces the affine keys with ``curve = merit_order``,
``voll`` and ``capacities = screening | explicit``, plus one
``[tech.<name>]`` section per technology with ``variable_cost``,
``fixed_cost`` and (for explicit capacities) ``capacity``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .investment import percent_to_capacity
from .market import Affine, GenerationTech, LoadGrid, MeritOrder, TechSet, screening_capacities
from .montecarlo import RNG_NAME


class ConfigError(ValueError):
    """Raised for any malformed or inconsistent scenario file."""


_SCHEMA = {
    "case": {"name"},
    "market": {"curve", "intercept", "slope", "voll", "capacities"},
    "load": {"kind", "lo", "hi", "n", "values", "weights"},
    "storage": {"capacity_pct", "s_min", "fixed_cost", "sweep_pct", "search_lo_pct",
                "search_hi_pct", "search_tol_pct", "hedge_pct"},
    "solver": {"discount", "delta_t", "n_states", "tol", "max_iter", "damping"},
    "simulation": {"seed", "rng", "intervals"},
}
_TECH_KEYS = {"variable_cost", "fixed_cost", "capacity"}


def _float(section, key, raw):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: must be finite")
    return value


def _int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not an integer: {raw!r}") from None


def _floats(section, key, raw):
    parts = [p for p in (s.strip() for s in raw.split(",")) if p]
    if not parts:
        raise ConfigError(f"[{section}] {key}: empty list")
    return [_float(section, key, p) for p in parts]


@dataclass
class SolverSettings:
    discount: float = 0.999
    delta_t: float = 1.0
    n_states: int = 101
    tol: float = 1e-9
    max_iter: int = 20000
    damping: float = 0.5

    def kwargs(self) -> dict:
        return {
            "n_states": self.n_states, "discount": self.discount, "delta_t": self.delta_t,
            "tol": self.tol, "max_iter": self.max_iter, "damping": self.damping,
        }


@dataclass
class ScenarioConfig:
    name: str
    curve: object
    loads: LoadGrid
    capacity_pct: list
    techs: TechSet | None = None
    s_min: float = 0.0
    fixed_cost: float | None = None
    sweep_pct: list = field(default_factory=list)
    search_pct: tuple = (0.0, 100.0)
    search_tol_pct: float = 1.0
    hedge_pct: float | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    seed: int = 0
    rng: str = RNG_NAME
    intervals: int = 10000

    def capacity(self, pct: float) -> float:
        return percent_to_capacity(pct, self.loads, self.solver.delta_t)


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    if parser.defaults():
        raise ConfigError("a [DEFAULT] section is not supported")
    techs_raw = {}
    for section in parser.sections():
        keys = set(parser[section])
        if section.startswith("tech."):
            allowed = _TECH_KEYS
            techs_raw[section[5:]] = parser[section]
        elif section in _SCHEMA:
            allowed = _SCHEMA[section]
        else:
            raise ConfigError(f"unknown section [{section}]")
        unknown = keys - allowed
        if unknown:
            raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    name = get("case", "name")
    if not name or any(c in name for c in "/\\ "):
        raise ConfigError("[case] name is required and may not contain spaces or slashes")

    loads = _build_loads(get)
    curve, techs = _build_market(get, techs_raw, loads)

    solver = SolverSettings()
    for key, conv in (("discount", _float), ("delta_t", _float), ("n_states", _int),
                      ("tol", _float), ("max_iter", _int), ("damping", _float)):
        raw = get("solver", key)
        if raw is not None:
            setattr(solver, key, conv("solver", key, raw))
    if not 0 < solver.discount < 1:
        raise ConfigError("[solver] discount must lie in (0, 1)")
    if not solver.delta_t > 0:
        raise ConfigError("[solver] delta_t must be > 0")
    if solver.n_states < 2:
        raise ConfigError("[solver] n_states must be >= 2")
    if not solver.tol > 0 or solver.max_iter < 1:
        raise ConfigError("[solver] tol must be > 0 and max_iter >= 1")
    if not 0 < solver.damping <= 1:
        raise ConfigError("[solver] damping must lie in (0, 1]")

    raw = get("storage", "capacity_pct")
    if raw is None:
        raise ConfigError("[storage] capacity_pct is required")
    capacity_pct = _floats("storage", "capacity_pct", raw)
    sweep = get("storage", "sweep_pct")
    sweep_pct = _floats("storage", "sweep_pct", sweep) if sweep is not None else list(capacity_pct)
    if any(p < 0 for p in capacity_pct + sweep_pct):
        raise ConfigError("[storage] capacities must be >= 0")
    fixed = get("storage", "fixed_cost")
    fixed_cost = _float("storage", "fixed_cost", fixed) if fixed is not None else None
    if fixed_cost is not None and not fixed_cost > 0:
        raise ConfigError("[storage] fixed_cost must be > 0")
    lo_pct = _float("storage", "search_lo_pct", get("storage", "search_lo_pct", "0"))
    hi_pct = _float("storage", "search_hi_pct", get("storage", "search_hi_pct", "100"))
    if not 0 <= lo_pct < hi_pct:
        raise ConfigError("[storage] need 0 <= search_lo_pct < search_hi_pct")
    tol_pct = _float("storage", "search_tol_pct", get("storage", "search_tol_pct", "1"))
    if not tol_pct > 0:
        raise ConfigError("[storage] search_tol_pct must be > 0")
    hedge = get("storage", "hedge_pct")
    hedge_pct = _float("storage", "hedge_pct", hedge) if hedge is not None else None
    if hedge_pct is not None and hedge_pct <= 0:
        raise ConfigError("[storage] hedge_pct must be > 0")

    seed = _int("simulation", "seed", get("simulation", "seed", "0"))
    if seed < 0:
        raise ConfigError("[simulation] seed must be >= 0")
    rng = get("simulation", "rng", RNG_NAME)
    if rng != RNG_NAME:
        raise ConfigError(f"[simulation] rng: only {RNG_NAME} is supported")
    intervals = _int("simulation", "intervals", get("simulation", "intervals", "10000"))
    if intervals < 1:
        raise ConfigError("[simulation] intervals must be >= 1")

    return ScenarioConfig(
        name=name, curve=curve, loads=loads, capacity_pct=capacity_pct, techs=techs,
        s_min=_float("storage", "s_min", get("storage", "s_min", "0")),
        fixed_cost=fixed_cost, sweep_pct=sweep_pct, search_pct=(lo_pct, hi_pct),
        search_tol_pct=tol_pct, hedge_pct=hedge_pct, solver=solver, seed=seed, rng=rng,
        intervals=intervals,
    )


def _build_loads(get) -> LoadGrid:
    kind = get("load", "kind", "uniform")
    try:
        if kind == "uniform":
            lo = _float("load", "lo", get("load", "lo", "0"))
            hi = _float("load", "hi", get("load", "hi", "100"))
            n = _int("load", "n", get("load", "n", "101"))
            return LoadGrid.uniform(lo, hi, n)
        if kind == "explicit":
            values = get("load", "values")
            if values is None:
                raise ConfigError("[load] explicit grids need values")
            values = _floats("load", "values", values)
            weights = get("load", "weights")
            weights = _floats("load", "weights", weights) if weights else [1.0] * len(values)
            if len(weights) != len(values) or any(w < 0 for w in weights) or sum(weights) <= 0:
                raise ConfigError("[load] weights must match values and be >= 0")
            return LoadGrid.from_pairs(values, weights)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[load] {exc}") from None
    raise ConfigError(f"[load] kind must be uniform or explicit, got {kind!r}")


def _build_market(get, techs_raw, loads):
    curve = get("market", "curve")
    if curve == "affine":
        if techs_raw:
            raise ConfigError("[tech.*] sections are only valid for merit_order markets")
        intercept = _float("market", "intercept", get("market", "intercept", "0"))
        slope = get("market", "slope")
        if slope is None:
            raise ConfigError("[market] affine curves need slope")
        try:
            return Affine(intercept, _float("market", "slope", slope)), None
        except ValueError as exc:
            raise ConfigError(f"[market] {exc}") from None
    if curve != "merit_order":
        raise ConfigError(f"[market] curve must be affine or merit_order, got {curve!r}")
    if not techs_raw:
        raise ConfigError("merit_order markets need at least one [tech.<name>] section")
    voll = get("market", "voll")
    if voll is None:
        raise ConfigError("[market] merit_order markets need voll")
    mode = get("market", "capacities", "screening")
    if mode not in ("screening", "explicit"):
        raise ConfigError("[market] capacities must be screening or explicit")
    techs = []
    for name, sec in techs_raw.items():
        section = f"tech.{name}"
        if "variable_cost" not in sec:
            raise ConfigError(f"[{section}] variable_cost is required")
        if mode == "explicit" and "capacity" not in sec:
            raise ConfigError(f"[{section}] capacity is required with explicit capacities")
        try:
            techs.append(GenerationTech(
                name,
                _float(section, "variable_cost", sec["variable_cost"]),
                _float(section, "fixed_cost", sec.get("fixed_cost", "0")),
                _float(section, "capacity", sec.get("capacity", "0")),
            ))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        tech_set = TechSet(techs, _float("market", "voll", voll))
    except ValueError as exc:
        raise ConfigError(f"[market] {exc}") from None
    if mode == "screening":
        tech_set = screening_capacities(tech_set, loads)
    return MeritOrder(tech_set), tech_set


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
