"""TOML run configuration.

Grammar (one file drives every command)::

    # model, top level
    h = 2.0              # holding cost rate
    p = 2.0              # penalty cost rate
    K_plus = 3.0         # fixed cost of an upward impulse
    K_minus = 3.0        # fixed cost of a downward impulse
    k_plus = 1.0         # proportional cost of an upward impulse
    k_minus = 1.0        # proportional cost of a downward impulse
    r = 0.5
    sigma = 0.7071067811865476
    c = 1.0              # optional, cost of an opponent's intervention
    alpha_slope = 0.0    # optional, target map m -> alpha_slope*m + alpha_intercept
    alpha_intercept = 0.0

    [sim]                # optional, Monte Carlo settings
    n_players = 1
    dt = 1e-3
    horizon = 30.0       # optional, default from the discount tail
    n_paths = 1000
    seed = 0
    init = "point"       # point | uniform | gaussian
    init_a = 0.0
    init_b = 0.0
    cost_reference = "population"   # or "center"
    burn_in = 0

    [sweep]              # optional, default sweep for the sweep command
    param = "K"
    range = [1.0, 5.0, 10]
    mode = "ne1"

    [mfg]
    init_mean = 0.0

    [epsnash]
    n_values = [2, 4, 8, 16, 32, 64]
    factors = [0.5, 0.75, 1.0, 1.25, 1.5]

``K`` and ``k`` are shorthands for setting both sides at once; giving a
shorthand together with a one-sided key is an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .model import CostSpec, GameParams
from .sim import InitDist, SimConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "SWEEP_PARAMS"]

REQUIRED = ("h", "p", "K_plus", "K_minus", "k_plus", "k_minus", "r", "sigma")
OPTIONAL = ("c", "alpha_slope", "alpha_intercept")
SHORTHAND = {"K": ("K_plus", "K_minus"), "k": ("k_plus", "k_minus")}
TABLES = ("sim", "sweep", "mfg", "epsnash", "meta")
SWEEP_PARAMS = ("h", "p", "K", "K_plus", "K_minus", "k", "k_plus", "k_minus", "c", "r", "sigma",
                "alpha_slope")
SIM_KEYS = {"n_players", "dt", "horizon", "n_paths", "seed", "init", "init_a", "init_b",
            "cost_reference", "burn_in", "threads"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: GameParams
    sim: SimConfig
    sweep: dict = field(default_factory=dict)
    mfg: dict = field(default_factory=dict)
    epsnash: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _num(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"key {name!r} must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"key {name!r} must be finite")
    return v


def _model(raw: dict) -> GameParams:
    vals = {}
    for short, sides in SHORTHAND.items():
        if short in raw:
            clash = [s for s in sides if s in raw]
            if clash:
                raise ConfigError(f"key {short!r} conflicts with {clash[0]!r}")
            for s in sides:
                vals[s] = _num(short, raw[short])
    for key in REQUIRED + OPTIONAL:
        if key in raw:
            vals[key] = _num(key, raw[key])
    missing = [k for k in REQUIRED if k not in vals]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    unknown = [k for k in raw if k not in vals and k not in SHORTHAND and k not in TABLES]
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    try:
        costs = CostSpec(h=vals["h"], p=vals["p"], K_plus=vals["K_plus"], K_minus=vals["K_minus"],
                         k_plus=vals["k_plus"], k_minus=vals["k_minus"], c=vals.get("c", 0.0))
        return GameParams(costs, vals["r"], vals["sigma"], vals.get("alpha_slope", 0.0),
                          vals.get("alpha_intercept", 0.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _sim(raw: dict) -> SimConfig:
    unknown = set(raw) - SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown [sim] key {sorted(unknown)[0]!r}")
    try:
        init = InitDist(str(raw.get("init", "point")), float(raw.get("init_a", 0.0)),
                        float(raw.get("init_b", 0.0)))
        horizon = raw.get("horizon")
        return SimConfig(
            n_players=int(raw.get("n_players", 1)),
            dt=float(raw.get("dt", 1e-3)),
            horizon=None if horizon is None else float(horizon),
            n_paths=int(raw.get("n_paths", 1000)),
            seed=int(raw.get("seed", 0)),
            init_dist=init,
            cost_reference=str(raw.get("cost_reference", "population")),
            burn_in=int(raw.get("burn_in", 0)),
            threads=None if raw.get("threads") is None else int(raw["threads"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[sim]: {exc}") from exc


def _sweep(raw: dict) -> dict:
    out = dict(raw)
    if "param" in out and out["param"] not in SWEEP_PARAMS:
        raise ConfigError(f"[sweep] param {out['param']!r} not in {', '.join(SWEEP_PARAMS)}")
    if "range" in out:
        rg = out["range"]
        if not (isinstance(rg, list) and len(rg) == 3):
            raise ConfigError("[sweep] range must be [lo, hi, steps]")
        out["range"] = (_num("range", rg[0]), _num("range", rg[1]), int(rg[2]))
    return out


def parse_config(raw: dict) -> RunConfig:
    for t in TABLES:
        if t in raw and not isinstance(raw[t], dict):
            raise ConfigError(f"{t!r} must be a table")
    return RunConfig(
        params=_model(raw),
        sim=_sim(raw.get("sim", {})),
        sweep=_sweep(raw.get("sweep", {})),
        mfg=dict(raw.get("mfg", {})),
        epsnash=dict(raw.get("epsnash", {})),
        meta=dict(raw.get("meta", {})),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw)
