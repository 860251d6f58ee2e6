"""Configuration schema, loading (TOML or JSON), overrides and validation.

A config is a nested dict. :func:`resolve` fills every default, checks
types and invariants, and returns a plain dict that, written out as
``resolved_config.json`` and loaded again, resolves to itself.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONE_KINDS = ("flat", "hyperbolic")

DEFAULTS = {
    "beta": None,
    "cone": "flat",
    "levels": [2.0, 3.0, 4.0, 5.0, 6.0],
    "solver": {
        "n": 2048,
        "r_min": "auto",
        "r_max": "auto",
        "spacing": "log",
        "scheme": "semi-implicit",
        "cfl": 0.25,
        "t_end": 0.25,
        "dt_max": 1e-3,
        "dt_rel": 0.02,
        "store_every": 1000,
        "inner_boundary": "none",
    },
    "probes": {"t_min": 1e-5, "count": 51},
    "smoothening": {"gap_t_min": 1e-2, "gap_tol": 1e-3},
    "decay": {"window": [1e-3, 1e-1], "deepen": 2.0},
    "barrier": {"C": 0.0, "window": [1e-4, 1e-2]},
    "uniqueness": {
        "enabled": False,
        "schedule_a": [3.0, 5.0, 7.0],
        "schedule_b": [4.0, 6.0, 8.0],
        "t0": [1e-3, 1e-2],
        "window": [0.05, 0.2],
        "deepen": 2.0,
    },
    "simulate": {"level": "auto"},
    "validation": {"n": 2048, "dt_max": 1e-4},
}

_NUM = (int, float)


def load_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return data


def _parse_value(text: str):
    """Override value: JSON or a TOML literal, else the raw string."""
    for parse in (json.loads, lambda s: tomllib.loads(f"v = {s}")["v"]):
        try:
            return parse(text)
        except ValueError:
            continue
    return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` overrides; unknown keys are errors."""
    out = copy.deepcopy(data)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        node, schema = out, DEFAULTS
        for part in parts[:-1]:
            if not isinstance(schema.get(part), dict):
                raise ConfigError(f"{key}: unknown config section {part!r}")
            schema = schema[part]
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {part!r} is not a table")
        if parts[-1] not in schema or isinstance(schema[parts[-1]], dict):
            raise ConfigError(f"{key}: unknown config key")
        node[parts[-1]] = _parse_value(value.strip())
    return out


def _merge(defaults: dict, data: dict, path: str = "") -> dict:
    out = {}
    for key in data:
        if key not in defaults:
            raise ConfigError(f"{path}{key}: unknown config key")
    for key, default in defaults.items():
        where = f"{path}{key}"
        if isinstance(default, dict):
            sub = data.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"{where}: expected a table")
            out[key] = _merge(default, sub, where + ".")
        else:
            out[key] = copy.deepcopy(data.get(key, default))
    return out


def _number(cfg, path, lo=None, hi=None, integer=False, open_lo=False, auto=False):
    node = cfg
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[k]
    v = node[keys[-1]]
    if auto and v == "auto":
        return
    if isinstance(v, bool) or not isinstance(v, _NUM):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise ConfigError(f"{path}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"{path}: must be {'>' if open_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {v}")
    node[keys[-1]] = v


def _number_list(cfg, path, length=None, increasing=False):
    node = cfg
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[k]
    v = node[keys[-1]]
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, _NUM) for x in v):
        raise ConfigError(f"{path}: expected a list of numbers, got {v!r}")
    v = [float(x) for x in v]
    if length is not None and len(v) != length:
        raise ConfigError(f"{path}: expected {length} entries, got {len(v)}")
    if increasing and any(b <= a for a, b in zip(v, v[1:])):
        raise ConfigError(f"{path}: must be strictly increasing")
    node[keys[-1]] = v


def _choice(cfg, path, options):
    node = cfg
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[k]
    v = node[keys[-1]]
    if v not in options:
        raise ConfigError(f"{path}: expected one of {list(options)}, got {v!r}")


def resolve(data: dict) -> dict:
    """Merge defaults, validate and normalize; raises ConfigError with the field path."""
    cfg = _merge(DEFAULTS, data)
    if cfg["beta"] is None:
        raise ConfigError("beta: required (cone exponent in (-1, 0])")
    _number(cfg, "beta")
    if not (-1.0 < cfg["beta"] <= 0.0):
        raise ConfigError(f"beta: cone exponent must lie in (-1, 0], got {cfg['beta']}")
    _choice(cfg, "cone", CONE_KINDS)
    _number_list(cfg, "levels", increasing=True)
    if len(cfg["levels"]) < 2:
        raise ConfigError("levels: need at least two cap levels")

    s = "solver."
    _number(cfg, s + "n", lo=16, integer=True)
    _number(cfg, s + "r_min", lo=0.0, auto=True)
    _number(cfg, s + "r_max", lo=0.0, open_lo=True, auto=True)
    _choice(cfg, s + "spacing", ("uniform", "log"))
    _choice(cfg, s + "scheme", ("explicit", "semi-implicit"))
    _number(cfg, s + "cfl", lo=0.0, hi=0.5, open_lo=True)
    _number(cfg, s + "t_end", lo=0.0, open_lo=True)
    _number(cfg, s + "dt_max", lo=0.0, open_lo=True)
    _number(cfg, s + "dt_rel", lo=0.0, open_lo=True)
    _number(cfg, s + "store_every", lo=1, integer=True)
    _choice(cfg, s + "inner_boundary", ("none", "fixed"))
    sol = cfg["solver"]
    r_max = sol["r_max"]
    if r_max != "auto":
        if cfg["cone"] == "hyperbolic" and r_max >= 1.0:
            raise ConfigError("solver.r_max: hyperbolic cone needs r_max < 1")
        if sol["r_min"] != "auto" and sol["r_min"] >= r_max:
            raise ConfigError("solver.r_min: must be below solver.r_max")
    if sol["r_min"] == 0.0 and sol["inner_boundary"] != "none":
        raise ConfigError("solver.inner_boundary: a disc (r_min = 0) takes no inner boundary")
    if sol["spacing"] == "log":
        if sol["r_min"] == 0.0:
            raise ConfigError("solver.r_min: log spacing needs r_min > 0")
        if sol["inner_boundary"] != "none":
            raise ConfigError("solver.inner_boundary: a log grid has a regular centre, "
                              "no inner boundary")
        if sol["scheme"] == "explicit":
            raise ConfigError("solver.scheme: explicit steps on a log grid scale with "
                              "r_min^2; use semi-implicit")
    elif sol["r_min"] not in ("auto", 0.0) and sol["inner_boundary"] == "none":
        raise ConfigError("solver.inner_boundary: an annulus (r_min > 0) needs 'fixed'")

    _number(cfg, "probes.t_min", lo=0.0, open_lo=True)
    _number(cfg, "probes.count", lo=2, integer=True)
    if cfg["probes"]["t_min"] >= sol["t_end"]:
        raise ConfigError("probes.t_min: must be below solver.t_end")
    _number(cfg, "smoothening.gap_t_min", lo=0.0)
    _number(cfg, "smoothening.gap_tol", lo=0.0, open_lo=True)
    _number_list(cfg, "decay.window", length=2, increasing=True)
    _number(cfg, "decay.deepen", lo=0.0, open_lo=True)
    _number(cfg, "barrier.C")
    _number_list(cfg, "barrier.window", length=2, increasing=True)
    if cfg["barrier"]["window"][0] <= 0.0:
        raise ConfigError("barrier.window: times must be positive")
    u = cfg["uniqueness"]
    if not isinstance(u["enabled"], bool):
        raise ConfigError("uniqueness.enabled: expected true or false")
    _number_list(cfg, "uniqueness.schedule_a", increasing=True)
    _number_list(cfg, "uniqueness.schedule_b", increasing=True)
    _number_list(cfg, "uniqueness.t0")
    _number_list(cfg, "uniqueness.window", length=2, increasing=True)
    _number(cfg, "uniqueness.deepen", lo=0.0, open_lo=True)
    if u["enabled"] and set(u["schedule_a"]) == set(u["schedule_b"]):
        raise ConfigError("uniqueness.schedule_b: schedules share all levels (degenerate)")
    _number(cfg, "simulate.level", auto=True)
    _number(cfg, "validation.n", lo=16, integer=True)
    _number(cfg, "validation.dt_max", lo=0.0, open_lo=True)
    return cfg


def load_config(path=None, overrides=()) -> dict:
    """Read ``path`` (TOML or JSON; optional), apply overrides and resolve."""
    data = load_file(path) if path is not None else {}
    return resolve(apply_overrides(data, overrides))


def config_hash(cfg: dict, command: str = "") -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


# -- building runtime objects ----------------------------------------------------------

def deepest_level(cfg: dict, command: str = "experiment") -> float:
    """Deepest cap level any driver of ``command`` will run (sets the automatic r_min)."""
    levels = list(cfg["levels"])
    if command == "experiment":
        levels.append(max(cfg["levels"]) + cfg["decay"]["deepen"])
        u = cfg["uniqueness"]
        if u["enabled"]:
            levels += [k + u["deepen"] for k in u["schedule_a"] + u["schedule_b"]]
    if command == "simulate" and cfg["simulate"]["level"] != "auto":
        levels.append(cfg["simulate"]["level"])
    return max(levels)


def build_cone(cfg: dict, command: str = "experiment"):
    from .experiments import make_cone

    sol = cfg["solver"]
    r_max = None if sol["r_max"] == "auto" else sol["r_max"]
    r_min = None if sol["r_min"] == "auto" else sol["r_min"]
    if r_min is None and sol["spacing"] == "log" and cfg["beta"] == 0.0:
        raise ConfigError("solver.r_min: automatic r_min needs beta < 0")
    return make_cone(cfg["cone"], cfg["beta"], sol["n"], r_max, sol["spacing"], r_min,
                     deepest_level(cfg, command))


def build_solver(cfg: dict):
    from .solver import BoundarySpec, SolverParams

    sol = cfg["solver"]
    inner = None if sol["inner_boundary"] == "none" else sol["inner_boundary"]
    return SolverParams(t_end=sol["t_end"], scheme=sol["scheme"], cfl=sol["cfl"],
                        store_every=sol["store_every"], dt_max=sol["dt_max"],
                        dt_rel=sol["dt_rel"], boundary=BoundarySpec("fixed", None, inner))


def time_samples(cfg: dict) -> tuple:
    p = cfg["probes"]
    return tuple(float(t) for t in np.geomspace(p["t_min"], cfg["solver"]["t_end"], p["count"]))


def build_experiment(cfg: dict, command: str = "experiment"):
    from .experiments import ExperimentConfig

    return ExperimentConfig(
        cone=build_cone(cfg, command), levels=tuple(cfg["levels"]), solver=build_solver(cfg),
        time_samples=time_samples(cfg), decay_window=tuple(cfg["decay"]["window"]),
        barrier_C=cfg["barrier"]["C"], barrier_window=tuple(cfg["barrier"]["window"]),
        gap_t_min=cfg["smoothening"]["gap_t_min"], gap_tol=cfg["smoothening"]["gap_tol"])
