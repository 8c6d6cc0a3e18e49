"""Experiment configuration: JSON schema, defaults and conversion to objects.

A configuration is a JSON object with ``schema_version``, a ``system``
block of :class:`~quadmech.params.SystemParams` fields, a ``grid`` block,
task blocks (``protocol``, ``reconstruction``, ``monte_carlo``, ``rates``),
``seed`` and ``output``. Unknown keys are rejected at every level. After
validation every block a command uses is filled with its defaults; the
result is the *effective* configuration, which validates again unchanged.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .errors import ConfigError
from .params import SystemParams

SCHEMA_VERSION = 1

NUM = {"type": "number"}
POS = {"type": "number", "exclusiveMinimum": 0}
NONNEG = {"type": "number", "minimum": 0}
INT_POS = {"type": "integer", "minimum": 1}
BOOL = {"type": "boolean"}


def _nullable(schema):
    return {"anyOf": [schema, {"type": "null"}]}


_SYS_DEFAULTS = SystemParams()
SYSTEM = {
    f.name: (_nullable(NONNEG) if f.name == "chi_m" else NONNEG, getattr(_SYS_DEFAULTS, f.name))
    for f in dataclasses.fields(SystemParams)
}

FREQ = {
    "min": (_nullable(NUM), None),
    "max": (_nullable(NUM), None),
    "n_points": (INT_POS, 601),
    "center_n": (NONNEG, 0.0),
}

GRID = {
    "n_max": ({"type": "integer", "minimum": 8}, 200),
    "freq": (None, None),  # filled below
    "l_max": ({"type": "integer", "minimum": 0, "maximum": 20}, 6),
    "charge_nodes": (INT_POS, 351),
    "charge_method": ({"enum": ["trapezoid", "gauss-hermite"]}, "trapezoid"),
    "psf_kind": ({"enum": ["synthetic", "identity"]}, "synthetic"),
    "psf_file": (_nullable({"type": "string"}), None),
}

BLUE = {
    "Omega_B0": (NONNEG, 0.089),
    "chirp_rate": (NONNEG, 38.5),
    "n_B0": (NUM, -1.3),
    "t_knots": (_nullable({"type": "array", "items": NUM, "minItems": 1}), None),
    "n_knots": (_nullable({"type": "array", "items": NUM, "minItems": 1}), None),
}

RED = {
    "Omega_R0": (NONNEG, 0.066),
    "n_R": (_nullable(NUM), None),
    "detuning": (_nullable(NUM), None),
}

SPURIOUS = {
    "enabled": (BOOL, False),
    "l_max": ({"type": "integer", "minimum": 1, "maximum": 11}, 10),
    "charge_average": (BOOL, True),
}

PROTOCOL = {
    "duration": (POS, 1.0),
    "blue": (None, None),
    "red": (None, None),
    "spurious": (None, None),
    "dt": (_nullable(POS), None),
    "sample_interval": (POS, 0.02),
    "sample_taus": (_nullable({"type": "array", "items": NONNEG}), None),
    "residual_decay": (BOOL, False),
    "initial_n_th": (_nullable(NONNEG), None),
}

RL = {"enabled": (BOOL, True), "iterations": ({"type": "integer", "minimum": 0}, 3000), "tol": (NONNEG, 1e-12)}
THERMAL = {
    "enabled": (BOOL, False),
    "n_th_min": (NONNEG, 0.0),
    "n_th_max": (POS, 40.0),
    "shift_window": (NONNEG, 5.0),
}
DISPLACED = {
    "enabled": (BOOL, False),
    "n_th": (_nullable(NONNEG), None),
    "n_disp_max": (POS, 100.0),
    "shift": (NUM, 0.0),
}
BOOTSTRAP = {
    "resamples": ({"type": "integer", "minimum": 0}, 0),
    "level": ({"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, 0.9),
    "statistic": ({"enum": ["mean", "fano", "n_th", "n_disp"]}, "fano"),
}
RECON = {
    "spectrum": ({"type": "string"}, None),
    "rl": (None, None),
    "thermal": (None, None),
    "displaced": (None, None),
    "bootstrap": (None, None),
}

NOISE = {
    "model": ({"enum": ["polynomial", "none"]}, "polynomial"),
    "c0": (NUM, 1e-3),
    "c1": (NUM, 0.05),
    "c2": (NUM, 0.0),
    "traces": (_nullable({"type": "string"}), None),
}
MONTE = {
    "mean": (POS, 43.0),
    "f_true": ({"type": "array", "items": POS, "minItems": 1}, [round(0.16 + 0.02 * i, 2) for i in range(15)]),
    "n_sims": (INT_POS, 300),
    "n_averages": (INT_POS, 916),
    "noise": (None, None),
    "window": ({"type": "array", "items": NUM, "minItems": 2, "maxItems": 2}, [0.255, 0.265]),
    "levels": ({"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}, [0.95, 0.99]),
    "rl_iterations": ({"type": "integer", "minimum": 1}, 3000),
    "rl_tol": (NONNEG, 1e-12),
}
RATES = {
    "n_min": ({"type": "integer", "minimum": 0}, 0),
    "n_max": ({"type": "integer", "minimum": 0}, 150),
    "orders": ({"type": "array", "items": {"type": "integer"}}, [-2, -1, 0, 1, 2]),
    "Omega_B0": (NONNEG, 0.089),
    "Omega_R0": (NONNEG, 0.066),
}

TOP = {
    "schema_version": ({"const": SCHEMA_VERSION}, SCHEMA_VERSION),
    "system": (None, None),
    "grid": (None, None),
    "protocol": (None, None),
    "reconstruction": (None, None),
    "monte_carlo": (None, None),
    "rates": (None, None),
    "seed": ({"type": "integer", "minimum": 0, "maximum": 2**64 - 1}, 0),
    "output": ({"type": "string"}, "out"),
    "description": ({"type": "string"}, ""),
}


def _closed(props: dict, required=()) -> dict:
    return {
        "type": "object",
        "properties": {k: s for k, (s, _) in props.items()},
        "required": list(required),
        "additionalProperties": False,
    }


def _build_schema() -> dict:
    grid = dict(GRID, freq=(_closed(FREQ), None))
    protocol = dict(
        PROTOCOL,
        blue=(_nullable(_closed(BLUE)), None),
        red=(_nullable(_closed(RED)), None),
        spurious=(_closed(SPURIOUS), None),
    )
    recon = dict(
        RECON,
        rl=(_closed(RL), None),
        thermal=(_closed(THERMAL), None),
        displaced=(_closed(DISPLACED), None),
        bootstrap=(_closed(BOOTSTRAP), None),
    )
    monte = dict(MONTE, noise=(_closed(NOISE), None))
    top = dict(
        TOP,
        system=(_closed(SYSTEM), None),
        grid=(_closed(grid), None),
        protocol=(_closed(protocol), None),
        reconstruction=(_closed(recon, required=["spectrum"]), None),
        monte_carlo=(_closed(monte), None),
        rates=(_closed(RATES), None),
    )
    return _closed(top, required=["schema_version"])


SCHEMA = _build_schema()

#: Nested defaults: block -> (field table, sub-block tables).
_TREE = {
    "system": (SYSTEM, {}),
    "grid": (GRID, {"freq": FREQ}),
    "protocol": (PROTOCOL, {"spurious": SPURIOUS}),
    "reconstruction": (RECON, {"rl": RL, "thermal": THERMAL, "displaced": DISPLACED, "bootstrap": BOOTSTRAP}),
    "monte_carlo": (MONTE, {"noise": NOISE}),
    "rates": (RATES, {}),
}
#: Optional sub-blocks that get defaults only when present and not null.
_OPTIONAL_SUB = {"protocol": {"blue": BLUE, "red": RED}}

COMMAND_BLOCKS = {
    "psf": ("system", "grid"),
    "simulate": ("system", "grid", "protocol"),
    "reconstruct": ("system", "grid", "reconstruction"),
    "fano-bound": ("system", "grid", "monte_carlo"),
    "rates": ("system", "rates"),
}


def _fill(block: dict, table: dict) -> dict:
    """Add missing scalar defaults; sub-blocks (schema ``None``) are left to the caller."""
    out = dict(block)
    for k, (schema, default) in table.items():
        if k not in out and schema is not None and k != "spectrum":
            out[k] = copy.deepcopy(default)
    return out


def validate(config: dict) -> None:
    """Schema-check ``config``; raises :class:`ConfigError` naming the field."""
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {exc.message}") from None


def effective_config(config: dict, command: Optional[str] = None) -> dict:
    """Validate and return a copy with defaults filled for the blocks ``command`` uses."""
    validate(config)
    out = _fill(config, TOP)
    blocks = COMMAND_BLOCKS.get(command, tuple(k for k in _TREE if k in config))
    for name in blocks:
        table, subs = _TREE[name]
        if name == "reconstruction" and name not in out:
            raise ConfigError(f"config field reconstruction: required by the {command} command")
        block = _fill(out.get(name, {}), table)
        for sub, sub_table in subs.items():
            block[sub] = _fill(block.get(sub, {}), sub_table)
        for sub, sub_table in _OPTIONAL_SUB.get(name, {}).items():
            if block.get(sub) is not None:
                block[sub] = _fill(block[sub], sub_table)
            else:
                block[sub] = None
        out[name] = block
    validate(out)
    _semantic_checks(out)
    return out


def _semantic_checks(cfg: dict) -> None:
    proto = cfg.get("protocol")
    if proto:
        red = proto.get("red")
        if red is not None and (red.get("n_R") is None) == (red.get("detuning") is None):
            raise ConfigError("config field protocol/red: give exactly one of n_R or detuning")
        blue = proto.get("blue")
        if blue is not None and (blue.get("t_knots") is None) != (blue.get("n_knots") is None):
            raise ConfigError("config field protocol/blue: t_knots and n_knots go together")
        if proto.get("spurious", {}).get("enabled") and blue is None:
            raise ConfigError("config field protocol/spurious: requires a blue drive")
    mc = cfg.get("monte_carlo")
    if mc and mc["window"][0] > mc["window"][1]:
        raise ConfigError("config field monte_carlo/window: lower edge above upper edge")
    rates_ = cfg.get("rates")
    if rates_ and rates_["n_min"] > rates_["n_max"]:
        raise ConfigError("config field rates/n_min: above rates/n_max")
    if "system" in cfg:
        system_params(cfg)


def load(path) -> dict:
    """Read a JSON config file (no defaults applied)."""
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def preset_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("quadmech.presets").iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    """Load a bundled preset by name (e.g. ``"fig3_squeeze"``)."""
    res = resources.files("quadmech.presets") / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(res.read_text())


# --------------------------------------------------------------------------
# Conversion to domain objects
# --------------------------------------------------------------------------


def system_params(cfg: dict) -> SystemParams:
    try:
        return SystemParams(**cfg.get("system", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field system: {exc}") from None


def frequency_grid(cfg: dict, params: SystemParams) -> np.ndarray:
    from .spectra import default_frequency_grid

    f = cfg["grid"]["freq"]
    if f.get("min") is None or f.get("max") is None:
        if f.get("min") is not None or f.get("max") is not None:
            raise ConfigError("config field grid/freq: set both min and max, or neither")
        return default_frequency_grid(params, f["center_n"], f["n_points"])
    if not f["max"] > f["min"]:
        raise ConfigError("config field grid/freq/max: must exceed grid/freq/min")
    return np.linspace(f["min"], f["max"], f["n_points"])


def protocol(cfg: dict, params: SystemParams):
    """Build a :class:`~quadmech.dynamics.SidebandProtocol` from the protocol block."""
    from . import dynamics

    p = cfg["protocol"]
    blue = red = None
    b = p.get("blue")
    if b is not None:
        if b.get("t_knots") is not None:
            sched = dynamics.ChirpSchedule(tuple(b["t_knots"]), tuple(b["n_knots"]))
        else:
            sched = dynamics.ChirpSchedule.linear(b["n_B0"], b["chirp_rate"], p["duration"])
        blue = dynamics.BlueDrive(b["Omega_B0"], sched)
    r = p.get("red")
    if r is not None:
        n_R = r["n_R"]
        if n_R is None:
            if b is None:
                raise ConfigError("config field protocol/red/detuning: needs a blue drive to anchor n_R")
            n_R = dynamics.n_R_from_detuning(params, b["n_B0"], r["detuning"])
        red = dynamics.RedDrive(r["Omega_R0"], float(n_R))
    s = p["spurious"]
    spur = dynamics.SpuriousSpec(s["enabled"], s["l_max"], s["charge_average"])
    try:
        return dynamics.SidebandProtocol(p["duration"], blue, red, spur)
    except ValueError as exc:
        raise ConfigError(f"config field protocol: {exc}") from None
