"""Run configuration: JSON schema, defaults and cross-field checks.

A configuration is a JSON object.  Only ``model`` and ``kernels`` are
required; every other block is filled from :data:`DEFAULTS`.  Loading
validates the raw document against :data:`SCHEMA`, merges the defaults and
then builds the typed objects, so that every inconsistency surfaces as a
:class:`ConfigError` before any computation starts.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .kernel import KernelSpec, discretize
from .model import ModelParams

_number_list = {"type": "array", "items": {"type": "number"}}
_kernel = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["gaussian", "laplace", "uniform", "tabulated"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "offsets": _number_list,
        "weights": _number_list,
        "csv": {"type": "string"},
    },
    "allOf": [
        {"if": {"properties": {"family": {"const": "gaussian"}}}, "then": {"required": ["sigma"]}},
        {"if": {"properties": {"family": {"const": "laplace"}}}, "then": {"required": ["beta"]}},
        {"if": {"properties": {"family": {"const": "uniform"}}}, "then": {"required": ["h"]}},
        {"if": {"properties": {"family": {"const": "tabulated"}}},
         "then": {"anyOf": [{"required": ["csv"]}, {"required": ["offsets", "weights"]}]}},
    ],
    "additionalProperties": False,
}


def _block(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}

SCHEMA = _block({
    "model": _block({
        "r1": _num, "r2": _num, "m": {"type": "integer", "minimum": 0},
        "a": _number_list, "e": _number_list, "b": _number_list, "f": _number_list,
    }, required=("r1", "r2")),
    "kernels": {"type": "array", "items": _kernel, "minItems": 2, "maxItems": 2},
    "grid": _block({"x_min": _num, "x_max": _num, "dx": _pos, "mass_tol": _pos}),
    "simulation": _block({
        "steps": _int_pos,
        "initial": _block({"center": _num, "half_width": {"type": "number", "minimum": 0},
                           "X": {"type": "number", "minimum": 0},
                           "Y": {"type": "number", "minimum": 0}}),
        "threshold": {"anyOf": [{"type": "null"},
                                {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}]},
        "boundary": {"enum": ["extend", "zero"]},
        "snapshot_every": {"anyOf": [{"type": "null"}, _int_pos]},
        "guard_radii": {"anyOf": [{"type": "null"}, _pos]},
        "window_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "speed_tol": _pos,
    }),
    "wave": {
        **_block({"c": {"anyOf": [{"type": "null"}, _pos]},
                  "c_multiplier": {"anyOf": [{"type": "null"}, _pos]}}),
        "not": {"properties": {"c": {"type": "number"}, "c_multiplier": {"type": "number"}},
                "required": ["c", "c_multiplier"]},
    },
    "profile": _block({
        "t_min": _num, "t_max": _num, "dt": _pos, "tol": _pos, "max_iter": _int_pos,
        "theta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "clamp": {"type": "boolean"}, "limit_tol": _pos, "right_rel_tol": _pos,
        "residual_tol": _pos,
    }),
    "bounds": _block({"t_min": _num, "t_max": _num, "dt": _pos, "rho_factor": _pos}),
    "rectangle": _block({
        "eps": _pos, "samples": _int_pos, "min_eps": _pos, "starts": {"type": "integer", "minimum": 0},
        "start_s": {"type": "number", "minimum": 0, "maximum": 1}, "tol": _pos,
        "max_steps": _int_pos,
    }),
    "spread": _block({
        "species": {"enum": [1, 2]}, "steps": _int_pos, "x_min": _num, "x_max": _num, "dx": _pos,
        "half_width": _pos, "amplitude": _pos, "fraction": _pos, "level": _pos,
    }),
    "sweep": _block({
        "grid": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
        "tasks": {"type": "array",
                  "items": {"enum": ["wavespeed", "simulate", "rectangle", "profile"]}},
    }),
    "output": {"type": "string"},
    "seed": {"type": "integer"},
}, required=("model", "kernels"))

DEFAULTS = {
    "grid": {"x_min": -200.0, "x_max": 200.0, "dx": 0.1, "mass_tol": 1e-10},
    "simulation": {
        "steps": 150,
        "initial": {"center": -190.0, "half_width": 2.0, "X": 0.5, "Y": 0.5},
        "threshold": None,
        "boundary": "extend",
        "snapshot_every": None,
        "guard_radii": 10.0,
        "window_fraction": 0.5,
        "speed_tol": 0.05,
    },
    "wave": {"c": None, "c_multiplier": None},
    "profile": {
        "t_min": -60.0, "t_max": 30.0, "dt": 0.05, "tol": 1e-10, "max_iter": 10_000,
        "theta": 1.0, "clamp": True, "limit_tol": 1e-4, "right_rel_tol": 0.01,
        "residual_tol": 1e-6,
    },
    "bounds": {"t_min": -60.0, "t_max": 20.0, "dt": 0.05, "rho_factor": 1.0},
    "rectangle": {"eps": 0.01, "samples": 101, "min_eps": 1e-6, "starts": 100, "start_s": 0.2,
                  "tol": 1e-8, "max_steps": 10_000},
    "spread": {"species": 1, "steps": 150, "x_min": -250.0, "x_max": 250.0, "dx": 0.1,
               "half_width": 2.0, "amplitude": 0.5, "fraction": 0.8, "level": 0.9},
    "sweep": {"grid": {}, "tasks": ["wavespeed", "rectangle"]},
    "output": "coinvade_out",
    "seed": 0,
}
DEFAULT_C_MULTIPLIER = 1.2


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending entry."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class RunConfig:
    """A validated configuration with its typed model and kernels."""

    raw: dict
    params: ModelParams
    kernels: tuple[KernelSpec, KernelSpec]
    base_dir: Path

    def block(self, name: str) -> dict:
        return self.raw[name]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output(self) -> Path:
        path = Path(self.raw["output"])
        return path if path.is_absolute() else Path.cwd() / path

    def speed(self, c_star: float) -> tuple[float, str]:
        """Target wave speed and how it was chosen."""
        wave = self.raw["wave"]
        if wave.get("c") is not None:
            return float(wave["c"]), "c"
        mult = wave.get("c_multiplier")
        mult = DEFAULT_C_MULTIPLIER if mult is None else float(mult)
        return mult * c_star, f"{mult:g} * c*"


def validate(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Schema-check ``doc``, fill defaults and build the typed objects."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, err.json_path)
    full = _merge(DEFAULTS, doc)
    base_dir = base_dir or Path.cwd()
    try:
        params = ModelParams.from_dict(full["model"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "$.model") from exc
    kernels = []
    for i, kd in enumerate(full["kernels"]):
        try:
            kernels.append(KernelSpec.from_dict(kd, base_dir))
        except (OSError, ValueError, KeyError, IndexError) as exc:
            raise ConfigError(str(exc), f"$.kernels[{i}]") from exc
    full["kernels"] = [k.to_dict() for k in kernels]

    g = full["grid"]
    if not g["x_max"] > g["x_min"]:
        raise ConfigError("x_max must exceed x_min", "$.grid")
    for name in ("profile", "bounds"):
        blk = full[name]
        if not blk["t_max"] > blk["t_min"]:
            raise ConfigError("t_max must exceed t_min", f"$.{name}")
    sp = full["spread"]
    if not sp["x_max"] > sp["x_min"]:
        raise ConfigError("x_max must exceed x_min", "$.spread")
    for name, path in (("profile", "dt"), ("bounds", "dt"), ("grid", "dx"), ("spread", "dx")):
        spacing = full[name][path]
        for i, k in enumerate(kernels):
            try:
                discretize(k, spacing, full["grid"]["mass_tol"])
            except ValueError as exc:
                raise ConfigError(f"kernel {i + 1} incompatible with {name}.{path}={spacing}: {exc}",
                                  f"$.{name}.{path}") from exc
    return RunConfig(full, params, (kernels[0], kernels[1]), base_dir)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return validate(doc, path.parent)


def set_dotted(doc: dict, key: str, value) -> None:
    """Assign ``value`` at a dotted path such as ``model.b.0``."""
    parts = key.split(".")
    node = doc
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"bad list index {part!r} in sweep key {key!r}") from exc
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[part] = value
            else:
                if part not in node:
                    raise ConfigError(f"sweep key {key!r}: no entry {part!r}")
                node = node[part]
        else:
            raise ConfigError(f"sweep key {key!r} descends into a scalar")


def jsonable(obj):
    """Recursively convert to plain JSON types, mapping non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item) and getattr(obj, "ndim", 1) == 0:
        obj = obj.item()
    if hasattr(obj, "tolist"):
        return jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
