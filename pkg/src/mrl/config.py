"""Experiment configuration: JSON schema (version 1), defaults, overrides, hashing."""

import copy
import hashlib
import json

import jsonschema

from .errors import ValidationError

PIPELINES = (
    "simulate",
    "lift",
    "solve",
    "malliavin",
    "eigen_tail",
    "roughness",
    "smallball",
    "density",
    "jacobian_probe",
    "hormander_check",
    "check_assumptions",
)

DIFFUSION_IDS = ("identity", "constant", "trig_perturbed", "rotating", "tanh_1d")
FIELD_IDS = ("coordinate", "hormander_pair", "degenerate_pair", "trig_pair", "scalar_linear", "drift", "linear")

_num_list = {"type": "array", "items": {"type": "number"}}
_pos_list = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "pipeline"],
    "properties": {
        "version": {"const": 1},
        "pipeline": {"enum": list(PIPELINES)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "n_paths": {"type": "integer", "minimum": 1, "maximum": 10**8},
        "N": {"type": "integer", "minimum": 2, "maximum": 2**20},
        "N_coarse": {"type": "integer", "minimum": 1, "maximum": 2**20},
        "t": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "batch_size": {"type": "integer", "minimum": 1, "maximum": 100000},
        "alarm_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "x0": _num_list,
        "y0": _num_list,
        "diffusion": {
            "type": "object",
            "additionalProperties": False,
            "required": ["catalog_id", "d"],
            "properties": {
                "catalog_id": {"enum": list(DIFFUSION_IDS)},
                "d": {"type": "integer", "minimum": 1, "maximum": 8},
                "params": _num_list,
                "convention": {"enum": ["half_divergence", "full_divergence"]},
                "scheme": {"enum": ["euler", "milstein"]},
            },
        },
        "fields": {
            "type": "object",
            "additionalProperties": False,
            "required": ["catalog_id"],
            "properties": {
                "catalog_id": {"enum": list(FIELD_IDS)},
                "params": _num_list,
            },
        },
        "estimators": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_grid": _pos_list,
                "theta": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
                "n_max": {"type": "integer", "minimum": 1, "maximum": 20},
                "k": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "sphere_mesh": {"type": "integer", "minimum": 8, "maximum": 100000},
                "s": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "bridge": {"type": "boolean"},
                "min_hits": {"type": "integer", "minimum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "v": _num_list,
                "eta": {"type": "number", "minimum": 0, "maximum": 1},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "grid_points": {"type": "integer", "minimum": 3, "maximum": 401},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "n_triples": {"type": "integer", "minimum": 1, "maximum": 10**6},
            },
        },
        "hormander": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x": _num_list,
                "k0": {"type": "integer", "minimum": 0, "maximum": 8},
                "svd_tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "budget": {"type": "integer", "minimum": 1},
            },
        },
        "assumptions": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "box": {"type": "number", "exclusiveMinimum": 0},
                "points_per_axis": {"type": "integer", "minimum": 1, "maximum": 201},
                "n_directions": {"type": "integer", "minimum": 1, "maximum": 10**5},
                "contraction": {"enum": ["left_contract", "right_contract"]},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "n_paths": 100,
    "N": 1024,
    "N_coarse": 1024,
    "t": 1.0,
    "batch_size": 64,
    "alarm_fraction": 0.01,
    "diffusion": {"catalog_id": "identity", "d": 2, "params": [], "convention": "half_divergence",
                  "scheme": "euler"},
    "fields": {"catalog_id": "hormander_pair", "params": []},
    "estimators": {
        "eps_grid": [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001],
        "theta": 0.7,
        "n_max": 8,
        "k": 0.5,
        "sphere_mesh": 64,
        "s": 0.0,
        "delta": 1.0,
        "bridge": True,
        "min_hits": 30,
        "beta": 0.25,
        "eta": 0.05,
        "radius": 3.0,
        "grid_points": 41,
        "alpha": 0.45,
        "n_triples": 1000,
    },
    "hormander": {"k0": 2, "svd_tol": 1e-8, "budget": 100000},
    "assumptions": {"box": 2.0, "points_per_axis": 9, "n_directions": 10000, "contraction": "left_contract"},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _error_message(err):
    where = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "required":
        return f"missing field: {err.message}"
    return f"{where}: {err.message}"


def validate(config):
    """Schema validation plus cross-field rules; returns the config with defaults filled."""
    if not isinstance(config, dict):
        raise ValidationError("config must be a JSON object")
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        raise ValidationError("; ".join(_error_message(e) for e in errors))
    cfg = _merge(DEFAULTS, config)
    if "fields" not in config and cfg["diffusion"]["d"] != 2:
        # the default Hörmander pair needs d = 2; coordinate fields exist in every dimension
        cfg["fields"] = {"catalog_id": "coordinate", "params": []}
    N, Nc = cfg["N"], cfg["N_coarse"]
    if N & (N - 1):
        raise ValidationError(f"N: {N} is not a power of two")
    if Nc > N or N % Nc:
        raise ValidationError(f"N_coarse: {Nc} does not divide N = {N}")
    d = cfg["diffusion"]["d"]
    for key in ("x0", "y0"):
        if key in cfg and len(cfg[key]) != d:
            raise ValidationError(f"{key}: expected {d} coordinates, got {len(cfg[key])}")
    est = cfg["estimators"]
    if est["s"] + est["delta"] > 1 + 1e-12:
        raise ValidationError("estimators: s + delta must not exceed 1")
    if cfg["pipeline"] == "roughness" and 2 ** est["n_max"] > N:
        raise ValidationError(f"estimators.n_max: 2^{est['n_max']} exceeds N = {N}")
    if "v" in est and len(est["v"]) != d:
        raise ValidationError(f"estimators.v: expected {d} coordinates")
    if "x" in cfg["hormander"] and len(cfg["hormander"]["x"]) != d:
        raise ValidationError(f"hormander.x: expected {d} coordinates")
    return cfg


def parse_override(text):
    """``a.b.c=value`` with the value parsed as JSON when possible, else as a string."""
    if "=" not in text:
        raise ValidationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(config, overrides):
    cfg = copy.deepcopy(config)
    for text in overrides or ():
        path, value = parse_override(text)
        node = cfg
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"override path {'.'.join(path)} crosses a non-object")
        node[path[-1]] = value
    return cfg


def read_raw(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return raw


def load_config(path, overrides=()):
    return validate(apply_overrides(read_raw(path), overrides))


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
