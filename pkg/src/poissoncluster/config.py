"""Experiment configuration: JSON schema, defaults and model construction."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .measures import (BumpDensity, ClusterLaw, ClusterProcessModel, ExchangeableGaussian, ExpWeight,
                       FixedOffsets, GaussianPoints, HeavyTailPoints, Lebesgue)

SCHEMA_VERSION = 1

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_window = {
    "type": "object",
    "properties": {"lower": _vec, "upper": _vec},
    "required": ["lower", "upper"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "poissoncluster experiment",
    "type": "object",
    "required": ["schema_version", "model"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["dimension", "intensity", "cluster"],
            "additionalProperties": False,
            "properties": {
                "dimension": {"type": "integer", "minimum": 1},
                "intensity": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["lebesgue", "expweight", "bump"]},
                        "scale": {"type": "number", "exclusiveMinimum": 0},
                        "center": _vec,
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "total": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "cluster": {
                    "type": "object",
                    "required": ["size_probs", "points"],
                    "additionalProperties": False,
                    "properties": {
                        "size_probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                        "points": {
                            "type": "object",
                            "required": ["kind"],
                            "additionalProperties": False,
                            "properties": {
                                "kind": {"enum": ["gaussian", "exchangeable_gaussian", "heavy_tail", "fixed"]},
                                "sigma": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, _vec]},
                                "corr": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                                "offsets": {"type": "array", "items": _vec, "minItems": 1},
                            },
                        },
                    },
                },
                "numerics": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "eps_trunc": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "quad_rel_tol": {"type": "number", "exclusiveMinimum": 0},
                        "max_centres": {"type": "number", "exclusiveMinimum": 0},
                        "laplace_nodes": {"type": "integer", "minimum": 2},
                        "laplace_clusters": {"type": "integer", "minimum": 2},
                    },
                },
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": _window,
                "n_draws": {"type": "integer", "minimum": 1},
                "mc_samples": {"type": "integer", "minimum": 1},
                "q_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                "functions": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "diffeos": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "integer", "minimum": 1},
                "checkpoints": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
    },
}

DEFAULT_NUMERICS = {"eps_trunc": 1e-4, "quad_rel_tol": 1e-11, "max_centres": 1e7,
                    "laplace_nodes": 64, "laplace_clusters": 4096}
DEFAULT_EXPERIMENT = {
    "window": {"lower": [0.0], "upper": [1.0]},
    "n_draws": 100000,
    "mc_samples": 100000,
    "q_grid": [0.3, 0.6, 0.9],
    "functions": [0, 1, 2],
    "diffeos": [0, 1, 2],
    "T": 1.0,
    "dt": 1e-3,
    "paths": 2000,
    "checkpoints": [0.5, 1.0],
}
DEFAULT_SEED = 20240611


def validate(cfg: dict) -> None:
    """Raise ``jsonschema.ValidationError`` on an invalid config."""
    jsonschema.validate(cfg, SCHEMA)
    m = cfg["model"]
    d = m["dimension"]
    if m["intensity"]["kind"] == "expweight" and d != 1:
        raise jsonschema.ValidationError("expweight intensity needs dimension 1")
    if m["cluster"]["points"]["kind"] == "heavy_tail" and d != 1:
        raise jsonschema.ValidationError("heavy_tail offsets need dimension 1")
    if not np.isclose(sum(m["cluster"]["size_probs"]), 1.0, atol=1e-12):
        raise jsonschema.ValidationError("size_probs must sum to 1")
    w = cfg.get("experiment", {}).get("window")
    if w and (len(w["lower"]) != d or len(w["upper"]) != d):
        raise jsonschema.ValidationError("window dimension does not match the model")


def with_defaults(cfg: dict) -> dict:
    """Validated copy with every default written out explicitly."""
    validate(cfg)
    out = copy.deepcopy(cfg)
    out.setdefault("name", "unnamed")
    out.setdefault("seed", DEFAULT_SEED)
    out["model"]["numerics"] = {**DEFAULT_NUMERICS, **out["model"].get("numerics", {})}
    exp = {**DEFAULT_EXPERIMENT, **out.get("experiment", {})}
    d = out["model"]["dimension"]
    if "window" not in out.get("experiment", {}):
        exp["window"] = {"lower": [0.0] * d, "upper": [1.0] * d}
    out["experiment"] = exp
    return out


def load_config(source) -> dict:
    """Load a config from a path, a bundled name (e.g. ``"gaussian-ex1"``) or a dict."""
    if isinstance(source, dict):
        return with_defaults(source)
    p = Path(source)
    if not p.exists():
        p = resources.files("poissoncluster") / "configs" / f"{Path(source).stem}.json"
    return with_defaults(json.loads(p.read_text()))


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files("poissoncluster") / "configs").iterdir()
                  if p.name.endswith(".json"))


def build_model(cfg: dict) -> ClusterProcessModel:
    m = cfg["model"]
    d = m["dimension"]
    it = m["intensity"]
    if it["kind"] == "lebesgue":
        lam = Lebesgue(d, it.get("scale", 1.0))
    elif it["kind"] == "expweight":
        lam = ExpWeight(d)
    else:
        lam = BumpDensity(np.asarray(it.get("center", [0.0] * d)), it.get("radius", 1.0), it.get("total", 1.0))
    pt = m["cluster"]["points"]
    if pt["kind"] == "gaussian":
        pts = GaussianPoints(pt.get("sigma", 1.0), d)
    elif pt["kind"] == "exchangeable_gaussian":
        pts = ExchangeableGaussian(pt.get("sigma", 1.0), pt.get("corr", 0.5), d,
                                   n_max=len(m["cluster"]["size_probs"]) - 1)
    elif pt["kind"] == "heavy_tail":
        pts = HeavyTailPoints(d)
    else:
        pts = FixedOffsets(np.asarray(pt["offsets"], dtype=float).reshape(-1, d))
    num = {**DEFAULT_NUMERICS, **m.get("numerics", {})}
    return ClusterProcessModel(lam, ClusterLaw(np.asarray(m["cluster"]["size_probs"], dtype=float), pts),
                               eps_trunc=num["eps_trunc"], quad_rel_tol=num["quad_rel_tol"],
                               max_centres=num["max_centres"], laplace_nodes=num["laplace_nodes"],
                               laplace_clusters=num["laplace_clusters"])
