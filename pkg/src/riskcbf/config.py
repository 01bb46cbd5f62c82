"""Experiment configuration: JSON schema, validation and object construction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .constraints import RiskCbfConfig
from .cvar import CvarLevel, QuadraticLoss
from .errors import ValidationError
from .moments import make_moment_set
from .plant import make_plant
from .safe_sets import EllipsoidSet, HalfSpaceSet, PolytopeSet
from .sim import CONTROLLERS, DisturbanceModel, RunSpec

_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MATRIX = {"type": "array", "items": _VECTOR, "minItems": 1}
_EPSILON = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}


def _family_needs(family: str, key: str) -> dict:
    # "required" in the condition stops a missing family from matching every branch
    cond = {"required": ["family"], "properties": {"family": {"const": family}}}
    return {"if": cond, "then": {"required": [key]}}


_SAFE_SET = {
    "type": "object",
    "required": ["family", "r"],
    "properties": {
        "family": {"enum": ["halfspace", "polytope", "ellipsoid"]},
        "q": _VECTOR,
        "Q": _MATRIX,
        "E": _MATRIX,
        "r": {"oneOf": [{"type": "number"}, _VECTOR]},
    },
    "allOf": [_family_needs("halfspace", "q"), _family_needs("polytope", "Q"), _family_needs("ellipsoid", "E")],
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["plant", "safe_set", "risk", "filter", "disturbance", "sim"],
    "properties": {
        "plant": {
            "type": "object",
            "required": ["name", "dt"],
            "properties": {"name": {"type": "string"}, "dt": {"type": "number", "exclusiveMinimum": 0}},
        },
        "safe_set": _SAFE_SET,
        "risk": {
            "type": "object",
            "required": ["epsilon", "alpha"],
            "properties": {"epsilon": _EPSILON, "alpha": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "filter": {
            "type": "object",
            "required": ["rho", "allow_slack", "controller"],
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "allow_slack": {"type": "boolean"},
                "controller": {"enum": list(CONTROLLERS)},
            },
        },
        "disturbance": {
            "type": "object",
            "required": ["kind", "covariance", "seed"],
            "properties": {
                "kind": {"enum": ["zero", "gaussian"]},
                "covariance": _MATRIX,
                "mean": _VECTOR,
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
        },
        "sim": {
            "type": "object",
            "required": ["x0", "steps", "n_runs"],
            "properties": {
                "x0": _VECTOR,
                "steps": {"type": "integer", "minimum": 1},
                "n_runs": {"type": "integer", "minimum": 1},
            },
        },
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}},
    },
}

CVAR_SCHEMA = {
    "type": "object",
    "required": ["loss", "disturbance", "risk"],
    "properties": {
        "loss": {
            "type": "object",
            "properties": {"P": _MATRIX, "q": _VECTOR, "c": _VECTOR, "r": {"type": "number"}},
            "not": {"required": ["q", "c"]},
        },
        "disturbance": {
            "type": "object",
            "required": ["covariance"],
            "properties": {"covariance": _MATRIX, "mean": _VECTOR},
        },
        "risk": {"type": "object", "required": ["epsilon"], "properties": {"epsilon": _EPSILON}},
    },
}

SET_SCHEMA = {"type": "object", "required": ["safe_set"], "properties": {"safe_set": _SAFE_SET}}


def _where(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        return f"{path}.{missing}" if path else missing
    return path or "<root>"


def validate(doc, schema) -> None:
    """Raise :class:`ValidationError` naming the offending field."""
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as err:
        best = jsonschema.exceptions.best_match([err]) or err
        raise ValidationError(f"config field '{_where(best)}': {best.message}") from None


def load_json(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {p}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {p} is not valid JSON: {exc}") from None


def build_safe_set(spec: dict):
    fam = spec["family"]
    if fam == "halfspace":
        r = np.atleast_1d(np.asarray(spec["r"], float))
        if r.size != 1:
            raise ValidationError("config field 'safe_set.r': half-space needs a scalar r")
        return HalfSpaceSet(spec["q"], float(r[0]))
    if fam == "polytope":
        return PolytopeSet(spec["Q"], spec["r"])
    r = np.atleast_1d(np.asarray(spec["r"], float))
    if r.size != 1:
        raise ValidationError("config field 'safe_set.r': ellipsoid needs a scalar r")
    return EllipsoidSet(spec["E"], float(r[0]))


def _moments(dist: dict):
    cov = np.asarray(dist["covariance"], dtype=float)
    mean = dist.get("mean", np.zeros(cov.shape[0]))
    return make_moment_set(mean, cov)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: RunSpec
    n_runs: int
    seed: int
    out_dir: str | None
    raw: dict


def parse_experiment(doc: dict) -> ExperimentConfig:
    validate(doc, EXPERIMENT_SCHEMA)
    try:
        plant = make_plant(doc["plant"]["name"], dt=doc["plant"]["dt"])
        safe_set = build_safe_set(doc["safe_set"])
        ms = _moments(doc["disturbance"])
        cfg = RiskCbfConfig(doc["risk"]["alpha"], CvarLevel(doc["risk"]["epsilon"]), ms)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None
    n = plant.state_dim
    if safe_set.dim != n:
        raise ValidationError(f"config field 'safe_set': set dimension {safe_set.dim} != plant state {n}")
    if ms.dim != n:
        raise ValidationError(f"config field 'disturbance.covariance': dimension {ms.dim} != plant state {n}")
    if len(doc["sim"]["x0"]) != n:
        raise ValidationError(f"config field 'sim.x0': length {len(doc['sim']['x0'])} != plant state {n}")
    d = doc["disturbance"]
    dist = DisturbanceModel(d["kind"], ms if d["kind"] == "gaussian" else None, int(d["seed"]))
    f = doc["filter"]
    spec = RunSpec(
        plant=plant,
        controller=f["controller"],
        safe_set=safe_set,
        cfg=cfg,
        disturbance=dist,
        x0=tuple(float(v) for v in doc["sim"]["x0"]),
        steps=int(doc["sim"]["steps"]),
        rho=float(f["rho"]),
        allow_slack=bool(f["allow_slack"]),
    )
    out = doc.get("output", {}).get("dir")
    return ExperimentConfig(spec, int(doc["sim"]["n_runs"]), int(d["seed"]), out, doc)


def parse_cvar(doc: dict):
    """Return ``(loss, moment_set, level)`` for a standalone CVaR evaluation.

    ``loss.q`` follows ``xi^T P xi + 2 q^T xi + r``; ``loss.c`` may be given
    instead as the plain linear coefficient (``c = 2 q``).
    """
    validate(doc, CVAR_SCHEMA)
    try:
        ms = _moments(doc["disturbance"])
        n = ms.dim
        loss_doc = doc["loss"]
        if "c" in loss_doc:
            q = 0.5 * np.asarray(loss_doc["c"], dtype=float)
        else:
            q = np.asarray(loss_doc.get("q", np.zeros(n)), dtype=float)
        P = np.asarray(loss_doc.get("P", np.zeros((n, n))), dtype=float)
        loss = QuadraticLoss(P, q, loss_doc.get("r", 0.0))
        level = CvarLevel(doc["risk"]["epsilon"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None
    if loss.dim != n:
        raise ValidationError(f"config field 'loss': dimension {loss.dim} != covariance dimension {n}")
    return loss, ms, level
