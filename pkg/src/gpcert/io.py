"""JSON model files, job files and reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .data import read_csv
from .kernels import kernel_from_dict
from .model import GpModel

__all__ = [
    "MODEL_SCHEMA",
    "JOB_SCHEMA",
    "ModelFileError",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "reference_values",
    "Job",
    "load_job",
    "dumps",
]

REF_TOL = 1e-6

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["X", "S", "t", "task"],
    "properties": {
        "format": {"const": "gpcert-model"},
        "kernel": {"type": "object", "required": ["family"]},
        "kernels": {"type": "array", "items": {"type": "object", "required": ["family"]}, "minItems": 1},
        "X": _matrix,
        "S": _matrix,
        "t": {"oneOf": [_vector, _matrix]},
        "task": {"enum": ["regression", "binary", "multiclass"]},
        "link": {"enum": [None, "probit", "logistic", "softmax"]},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "noise": {"type": ["number", "null"]},
        "classes": {"type": "array"},
        "reference_predictions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["x", "value"],
                "properties": {"x": _vector, "value": _vector},
            },
        },
    },
    "oneOf": [{"required": ["kernel"]}, {"required": ["kernels"]}],
}

JOB_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"type": "string"},
        "points": _matrix,
        "dataset": {"type": "string"},
        "indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "gammas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "M": {"type": ["integer", "null"], "minimum": 1},
        "features": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "mode": {"enum": ["certify", "delta", "interpret", "attack", "safety-curve"]},
        "seed": {"type": "integer"},
        "delta": {"type": "number", "minimum": 0},
        "norm": {"enum": ["inf", "2", "1"]},
        "split": {"enum": ["random", "widest"]},
        "likelihood": {"enum": ["closed", "discretized"]},
        "steps": {"type": "integer", "minimum": 1},
        "budgets": {
            "type": "object",
            "properties": {
                "max_iter": {"type": "integer", "minimum": 1},
                "max_time": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


class ModelFileError(ValueError):
    pass


def model_to_dict(model: GpModel, classes=None, references=None) -> dict:
    classes = model.classes if classes is None else classes
    kern = [k.to_dict() for k in model.kernels]
    out = {"format": "gpcert-model"}
    if len(kern) == 1:
        out["kernel"] = kern[0]
    else:
        out["kernels"] = kern
    out.update({
        "X": model.X.tolist(),
        "S": model.S.tolist(),
        "t": model.t.tolist(),
        "task": model.task,
        "link": model.link,
        "lambda": model.lam,
        "noise": model.noise,
    })
    if classes is not None:
        out["classes"] = list(classes)
    if references is not None:
        out["reference_predictions"] = [
            {"x": np.asarray(x, float).tolist(), "value": np.asarray(v, float).tolist()} for x, v in references
        ]
    return out


def reference_values(model: GpModel, Xs) -> np.ndarray:
    """What reference predictions record: class probabilities or output means."""
    Xs = np.atleast_2d(Xs)
    if model.task == "regression":
        return np.stack([model.mean(Xs, c) for c in range(model.m)], axis=1)
    return model.class_prob(Xs)


def model_from_dict(doc: dict, verify: bool = True) -> GpModel:
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ModelFileError(f"model file does not match the schema: {exc.message}") from exc
    specs = doc["kernels"] if "kernels" in doc else None
    t = np.atleast_2d(np.asarray(doc["t"], dtype=float))
    if specs is None:
        specs = [doc["kernel"]] * t.shape[0]
    try:
        kernels = [kernel_from_dict(s) for s in specs]
        model = GpModel(kernels, np.asarray(doc["X"], float), np.asarray(doc["S"], float), t,
                        doc["task"], doc.get("link"), float(doc.get("lambda", 1.0)), doc.get("noise"),
                        doc.get("classes"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid model: {exc}") from exc
    refs = doc.get("reference_predictions") or []
    if verify and refs:
        Xs = np.array([r["x"] for r in refs], dtype=float)
        if Xs.shape[1] != model.d:
            raise ModelFileError("reference point dimension does not match the model")
        want = np.array([r["value"] for r in refs], dtype=float)
        got = reference_values(model, Xs)
        if got.shape != want.shape or np.abs(got - want).max() > REF_TOL:
            raise ModelFileError("reference predictions are not reproduced by the model")
    return model


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def save_model(path, model: GpModel, classes=None, references=None):
    Path(path).write_text(dumps(model_to_dict(model, classes, references)))


def load_model(path, verify: bool = True) -> GpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(doc, verify)


@dataclass
class Job:
    model: str | None = None
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    gammas: list = field(default_factory=lambda: [0.1])
    epsilon: float = 0.01
    M: int | None = None
    features: list | None = None
    mode: str = "certify"
    seed: int = 0
    delta: float = 0.1
    norm: str = "inf"
    split: str = "random"
    likelihood: str = "closed"
    steps: int = 20
    max_iter: int = 10_000
    max_time: float = float("inf")


def load_job(path) -> Job:
    """Parse and validate a job file; paths inside it are relative to the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read job {path}: {exc}") from exc
    try:
        jsonschema.validate(doc, JOB_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ModelFileError(f"job file does not match the schema: {exc.message}") from exc
    base = path.parent
    job = Job()
    if "model" in doc:
        mp = base / doc["model"]
        if not mp.exists():
            raise ModelFileError(f"model file {mp} does not exist")
        job.model = str(mp)
    pts = [np.atleast_2d(np.asarray(doc["points"], dtype=float))] if doc.get("points") else []
    if "dataset" in doc:
        dp = base / doc["dataset"]
        if not dp.exists():
            raise ModelFileError(f"dataset {dp} does not exist")
        X, _, _, _ = read_csv(dp)
        idx = doc.get("indices", list(range(X.shape[0])))
        if idx and max(idx) >= X.shape[0]:
            raise ModelFileError("dataset index out of range")
        pts.append(X[idx])
    pts = [p for p in pts if p.size]
    job.points = np.vstack(pts) if pts else np.zeros((0, 0))
    for key in ("gammas", "epsilon", "M", "features", "mode", "seed", "delta", "norm", "split",
                "likelihood", "steps"):
        if key in doc:
            setattr(job, key, doc[key])
    budgets = doc.get("budgets", {})
    job.max_iter = budgets.get("max_iter", job.max_iter)
    job.max_time = budgets.get("max_time", job.max_time)
    return job
