"""Model and report persistence.

Learned models are stored as JSON with decimal floats at 17 significant
digits, which round-trips 64-bit values exactly and keeps files diff-able.
PSD metrics are stored in eigen form so the spectrum (and therefore the
projection count) is readable without recomputation.
"""

import json
import math
from typing import Tuple, Union

import numpy as np

from .evaluation import EvalReport
from .exceptions import InvalidInputError, ParseError
from .linalg import sym_eig
from .optim import EpochRecord, MahalanobisMetric, ProjectionMatrix
from .regularizers import RegularizerSpec

__all__ = [
    "save_model",
    "load_model",
    "save_training_log",
    "save_report_json",
    "save_report_csv",
]

Model = Union[MahalanobisMetric, ProjectionMatrix]


def format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError("cannot serialize a non-finite value")
    return format(value, ".17g")


def _emit(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(_emit(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + _emit(v) for k, v in value.items()
        ) + "}"
    raise InvalidInputError(f"cannot serialize value of type {type(value).__name__}")


def _regularizer_payload(spec: RegularizerSpec) -> dict:
    return {
        "family": spec.family,
        "form": spec.form,
        "gamma": float(spec.gamma),
        "epsilon": None if spec.epsilon is None else float(spec.epsilon),
    }


def save_model(path, model: Model, regularizer: RegularizerSpec) -> None:
    """Write a learned model as deterministic JSON.

    The bytes depend only on the model values, so identical training runs
    produce identical files.
    """
    if isinstance(model, MahalanobisMetric):
        eig = sym_eig(model.matrix)
        payload = {
            "kind": "mahalanobis",
            "dim": int(model.dim),
            "eigenvalues": [float(w) for w in eig.eigenvalues],
            "eigenvectors_row_major": [
                float(v) for v in eig.eigenvectors.ravel(order="C")
            ],
            "regularizer": _regularizer_payload(regularizer),
            "config_hash": str(model.provenance.get("config_hash", "")),
        }
    elif isinstance(model, ProjectionMatrix):
        payload = {
            "kind": "projection",
            "dim": int(model.dim),
            "num_projections": int(model.num_projections),
            "matrix_row_major": [
                float(v) for v in np.asarray(model.matrix).ravel(order="C")
            ],
            "regularizer": _regularizer_payload(regularizer),
            "config_hash": str(model.provenance.get("config_hash", "")),
        }
    else:
        raise InvalidInputError(
            "model must be a MahalanobisMetric or ProjectionMatrix"
        )
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_emit(payload))
        handle.write("\n")


def _require(payload: dict, key: str):
    if key not in payload:
        raise ParseError(f"model file is missing the '{key}' field")
    return payload[key]


def load_model(path) -> Tuple[Model, RegularizerSpec]:
    """Read a model file back into its in-memory form.

    Returns the model together with the regularizer it was trained under.
    A PSD metric is rebuilt from its eigen form; the reconstruction agrees
    with the trained matrix to float64 round-off.
    """
    with open(path, "r", encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as err:
            raise ParseError(f"model file is not valid JSON: {err}") from None
    if not isinstance(payload, dict):
        raise ParseError("model file must hold a JSON object")
    reg = _require(payload, "regularizer")
    if not isinstance(reg, dict):
        raise ParseError("'regularizer' must be a JSON object")
    try:
        spec = RegularizerSpec(
            family=reg.get("family"),
            form=reg.get("form"),
            gamma=float(reg.get("gamma", 0.0)),
            epsilon=None if reg.get("epsilon") is None else float(reg["epsilon"]),
        )
    except (TypeError, ValueError) as err:
        raise ParseError(f"invalid regularizer record: {err}") from None
    kind = _require(payload, "kind")
    dim = int(_require(payload, "dim"))
    if dim < 1:
        raise ParseError("'dim' must be a positive integer")
    config_hash = str(payload.get("config_hash", ""))
    if kind == "mahalanobis":
        eigenvalues = np.asarray(_require(payload, "eigenvalues"), dtype=np.float64)
        vectors = np.asarray(
            _require(payload, "eigenvectors_row_major"), dtype=np.float64
        )
        if eigenvalues.shape != (dim,) or vectors.shape != (dim * dim,):
            raise ParseError("eigen fields do not match 'dim'")
        u = vectors.reshape(dim, dim)
        m = (u * eigenvalues) @ u.T
        m = (m + m.T) / 2.0
        model: Model = MahalanobisMetric(
            dim=dim, matrix=m, provenance={"config_hash": config_hash}
        )
    elif kind == "projection":
        rows = int(_require(payload, "num_projections"))
        flat = np.asarray(_require(payload, "matrix_row_major"), dtype=np.float64)
        if rows < 1 or flat.shape != (rows * dim,):
            raise ParseError("projection fields do not match their shape")
        model = ProjectionMatrix(
            num_projections=rows,
            dim=dim,
            matrix=flat.reshape(rows, dim),
            provenance={"config_hash": config_hash},
        )
    else:
        raise ParseError(f"unknown model kind '{kind}'")
    return model, spec


def save_training_log(path, history) -> None:
    """Write the per-epoch log as CSV (epoch, objective, penalty, rank)."""
    lines = ["epoch,objective,regularizer_value,rank"]
    for record in history:
        if not isinstance(record, EpochRecord):
            raise InvalidInputError("history entries must be EpochRecord values")
        lines.append(
            f"{record.epoch},{format_float(record.objective)},"
            f"{format_float(record.regularizer_value)},{record.rank}"
        )
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines))
        handle.write("\n")


def save_report_json(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_emit(report.to_dict()))
        handle.write("\n")


def save_report_csv(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(report.csv_header())
        handle.write("\n")
        handle.write(report.csv_row())
        handle.write("\n")
