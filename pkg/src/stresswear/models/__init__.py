"""Stress classifiers with frozen, serializable parameters.

A :class:`TrainedModel` bundles the classifier with its feature schema and
the per-column standardization learned at training time, so it can be
applied unchanged to a different cohort or device.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import CorruptModelFile, IoError, SchemaMismatch, SchemaVersionMismatch
from ..fileio import write_text_atomic
from ..features import FeatureMatrix, FeatureSchema
from .forest import RfConfig, Tree, fit_forest_arrays, forest_proba
from .svm import (
    SVM_PRESET_EXPONENT,
    SVM_PRESET_LITERAL,
    SvmConfig,
    fit_svm_arrays,
    sigmoid_proba,
    svm_decision,
)

MODEL_FORMAT = "stresswear-model"
MODEL_VERSION = 1

__all__ = [
    "ModelKind", "TrainedModel", "SvmConfig", "RfConfig", "SVM_PRESET_LITERAL",
    "SVM_PRESET_EXPONENT", "svm_fit", "svm_predict_proba", "svm_decision_function",
    "rf_fit", "rf_predict_proba", "predict_proba", "fit_model", "save_model", "load_model",
]


class ModelKind(str, Enum):
    SVM_RBF = "SvmRbf"
    RANDOM_FOREST = "RandomForest"


@dataclass(frozen=True)
class ColumnStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "ColumnStats":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass(eq=False)
class TrainedModel:
    kind: ModelKind
    schema: FeatureSchema
    norm_stats: ColumnStats
    params: dict
    training_meta: dict = field(default_factory=dict)
    _trees: list | None = field(default=None, repr=False)

    @property
    def trees(self) -> list[Tree]:
        if self._trees is None:
            self._trees = [Tree.from_dict(t) for t in self.params["trees"]]
        return self._trees

    def predict_proba(self, rows) -> np.ndarray:
        return predict_proba(self, rows)


def _rows(model: TrainedModel, rows) -> np.ndarray:
    if isinstance(rows, FeatureMatrix):
        if rows.schema.names != model.schema.names:
            raise SchemaMismatch(
                f"model expects {len(model.schema)} columns ({model.schema.description}), "
                f"got {len(rows.schema)} ({rows.schema.description})"
            )
        X = rows.X
    else:
        X = np.asarray(rows, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(model.schema):
            raise SchemaMismatch(f"model expects {len(model.schema)} columns, got {X.shape[1]}")
    return model.norm_stats.apply(X)


def _training_arrays(matrix: FeatureMatrix):
    stats = ColumnStats.fit(matrix.X)
    return stats, stats.apply(matrix.X), matrix.labels


def svm_fit(matrix: FeatureMatrix, config: SvmConfig = SvmConfig(), meta: dict | None = None) -> TrainedModel:
    stats, X, y = _training_arrays(matrix)
    params = fit_svm_arrays(X, y, config)
    return TrainedModel(ModelKind.SVM_RBF, matrix.schema, stats, params, dict(meta or {}))


def svm_decision_function(model: TrainedModel, rows) -> np.ndarray:
    return svm_decision(model.params, _rows(model, rows))


def svm_predict_proba(model: TrainedModel, rows) -> np.ndarray:
    dec = svm_decision_function(model, rows)
    return sigmoid_proba(dec, model.params["platt_a"], model.params["platt_b"])


def rf_fit(matrix: FeatureMatrix, config: RfConfig = RfConfig(), meta: dict | None = None) -> TrainedModel:
    stats, X, y = _training_arrays(matrix)
    trees = fit_forest_arrays(X, y, config)
    params = {"trees": [t.to_dict() for t in trees], "n_trees": len(trees)}
    return TrainedModel(ModelKind.RANDOM_FOREST, matrix.schema, stats, params, dict(meta or {}), trees)


def rf_predict_proba(model: TrainedModel, rows) -> np.ndarray:
    return forest_proba(model.trees, _rows(model, rows))


def predict_proba(model: TrainedModel, rows) -> np.ndarray:
    if model.kind is ModelKind.SVM_RBF:
        return svm_predict_proba(model, rows)
    return rf_predict_proba(model, rows)


def fit_model(matrix: FeatureMatrix, kind: ModelKind, svm_config=SvmConfig(), rf_config=RfConfig(),
              meta: dict | None = None) -> TrainedModel:
    if ModelKind(kind) is ModelKind.SVM_RBF:
        return svm_fit(matrix, svm_config, meta)
    return rf_fit(matrix, rf_config, meta)


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind.value,
        "schema": model.schema.to_dict(),
        "norm_stats": {"mean": model.norm_stats.mean.tolist(), "std": model.norm_stats.std.tolist()},
        "params": model.params,
        "training_meta": model.training_meta,
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != MODEL_FORMAT:
        raise CorruptModelFile("not a stresswear model file")
    if d.get("version") != MODEL_VERSION:
        raise SchemaVersionMismatch(f"model file version {d.get('version')}, expected {MODEL_VERSION}")
    try:
        schema = FeatureSchema.from_dict(d["schema"])
        stats = ColumnStats(np.asarray(d["norm_stats"]["mean"], dtype=float),
                            np.asarray(d["norm_stats"]["std"], dtype=float))
        model = TrainedModel(ModelKind(d["kind"]), schema, stats, d["params"], d.get("training_meta", {}))
        if stats.mean.size != len(schema) or stats.std.size != len(schema):
            raise CorruptModelFile("normalization stats do not match the schema")
        if model.kind is ModelKind.RANDOM_FOREST:
            model.trees  # noqa: B018  (parse eagerly so corruption surfaces here)
        else:
            for key in ("support_vectors", "dual_coef", "bias", "gamma", "platt_a", "platt_b"):
                d["params"][key]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelFile(f"malformed model file: {exc}") from exc
    return model


def save_model(model: TrainedModel, path) -> None:
    """Write the model as JSON; floats round-trip exactly."""
    path = Path(path)
    text = json.dumps(model_to_dict(model), separators=(",", ":"))
    write_text_atomic(path, text)


def load_model(path) -> TrainedModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        d = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModelFile(f"{path}: {exc}") from exc
    if not isinstance(d, dict):
        raise CorruptModelFile(f"{path}: not a model object")
    return model_from_dict(d)
