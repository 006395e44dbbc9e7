"""Wearable stress detection from heart rate, R-R intervals and skin conductance.

Modules
-------
ingest       device CSVs, protocol timelines, sessions
preprocess   range filters, MAD trimming, median filter, normalization
eda          tonic/phasic decomposition (cvxEDA model) and its QP solver front end
qp           non-negative QP solver and exhaustive oracle
features     sliding-window HRV/EDA features and scenario labels
models       RBF SVM and random forest with frozen JSON serialization
evaluation   AUROC, LOSO, frozen-model transfer, Table-II-style reports
synth        synthetic cohorts with ground truth and device noise
pipeline     session -> feature matrix glue
cli          ``stresswear`` command
"""
from .errors import StressWearError
from .evaluation import EvalReport, auroc, loso, pretrained_eval, render_report, summarize
from .features import FeatureMatrix, FeatureSchema, Scenario, WindowSpec, build_feature_matrix
from .ingest import DeviceKind, DeviceSession, ProtocolTimeline, SignalKind, TimeSeries
from .models import TrainedModel, load_model, rf_fit, save_model, svm_fit

__version__ = "0.1.0"

__all__ = [
    "StressWearError", "EvalReport", "auroc", "loso", "pretrained_eval", "render_report", "summarize",
    "FeatureMatrix", "FeatureSchema", "Scenario", "WindowSpec", "build_feature_matrix",
    "DeviceKind", "DeviceSession", "ProtocolTimeline", "SignalKind", "TimeSeries",
    "TrainedModel", "load_model", "rf_fit", "save_model", "svm_fit",
]
