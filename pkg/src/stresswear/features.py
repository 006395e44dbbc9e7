"""Sliding-window HRV/EDA features and scenario labels."""
from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks

from .eda import EdaDecomposition
from .errors import InsufficientSamples, NoUsableWindows, SessionTooShort
from .ingest import (
    STRESSORS,
    DeviceKind,
    DeviceSession,
    ProtocolTimeline,
    SegmentLabel,
    SignalKind,
    TimeSeries,
)
from .fileio import write_text_atomic
from .stats import percentile, pop_std, skewness

PERCENTILES = (5, 25, 50, 75, 95)
MIN_SAMPLES = 4
PEAK_THRESHOLD = 0.01
PEAK_SEPARATION_S = 1.0


class Scenario(Enum):
    ALL_STRESSORS = 1
    MENTAL_ARITHMETIC_ONLY = 2

    @property
    def positive_labels(self) -> frozenset:
        if self is Scenario.ALL_STRESSORS:
            return STRESSORS
        return frozenset({SegmentLabel.MENTAL_ARITHMETIC})


EXCLUDED = None


@dataclass(frozen=True)
class WindowSpec:
    width_s: float = 60.0
    overlap_s: float = 45.0

    def __post_init__(self):
        if not (0 <= self.overlap_s < self.width_s):
            raise ValueError("need 0 <= overlap_s < width_s")

    @property
    def step_s(self) -> float:
        return self.width_s - self.overlap_s


def _hrv_names(prefix):
    return [f"{prefix}_mean", f"{prefix}_std", f"{prefix}_skew"] + [
        f"{prefix}_p{p:02d}" for p in PERCENTILES
    ]


def _eda_names(prefix):
    return [f"{prefix}_{s}" for s in ("mean", "std", "min", "max", "auc")]


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names and the signal each is computed from."""

    names: tuple[str, ...]
    sources: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if len(self.names) != len(self.sources):
            raise ValueError("names and sources differ in length")

    def __len__(self):
        return len(self.names)

    @property
    def has_eda(self) -> bool:
        return any(s.startswith("EDA") for s in self.sources)

    @property
    def description(self) -> str:
        return "HRV+EDA" if self.has_eda else "HRV-only"

    def to_dict(self) -> dict:
        return {"names": list(self.names), "sources": list(self.sources)}

    @classmethod
    def from_dict(cls, d) -> "FeatureSchema":
        return cls(tuple(d["names"]), tuple(d["sources"]))

    @classmethod
    def from_names(cls, names) -> "FeatureSchema":
        for schema in (HRV_SCHEMA, HRV_EDA_SCHEMA):
            if tuple(names) == schema.names:
                return schema
        raise ValueError(f"unknown feature columns: {list(names)[:4]}...")


HRV_SCHEMA = FeatureSchema(
    tuple(_hrv_names("hr") + _hrv_names("rr")),
    tuple(["HR"] * 8 + ["RR"] * 8),
)
_EDA_PART = (
    _eda_names("eda_raw") + _eda_names("eda_tonic") + _eda_names("eda_phasic") + ["eda_phasic_peaks"]
)
HRV_EDA_SCHEMA = FeatureSchema(
    HRV_SCHEMA.names + tuple(_EDA_PART),
    HRV_SCHEMA.sources + tuple(["EDA-raw"] * 5 + ["EDA-tonic"] * 5 + ["EDA-phasic"] * 6),
)


@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    window_start_s: float
    window_end_s: float
    features: dict
    label: int | None


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Window-by-feature table for one device and scenario.

    Stored column-wise: ``X`` is ``(n_windows, n_features)`` in schema order.
    """

    schema: FeatureSchema
    X: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    scenario: Scenario
    device: DeviceKind

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(-1, len(self.schema))
        object.__setattr__(self, "X", X)
        for name, dtype in (("labels", int), ("starts", float), ("ends", float)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype))
        object.__setattr__(self, "subject_ids", np.asarray(self.subject_ids, dtype=str))
        n = X.shape[0]
        if not (self.labels.size == self.subject_ids.size == self.starts.size == self.ends.size == n):
            raise ValueError("row arrays disagree in length")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature values must be finite")

    def __len__(self):
        return self.X.shape[0]

    @property
    def rows(self) -> Iterator[FeatureVector]:
        for i in range(len(self)):
            yield FeatureVector(
                str(self.subject_ids[i]),
                float(self.starts[i]),
                float(self.ends[i]),
                dict(zip(self.schema.names, self.X[i].tolist())),
                int(self.labels[i]),
            )

    def subset(self, keep) -> "FeatureMatrix":
        return FeatureMatrix(
            self.schema, self.X[keep], self.labels[keep], self.subject_ids[keep],
            self.starts[keep], self.ends[keep], self.scenario, self.device,
        )

    @classmethod
    def concatenate(cls, matrices) -> "FeatureMatrix":
        matrices = list(matrices)
        first = matrices[0]
        for m in matrices[1:]:
            if m.schema != first.schema:
                raise ValueError("cannot concatenate matrices with different schemas")
        return cls(
            first.schema,
            np.vstack([m.X for m in matrices]),
            np.concatenate([m.labels for m in matrices]),
            np.concatenate([m.subject_ids for m in matrices]),
            np.concatenate([m.starts for m in matrices]),
            np.concatenate([m.ends for m in matrices]),
            first.scenario,
            first.device,
        )


def windows(duration_s: float, spec: WindowSpec = WindowSpec()) -> list[tuple[float, float]]:
    """Window bounds starting at 0 and advancing by ``spec.step_s``."""
    if duration_s < spec.width_s:
        raise SessionTooShort(f"session of {duration_s} s is shorter than a {spec.width_s} s window")
    count = int(np.floor((duration_s - spec.width_s) / spec.step_s + 1e-9)) + 1
    return [(k * spec.step_s, k * spec.step_s + spec.width_s) for k in range(count)]


def hrv_features(hr_window: TimeSeries, rr_window: TimeSeries) -> dict:
    """Mean, population std, skewness and five percentiles of HR and RR."""
    out = {}
    for prefix, series in (("hr", hr_window), ("rr", rr_window)):
        v = series.values
        if v.size < MIN_SAMPLES:
            raise InsufficientSamples(f"{prefix}: {v.size} samples in window, need {MIN_SAMPLES}")
        pct = percentile(v, PERCENTILES)
        vals = [float(np.mean(v)), pop_std(v), skewness(v)] + [float(p) for p in pct]
        out.update(zip(_hrv_names(prefix), vals))
    return out


def count_peaks(phasic: TimeSeries, threshold: float = PEAK_THRESHOLD,
                separation_s: float = PEAK_SEPARATION_S) -> int:
    t, v = phasic.timestamps, phasic.values
    if v.size < 3:
        return 0
    dt = float(np.median(np.diff(t)))
    distance = max(1, int(np.ceil(separation_s / dt - 1e-9)))
    peaks, _ = find_peaks(v, height=threshold + 1e-15, distance=distance)
    return int(peaks.size)


def eda_features(raw: TimeSeries, tonic: TimeSeries, phasic: TimeSeries) -> dict:
    """Mean, std, min, max and trapezoidal area of each EDA component plus phasic peak count."""
    out = {}
    for prefix, series in (("eda_raw", raw), ("eda_tonic", tonic), ("eda_phasic", phasic)):
        v, t = series.values, series.timestamps
        if v.size < MIN_SAMPLES:
            raise InsufficientSamples(f"{prefix}: {v.size} samples in window, need {MIN_SAMPLES}")
        vals = [float(v.mean()), pop_std(v), float(v.min()), float(v.max()), float(trapezoid(v, t))]
        out.update(zip(_eda_names(prefix), vals))
    out["eda_phasic_peaks"] = float(count_peaks(phasic))
    return out


def label_window(start_s: float, end_s: float, timeline: ProtocolTimeline, scenario: Scenario):
    """1 inside a counted stressor, 0 inside the first baseline, else ``EXCLUDED``."""
    for i, seg in enumerate(timeline.segments):
        if seg.start_s <= start_s and end_s <= seg.end_s:
            if i == 0 and seg.label is SegmentLabel.BASELINE:
                return 0
            if seg.label in scenario.positive_labels:
                return 1
            return EXCLUDED
    return EXCLUDED


def build_feature_matrix(
    session: DeviceSession,
    scenario: Scenario,
    decomposition: EdaDecomposition | None = None,
    spec: WindowSpec = WindowSpec(),
    include_eda: bool = True,
) -> FeatureMatrix:
    """One row per labeled window of a preprocessed session.

    EDA columns are added when the session has EDA, a decomposition is
    supplied and ``include_eda`` is set.  Windows lacking samples are
    dropped like unlabeled ones.
    """
    hr = session.signals.get(SignalKind.HEART_RATE)
    rr = session.signals.get(SignalKind.RR_INTERVAL)
    if hr is None and rr is None:
        raise InsufficientSamples("session has no cardiac signal")
    if hr is None:
        hr = TimeSeries(rr.timestamps, 60000.0 / rr.values, SignalKind.HEART_RATE)
    if rr is None:
        rr = TimeSeries(hr.timestamps, 60000.0 / hr.values, SignalKind.RR_INTERVAL)
    use_eda = include_eda and SignalKind.EDA in session.signals and decomposition is not None
    schema = HRV_EDA_SCHEMA if use_eda else HRV_SCHEMA

    rows, labels, starts, ends = [], [], [], []
    for start, end in windows(session.timeline.duration, spec):
        label = label_window(start, end, session.timeline, scenario)
        if label is EXCLUDED:
            continue
        try:
            feats = hrv_features(hr.between(start, end), rr.between(start, end))
            if use_eda:
                feats.update(
                    eda_features(
                        session.signals[SignalKind.EDA].between(start, end, closed=True),
                        decomposition.tonic.between(start, end, closed=True),
                        decomposition.phasic.between(start, end, closed=True),
                    )
                )
        except InsufficientSamples:
            continue
        rows.append([feats[n] for n in schema.names])
        labels.append(label)
        starts.append(start)
        ends.append(end)
    if not rows:
        raise NoUsableWindows(f"{session.subject_id}/{session.device.value}: no usable windows")
    return FeatureMatrix(
        schema,
        np.array(rows, dtype=float),
        np.array(labels),
        np.full(len(rows), session.subject_id),
        np.array(starts),
        np.array(ends),
        scenario,
        session.device,
    )


def format_feature_csv(matrix: FeatureMatrix) -> str:
    buf = io.StringIO()
    buf.write(",".join(["subject_id", "start_s", "end_s", "label", *matrix.schema.names]) + "\n")
    for i in range(len(matrix)):
        head = [str(matrix.subject_ids[i]), repr(float(matrix.starts[i])),
                repr(float(matrix.ends[i])), str(int(matrix.labels[i]))]
        buf.write(",".join(head + [repr(x) for x in matrix.X[i].tolist()]) + "\n")
    return buf.getvalue()


def write_feature_csv(matrix: FeatureMatrix, path) -> None:
    write_text_atomic(path, format_feature_csv(matrix))


def read_feature_csv(path, scenario: Scenario, device: DeviceKind) -> FeatureMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    if header[:4] != ["subject_id", "start_s", "end_s", "label"]:
        raise ValueError(f"{path}: not a feature matrix CSV")
    schema = FeatureSchema.from_names(header[4:])
    subj, starts, ends, labels, X = [], [], [], [], []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        subj.append(parts[0])
        starts.append(float(parts[1]))
        ends.append(float(parts[2]))
        labels.append(int(parts[3]))
        X.append([float(p) for p in parts[4:]])
    return FeatureMatrix(schema, np.array(X, dtype=float), np.array(labels, dtype=int),
                         np.array(subj, dtype=str), np.array(starts), np.array(ends),
                         Scenario(scenario), DeviceKind(device))
