"""Signal and protocol ingestion.

Device exports are plain two-column CSVs (``t_seconds,value``) and the
session protocol is a ``label,start_s,end_s`` file.  Everything downstream
works on :class:`TimeSeries`, :class:`ProtocolTimeline` and
:class:`DeviceSession`.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    EdaNotSupportedForDevice,
    EmptySignal,
    KindMismatch,
    MalformedFile,
    MissingCardiacSignal,
    NonBaselineStart,
    OverlappingSegments,
)
from .fileio import write_text_atomic


class SignalKind(str, Enum):
    HEART_RATE = "HeartRate"  # bpm
    RR_INTERVAL = "RrInterval"  # ms
    EDA = "Eda"  # microsiemens


class DeviceKind(str, Enum):
    BIOPAC_MP160 = "BiopacMP160"
    POLAR_H10 = "PolarH10"
    EMPATICA_E4 = "EmpaticaE4"
    GARMIN_FORERUNNER_55S = "GarminForerunner55s"


EDA_DEVICES = frozenset({DeviceKind.EMPATICA_E4, DeviceKind.BIOPAC_MP160})


class SegmentLabel(str, Enum):
    BASELINE = "Baseline"
    REST = "Rest"
    MENTAL_ARITHMETIC = "MentalArithmetic"
    STARTLE = "Startle"
    COLD_PRESSOR = "ColdPressor"


STRESSORS = frozenset(
    {SegmentLabel.MENTAL_ARITHMETIC, SegmentLabel.STARTLE, SegmentLabel.COLD_PRESSOR}
)

# value-column names accepted in place of the generic "value" header
_KIND_COLUMNS = {
    SignalKind.HEART_RATE: "hr_bpm",
    SignalKind.RR_INTERVAL: "rr_ms",
    SignalKind.EDA: "eda_us",
}


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Timestamped scalar samples of one :class:`SignalKind`."""

    timestamps: np.ndarray
    values: np.ndarray
    kind: SignalKind

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("timestamps and values must be 1-d arrays of equal length")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.kind == other.kind
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.timestamps, values, self.kind)

    def select(self, keep) -> "TimeSeries":
        """Subset by boolean mask or index array."""
        return TimeSeries(self.timestamps[keep], self.values[keep], self.kind)

    def between(self, start: float, end: float, closed: bool = False) -> "TimeSeries":
        t = self.timestamps
        if closed:
            lo = np.searchsorted(t, start, side="left")
            hi = np.searchsorted(t, end, side="right")
        else:
            lo = np.searchsorted(t, start, side="left")
            hi = np.searchsorted(t, end, side="left")
        return TimeSeries(t[lo:hi], self.values[lo:hi], self.kind)


@dataclass(frozen=True)
class IngestReport:
    total_rows: int
    valid_rows: int
    dropped_rows: int
    duplicates_collapsed: int


@dataclass(frozen=True)
class Segment:
    label: SegmentLabel
    start_s: float
    end_s: float

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ProtocolTimeline:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        _validate_segments(segs)

    @property
    def duration(self) -> float:
        return self.segments[-1].end_s

    @property
    def first_baseline(self) -> Segment:
        return self.segments[0]


@dataclass(frozen=True)
class DeviceSession:
    subject_id: str
    device: DeviceKind
    signals: Mapping[SignalKind, TimeSeries]
    timeline: ProtocolTimeline
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _validate_session(self.device, self.signals)

    def has(self, kind: SignalKind) -> bool:
        return kind in self.signals


def _validate_segments(segs):
    if not segs:
        raise MalformedFile("protocol has no segments")
    for s in segs:
        if not (s.end_s > s.start_s):
            raise MalformedFile(f"segment {s.label.value} has end <= start")
    for a, b in zip(segs, segs[1:]):
        if b.start_s < a.start_s:
            raise MalformedFile("segments must be sorted by start time")
        if b.start_s < a.end_s:
            raise OverlappingSegments(
                f"{a.label.value} [{a.start_s}, {a.end_s}) overlaps "
                f"{b.label.value} [{b.start_s}, {b.end_s})"
            )
    if segs[0].label is not SegmentLabel.BASELINE:
        raise NonBaselineStart(f"first segment is {segs[0].label.value}, expected Baseline")


def _validate_session(device, signals):
    if not signals:
        raise MissingCardiacSignal("session has no signals")
    if SignalKind.HEART_RATE not in signals and SignalKind.RR_INTERVAL not in signals:
        raise MissingCardiacSignal("session needs HeartRate or RrInterval")
    if SignalKind.EDA in signals and device not in EDA_DEVICES:
        raise EdaNotSupportedForDevice(f"{device.value} does not record EDA")
    for kind, series in signals.items():
        if series.kind is not kind:
            raise KindMismatch(f"signal keyed {kind.value} carries {series.kind.value}")


def _parse_rows(lines):
    """Yield (t, v) float pairs or None for unparseable rows."""
    for row in csv.reader(lines):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            yield None
            continue
        try:
            yield float(row[0]), float(row[1])
        except ValueError:
            yield None


def read_signal_csv(
    path, device: DeviceKind, kind: SignalKind, t0: float | None = None
) -> tuple[TimeSeries, IngestReport]:
    """Parse a signal CSV, returning the series and the row accounting.

    Timestamps are re-based to ``t0`` when given, else to the first valid
    sample.  Colliding timestamps collapse to the median of their values.
    """
    device = DeviceKind(device)
    kind = SignalKind(kind)
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise EmptySignal(f"{path}: file is empty")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) != 2 or header[0] != "t_seconds":
        raise MalformedFile(f"{path}: expected header 't_seconds,value', got {lines[0]!r}")
    column = header[1]
    if column != "value":
        if column not in _KIND_COLUMNS.values():
            raise MalformedFile(f"{path}: unknown value column {column!r}")
        if column != _KIND_COLUMNS[kind]:
            raise KindMismatch(f"{path}: column {column!r} does not hold {kind.value}")

    parsed = list(_parse_rows(lines[1:]))
    total = len(parsed)
    bad = sum(p is None for p in parsed)
    if total and bad > 0.1 * total:
        raise MalformedFile(f"{path}: {bad} of {total} rows unparseable")
    pairs = [p for p in parsed if p is not None and math.isfinite(p[0]) and math.isfinite(p[1])]
    if not pairs:
        raise EmptySignal(f"{path}: no valid samples")

    arr = np.array(pairs, dtype=float)
    order = np.argsort(arr[:, 0], kind="stable")
    t, v = arr[order, 0], arr[order, 1]
    uniq, start_idx, counts = np.unique(t, return_index=True, return_counts=True)
    if uniq.size != t.size:
        v = np.array([np.median(v[s:s + c]) for s, c in zip(start_idx, counts)])
        t = uniq
    base = t[0] if t0 is None else float(t0)
    series = TimeSeries(t - base, v, kind)
    report = IngestReport(
        total_rows=total,
        valid_rows=len(pairs),
        dropped_rows=total - len(pairs),
        duplicates_collapsed=len(pairs) - uniq.size,
    )
    return series, report


def load_signal_csv(path, device: DeviceKind, kind: SignalKind, t0: float | None = None) -> TimeSeries:
    return read_signal_csv(path, device, kind, t0)[0]


def format_signal_csv(series: TimeSeries) -> str:
    buf = io.StringIO()
    buf.write("t_seconds,value\n")
    for t, v in zip(series.timestamps.tolist(), series.values.tolist()):
        buf.write(f"{t!r},{v!r}\n")
    return buf.getvalue()


def write_signal_csv(series: TimeSeries, path) -> None:
    write_text_atomic(path, format_signal_csv(series))


def parse_protocol(text: str, source: str = "<protocol>") -> ProtocolTimeline:
    segments = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise MalformedFile(f"{source}:{lineno}: expected 'label,start_s,end_s'")
        try:
            label = SegmentLabel(parts[0])
        except ValueError:
            raise MalformedFile(f"{source}:{lineno}: unknown segment label {parts[0]!r}") from None
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError:
            raise MalformedFile(f"{source}:{lineno}: non-numeric bounds") from None
        segments.append(Segment(label, start, end))
    segments.sort(key=lambda s: s.start_s)
    return ProtocolTimeline(tuple(segments))


def load_protocol(path) -> ProtocolTimeline:
    path = Path(path)
    return parse_protocol(path.read_text(encoding="utf-8"), str(path))


def format_protocol(timeline: ProtocolTimeline) -> str:
    lines = ["# label,start_s,end_s"]
    lines += [f"{s.label.value},{s.start_s!r},{s.end_s!r}" for s in timeline.segments]
    return "\n".join(lines) + "\n"


def write_protocol(timeline: ProtocolTimeline, path) -> None:
    write_text_atomic(path, format_protocol(timeline))


def default_protocol() -> ProtocolTimeline:
    """The bundled lab protocol: 10 min baseline, three 4 min tasks, 5 min rests."""
    text = resources.files("stresswear.data").joinpath("default_protocol.csv").read_text("utf-8")
    return parse_protocol(text, "default_protocol.csv")


def lab_protocol(
    first_task: SegmentLabel = SegmentLabel.MENTAL_ARITHMETIC,
    second_task: SegmentLabel = SegmentLabel.STARTLE,
    baseline_s: float = 600.0,
    task_s: float = 240.0,
    rest_s: float = 300.0,
) -> ProtocolTimeline:
    """Build a lab timeline with the two randomizable tasks in the given order.

    The cold pressor always closes the session.
    """
    if {first_task, second_task} != {SegmentLabel.MENTAL_ARITHMETIC, SegmentLabel.STARTLE}:
        raise ValueError("first two tasks must be MentalArithmetic and Startle")
    segs, t = [Segment(SegmentLabel.BASELINE, 0.0, baseline_s)], baseline_s
    for i, task in enumerate((first_task, second_task, SegmentLabel.COLD_PRESSOR)):
        if i:
            segs.append(Segment(SegmentLabel.REST, t, t + rest_s))
            t += rest_s
        segs.append(Segment(task, t, t + task_s))
        t += task_s
    return ProtocolTimeline(tuple(segs))


def assemble_session(
    subject_id: str,
    device: DeviceKind,
    signals: Mapping[SignalKind, TimeSeries],
    timeline: ProtocolTimeline,
) -> DeviceSession:
    return DeviceSession(str(subject_id), DeviceKind(device), dict(signals), timeline)
