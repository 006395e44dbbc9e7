"""Artifact removal and normalization of cardiac and EDA signals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeries, DegenerateStats, EmptySeries, SignalError, StressWearError
from .ingest import DeviceSession, SignalKind, TimeSeries

HR_RANGE_BPM = (30.0, 220.0)
EDA_RANGE_US = (0.01, 100.0)
# RR band equivalent to the HR band through HR = 60000 / RR
RR_RANGE_MS = (60000.0 / HR_RANGE_BPM[1], 60000.0 / HR_RANGE_BPM[0])


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float
    min: float
    max: float

    def __post_init__(self):
        if self.std < 0 or self.max < self.min:
            raise DegenerateStats(f"invalid normalization stats {self}")

    @classmethod
    def of(cls, values) -> "NormStats":
        v = np.asarray(values, dtype=float)
        return cls(float(v.mean()), float(v.std()), float(v.min()), float(v.max()))


def filter_physiological_range(series: TimeSeries) -> TimeSeries:
    """Drop samples outside the plausible physiological band for the series kind."""
    lo, hi = {
        SignalKind.HEART_RATE: HR_RANGE_BPM,
        SignalKind.EDA: EDA_RANGE_US,
        SignalKind.RR_INTERVAL: RR_RANGE_MS,
    }[series.kind]
    v = series.values
    return series.select((v >= lo) & (v <= hi))


def mad_trim(series: TimeSeries, k: float = 3.0) -> TimeSeries:
    """Remove samples farther than ``k`` median absolute deviations from the median.

    A zero MAD removes nothing.
    """
    if len(series) == 0:
        raise EmptySeries(f"{series.kind.value}: cannot MAD-trim an empty series")
    v = series.values
    med = np.median(v)
    dev = np.abs(v - med)
    mad = np.median(dev)
    if mad == 0:
        return series
    return series.select(dev <= k * mad)


def median_filter(series: TimeSeries, window_s: float = 5.0) -> TimeSeries:
    """Centered running median over a time window of ``window_s`` seconds.

    Windows are truncated at the series edges.  For an even number of
    samples the lower median is taken so every output is an input value.
    """
    if len(series) == 0:
        raise EmptySeries(f"{series.kind.value}: cannot median-filter an empty series")
    t, v = series.timestamps, series.values
    half = window_s / 2.0
    eps = 1e-9 * max(1.0, float(np.abs(t).max()))
    lo = np.searchsorted(t, t - half - eps, side="left")
    hi = np.searchsorted(t, t + half + eps, side="right")
    out = np.empty_like(v)
    for i in range(v.size):
        w = v[lo[i]:hi[i]]
        m = (w.size - 1) // 2
        out[i] = np.partition(w, m)[m]
    return series.with_values(out)


def zscore(series: TimeSeries) -> tuple[TimeSeries, NormStats]:
    """Z-score with the population standard deviation."""
    v = series.values
    if v.size < 2 or np.ptp(v) == 0:
        raise DegenerateSeries(f"{series.kind.value}: z-score needs >= 2 distinct values")
    stats = NormStats.of(v)
    if stats.std == 0:
        raise DegenerateSeries(f"{series.kind.value}: zero standard deviation")
    return zscore_apply(series, stats), stats


def zscore_apply(series: TimeSeries, stats: NormStats) -> TimeSeries:
    if not stats.std > 0:
        raise DegenerateStats("z-score stats need std > 0")
    return series.with_values((series.values - stats.mean) / stats.std)


def minmax(series: TimeSeries) -> tuple[TimeSeries, NormStats]:
    """Rescale to [0, 1] using the series minimum and maximum."""
    v = series.values
    if v.size == 0 or not v.max() > v.min():
        raise DegenerateSeries(f"{series.kind.value}: min-max needs max > min")
    stats = NormStats.of(v)
    return minmax_apply(series, stats), stats


def minmax_apply(series: TimeSeries, stats: NormStats) -> TimeSeries:
    if not stats.max > stats.min:
        raise DegenerateStats("min-max stats need max > min")
    return series.with_values((series.values - stats.min) / (stats.max - stats.min))


def rr_to_hr(rr: TimeSeries) -> TimeSeries:
    return TimeSeries(rr.timestamps, 60000.0 / rr.values, SignalKind.HEART_RATE)


def hr_to_rr(hr: TimeSeries) -> TimeSeries:
    return TimeSeries(hr.timestamps, 60000.0 / hr.values, SignalKind.RR_INTERVAL)


def _clean_cardiac(series: TimeSeries) -> tuple[TimeSeries, NormStats]:
    s = filter_physiological_range(series)
    s = mad_trim(s)
    return zscore(s)


def _clean_eda(series: TimeSeries) -> tuple[TimeSeries, NormStats]:
    s = filter_physiological_range(series)
    s = median_filter(s)
    return minmax(s)


def preprocess_session(session: DeviceSession) -> DeviceSession:
    """Clean and normalize every signal of a session.

    A missing HR or RR series is first derived from the other one.  The
    fitted normalization statistics land in ``meta["norm_stats"]``.
    """
    raw = dict(session.signals)
    hr, rr = SignalKind.HEART_RATE, SignalKind.RR_INTERVAL
    if rr in raw and hr not in raw:
        raw[hr] = rr_to_hr(filter_physiological_range(raw[rr]))
    elif hr in raw and rr not in raw:
        raw[rr] = hr_to_rr(filter_physiological_range(raw[hr]))

    out, stats = {}, {}
    for kind in (hr, rr, SignalKind.EDA):
        if kind not in raw:
            continue
        clean = _clean_eda if kind is SignalKind.EDA else _clean_cardiac
        try:
            if len(raw[kind]) == 0:
                raise EmptySeries("no samples")
            out[kind], stats[kind] = clean(raw[kind])
        except StressWearError as exc:
            raise SignalError(kind, exc) from exc
    meta = dict(session.meta)
    meta["norm_stats"] = stats
    return DeviceSession(session.subject_id, session.device, out, session.timeline, meta)
