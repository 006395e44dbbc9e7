"""Synthetic lab cohorts with known ground truth.

Each subject follows the lab protocol (randomized first two tasks, cold
pressor last).  Heart rate is a smoothed step response to the stressors plus
an Ornstein-Uhlenbeck fluctuation; beats are drawn with Gaussian jitter whose
spread (SDNN) depends on the segment.  Skin conductance is a drifting tonic
level plus SCRs from a Poisson driver convolved with the biexponential
response used by :mod:`stresswear.eda`.

All randomness for subject ``i`` comes from ``default_rng([seed, i])`` so
subjects can be generated in any order or in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks, lfilter

from .eda import CvxEdaConfig, irf_kernel
from .errors import InvalidSpec
from .features import Scenario, WindowSpec, label_window, windows
from .ingest import (
    EDA_DEVICES,
    STRESSORS,
    DeviceKind,
    DeviceSession,
    ProtocolTimeline,
    Segment,
    SegmentLabel,
    SignalKind,
    TimeSeries,
    lab_protocol,
)
from .preprocess import HR_RANGE_BPM

EDA_RATE_HZ = 4.0
EDA_NOISE_US = 0.005
SCR_REFRACTORY_S = 2.0
IRF_TAU1 = 0.7
MISMATCH_TAU0 = 3.0

# per-device RR resolution in ms (Empatica reports IBIs on a 64 Hz clock)
RR_RESOLUTION_MS = {
    DeviceKind.BIOPAC_MP160: 0.5,
    DeviceKind.POLAR_H10: 1.0,
    DeviceKind.EMPATICA_E4: 1000.0 / 64.0,
    DeviceKind.GARMIN_FORERUNNER_55S: 1.0,
}
# beat-detection timing jitter in ms: chest ECG is tight, wrist PPG is not
BEAT_JITTER_MS = {
    DeviceKind.BIOPAC_MP160: 0.5,
    DeviceKind.POLAR_H10: 1.0,
    DeviceKind.EMPATICA_E4: 8.0,
    DeviceKind.GARMIN_FORERUNNER_55S: 5.0,
}
DEVICE_ORDER = tuple(DeviceKind)


@dataclass(frozen=True)
class CohortSpec:
    """Generator parameters.  Rates are per minute, SCR amplitudes and drift in µS."""

    n_subjects: int = 20
    seed: int = 0
    hr_base_mean: float = 75.0
    hr_base_sd: float = 8.0
    hr_stress_delta: float = 15.0
    hrv_base_sdnn: float = 50.0
    hrv_stress_sdnn: float = 35.0
    scr_rate_rest: float = 2.0
    scr_rate_stress: float = 8.0
    scr_amplitude_range: tuple = (0.1, 0.6)
    tonic_drift: float = 0.02
    protocol: ProtocolTimeline | None = None  # None: randomized lab protocol per subject
    # heterogeneity knobs
    reactivity_range: tuple = (0.3, 1.5)
    hr_response_tau_s: float = 20.0
    hr_fluct_sd: float = 8.0
    hr_fluct_tau_s: float = 60.0
    tonic_level_range: tuple = (2.0, 8.0)
    eda_noise_sd: float = EDA_NOISE_US
    kernel_mismatch: bool = False
    devices: tuple = DEVICE_ORDER

    def __post_init__(self):
        lo, hi = HR_RANGE_BPM
        checks = [
            (self.n_subjects >= 2, "n_subjects must be >= 2"),
            (self.scr_rate_rest >= 0 and self.scr_rate_stress >= 0, "SCR rates must be >= 0"),
            (lo <= self.hr_base_mean <= hi, "hr_base_mean outside [30, 220]"),
            (lo <= self.hr_base_mean + self.hr_stress_delta <= hi, "stress HR outside [30, 220]"),
            (self.hr_base_sd >= 0 and self.hr_fluct_sd >= 0, "standard deviations must be >= 0"),
            (self.hrv_base_sdnn >= 0 and self.hrv_stress_sdnn >= 0, "SDNN must be >= 0"),
            (0 <= self.scr_amplitude_range[0] <= self.scr_amplitude_range[1], "bad scr_amplitude_range"),
            (0 < self.tonic_level_range[0] <= self.tonic_level_range[1], "bad tonic_level_range"),
            (0 <= self.reactivity_range[0] <= self.reactivity_range[1], "bad reactivity_range"),
            (self.hr_response_tau_s > 0 and self.hr_fluct_tau_s > 0, "time constants must be > 0"),
            (self.eda_noise_sd >= 0, "eda_noise_sd must be >= 0"),
            (len(self.devices) > 0, "no devices requested"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidSpec(msg)
        object.__setattr__(self, "devices", tuple(DeviceKind(d) for d in self.devices))

    @property
    def irf_tau0(self) -> float:
        return MISMATCH_TAU0 if self.kernel_mismatch else 2.0

    def null(self) -> "CohortSpec":
        """Same spec with every stress effect removed."""
        return replace(self, hr_stress_delta=0.0, hrv_stress_sdnn=self.hrv_base_sdnn,
                       scr_rate_stress=self.scr_rate_rest)


@dataclass(frozen=True)
class DeviceNoiseSpec:
    """Measurement artifacts.  ``spike_magnitude`` is relative to the sample value."""

    dropout_prob: float = 0.0
    spike_prob: float = 0.0
    spike_magnitude: float = 0.5
    eda_detach_prob: float = 0.0
    detach_duration_s: float = 30.0

    def __post_init__(self):
        for name in ("dropout_prob", "spike_prob", "eda_detach_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1], got {p}")
        if self.spike_magnitude < 0 or self.detach_duration_s < 0:
            raise InvalidSpec("spike_magnitude and detach_duration_s must be >= 0")

    @property
    def is_identity(self) -> bool:
        return self.dropout_prob == 0 and self.spike_prob == 0 and self.eda_detach_prob == 0


# loose electrodes on a wrist device, loosely after field reports on Empatica data
EDA_DETACHMENT = DeviceNoiseSpec(eda_detach_prob=0.25, detach_duration_s=45.0)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    subject_id: str
    timeline: ProtocolTimeline
    scr_event_times: np.ndarray
    scr_amplitudes: np.ndarray
    segment_mean_hr: tuple  # (label, start_s, end_s, mean HR of the true trajectory)
    reactivity: float
    eda_tonic: TimeSeries
    eda_phasic: TimeSeries
    irf_tau0: float

    def window_labels(self, scenario: Scenario, spec: WindowSpec = WindowSpec()) -> list:
        return [(a, b, label_window(a, b, self.timeline, scenario))
                for a, b in windows(self.timeline.duration, spec)]


@dataclass(frozen=True, eq=False)
class SubjectBundle:
    subject_id: str
    sessions: dict  # DeviceKind -> DeviceSession
    truth: GroundTruth


def subject_id(index: int, n_subjects: int) -> str:
    return f"S{index + 1:0{max(2, len(str(n_subjects)))}d}"


def _stress_indicator(t, timeline):
    out = np.zeros_like(t)
    for seg in timeline.segments:
        if seg.label in STRESSORS:
            out[(t >= seg.start_s) & (t < seg.end_s)] = 1.0
    return out


def _first_order(x, dt, tau):
    """Causal exponential smoothing, starting at the first value."""
    a = np.exp(-dt / tau)
    y, _ = lfilter([1 - a], [1, -a], x, zi=[a * x[0]])
    return y


def _ou(n, dt, tau, sd, rng):
    a = np.exp(-dt / tau)
    z = rng.standard_normal(n) * sd * np.sqrt(1 - a * a)
    z[0] = rng.standard_normal() * sd  # stationary start
    return lfilter([1.0], [1.0, -a], z)


def _hr_trajectory(spec, timeline, base, reactivity, rng, dt=0.25):
    grid = np.arange(0.0, timeline.duration + dt, dt)
    step = _stress_indicator(grid, timeline) * spec.hr_stress_delta * reactivity
    target = base + _first_order(step, dt, spec.hr_response_tau_s)
    hr = target + _ou(grid.size, dt, spec.hr_fluct_tau_s, spec.hr_fluct_sd, rng)
    return grid, np.clip(hr, *HR_RANGE_BPM), np.clip(target, *HR_RANGE_BPM)


def _beats(spec, timeline, grid, hr, rng):
    """Beat-to-beat RR intervals (ms) and the time (s) of the beat closing each interval."""
    stress = _stress_indicator(grid, timeline) > 0
    sdnn = np.where(stress, spec.hrv_stress_sdnn, spec.hrv_base_sdnn)
    rr_lo, rr_hi = 60000.0 / HR_RANGE_BPM[1], 60000.0 / HR_RANGE_BPM[0]
    n_max = int(timeline.duration / 0.25) + 2
    jitter = rng.standard_normal(n_max)
    times, rrs = [], []
    t, k = 0.0, 0
    dt = grid[1] - grid[0]
    while True:
        i = min(int(t / dt), grid.size - 1)
        rr = min(max(60000.0 / hr[i] + sdnn[i] * jitter[k], rr_lo), rr_hi)
        t += rr / 1000.0
        k += 1
        if t > timeline.duration:
            break
        times.append(t)
        rrs.append(rr)
    return np.array(times), np.array(rrs)


def _scr_events(spec, timeline, rng):
    """Poisson events on the EDA grid with a refractory gap; rate depends on the segment."""
    times, amps = [], []
    last = -np.inf
    for seg in timeline.segments:
        rate = spec.scr_rate_stress if seg.label in STRESSORS else spec.scr_rate_rest
        if rate <= 0:
            continue
        t = seg.start_s
        while True:
            t += rng.exponential(60.0 / rate)
            if t >= seg.end_s:
                break
            snapped = np.round(t * EDA_RATE_HZ) / EDA_RATE_HZ
            if snapped - last < SCR_REFRACTORY_S or snapped >= timeline.duration:
                continue
            times.append(snapped)
            amps.append(rng.uniform(*spec.scr_amplitude_range))
            last = snapped
    return np.array(times), np.array(amps)


def _eda_components(spec, timeline, events, amps, rng):
    dt = 1.0 / EDA_RATE_HZ
    t = np.arange(int(np.floor(timeline.duration * EDA_RATE_HZ + 1e-9)) + 1) * dt
    driver = np.zeros(t.size)
    np.add.at(driver, np.rint(events * EDA_RATE_HZ).astype(int), amps)
    # same truncation as the decomposer, stretched when the kernel is deliberately mismatched
    trunc = max(CvxEdaConfig().irf_truncation_s, 5 * spec.irf_tau0)
    h = irf_kernel(dt, spec.irf_tau0, IRF_TAU1, trunc)
    phasic = np.convolve(driver, h)[: t.size]
    level = rng.uniform(*spec.tonic_level_range)
    drift = spec.tonic_drift * rng.choice((-1.0, 1.0))
    tonic = np.maximum(level + drift * t / 60.0, 0.5)
    return t, tonic, phasic


def _device_rr(times, rr, device, rng):
    """Device view of the beat series: detection jitter, then the device's RR resolution."""
    e = rng.standard_normal(times.size + 1) * BEAT_JITTER_MS[device]
    measured = rr + np.diff(e)
    res = RR_RESOLUTION_MS[device]
    q = np.round(measured / res) * res
    t = times + e[1:] / 1000.0
    keep = np.concatenate([[True], np.diff(t) > 0])
    return TimeSeries(np.round(t[keep], 4), q[keep], SignalKind.RR_INTERVAL)


def gen_subject(spec: CohortSpec, subject_index: int) -> tuple[dict, GroundTruth]:
    """Sessions for every device in ``spec.devices`` plus the ground truth."""
    if not 0 <= subject_index < spec.n_subjects:
        raise InvalidSpec(f"subject_index {subject_index} outside [0, {spec.n_subjects})")
    rng = np.random.default_rng([spec.seed, subject_index])
    sid = subject_id(subject_index, spec.n_subjects)
    if spec.protocol is None:
        order = rng.permutation(2)
        tasks = (SegmentLabel.MENTAL_ARITHMETIC, SegmentLabel.STARTLE)
        timeline = lab_protocol(tasks[order[0]], tasks[order[1]])
    else:
        timeline = spec.protocol

    base = float(np.clip(rng.normal(spec.hr_base_mean, spec.hr_base_sd), 45.0, 120.0))
    reactivity = float(rng.uniform(*spec.reactivity_range))
    grid, hr, target = _hr_trajectory(spec, timeline, base, reactivity, rng)
    beat_t, beat_rr = _beats(spec, timeline, grid, hr, rng)
    events, amps = _scr_events(spec, timeline, rng)
    t_eda, tonic, phasic = _eda_components(spec, timeline, events, amps, rng)
    # measurement noise for every device is drawn in fixed device order, so a
    # device's data do not depend on which other devices were requested
    rr_views, eda_noise = {}, {}
    for d in DEVICE_ORDER:
        rr_views[d] = _device_rr(beat_t, beat_rr, d, rng)
        if d in EDA_DEVICES:
            eda_noise[d] = rng.standard_normal(t_eda.size) * spec.eda_noise_sd

    sessions = {}
    for device in spec.devices:
        signals = {SignalKind.RR_INTERVAL: rr_views[device]}
        if device in eda_noise:
            signals[SignalKind.EDA] = TimeSeries(t_eda, tonic + phasic + eda_noise[device], SignalKind.EDA)
        sessions[device] = DeviceSession(sid, device, signals, timeline,
                                         {"synthetic": True, "seed": spec.seed})

    seg_hr = tuple(
        (s.label, s.start_s, s.end_s, float(target[(grid >= s.start_s) & (grid < s.end_s)].mean()))
        for s in timeline.segments
    )
    truth = GroundTruth(
        subject_id=sid,
        timeline=timeline,
        scr_event_times=events,
        scr_amplitudes=amps,
        segment_mean_hr=seg_hr,
        reactivity=reactivity,
        eda_tonic=TimeSeries(t_eda, tonic, SignalKind.EDA),
        eda_phasic=TimeSeries(t_eda, phasic, SignalKind.EDA),
        irf_tau0=spec.irf_tau0,
    )
    return sessions, truth


def gen_cohort(spec: CohortSpec) -> list[SubjectBundle]:
    out = []
    for i in range(spec.n_subjects):
        sessions, truth = gen_subject(spec, i)
        out.append(SubjectBundle(truth.subject_id, sessions, truth))
    return out


@dataclass(frozen=True, eq=False)
class EdaTrace:
    """One clean skin-conductance recording with its embedded SCR events."""

    eda: TimeSeries
    event_times: np.ndarray
    amplitudes: np.ndarray
    tonic: TimeSeries
    phasic: TimeSeries


def gen_eda_trace(spec: CohortSpec, duration_s: float, seed, rate_per_min: float | None = None) -> EdaTrace:
    """Stand-alone EDA trace at a constant SCR rate (default ``spec.scr_rate_stress``).

    Uses the cohort's kernel, amplitude, tonic and noise settings.
    """
    if not duration_s > 20.0:
        raise InvalidSpec("duration_s must exceed 20 s")
    rate = spec.scr_rate_stress if rate_per_min is None else rate_per_min
    rng = np.random.default_rng(seed)
    timeline = ProtocolTimeline((Segment(SegmentLabel.BASELINE, 0.0, float(duration_s)),))
    events, amps = _scr_events(replace(spec, scr_rate_rest=rate), timeline, rng)
    t, tonic, phasic = _eda_components(spec, timeline, events, amps, rng)
    y = tonic + phasic + rng.standard_normal(t.size) * spec.eda_noise_sd
    return EdaTrace(
        eda=TimeSeries(t, y, SignalKind.EDA),
        event_times=events,
        amplitudes=amps,
        tonic=TimeSeries(t, tonic, SignalKind.EDA),
        phasic=TimeSeries(t, phasic, SignalKind.EDA),
    )


def apply_device_noise(session: DeviceSession, noise: DeviceNoiseSpec, seed) -> DeviceSession:
    """Drop samples, add spikes and zero EDA during detachment episodes."""
    if noise.is_identity:
        return session
    rng = np.random.default_rng(seed)
    signals = {}
    for kind in (SignalKind.HEART_RATE, SignalKind.RR_INTERVAL, SignalKind.EDA):
        if kind not in session.signals:
            continue
        s = session.signals[kind]
        v = s.values.copy()
        spikes = rng.random(v.size) < noise.spike_prob
        signs = rng.choice((-1.0, 1.0), size=v.size)
        v[spikes] *= 1.0 + noise.spike_magnitude * signs[spikes]
        if kind is SignalKind.EDA and noise.eda_detach_prob > 0:
            duration = session.timeline.duration
            n_min = int(np.ceil(duration / 60.0))
            starts = (np.arange(n_min) + rng.random(n_min)) * 60.0
            for start in starts[rng.random(n_min) < noise.eda_detach_prob]:
                v[(s.timestamps >= start) & (s.timestamps < start + noise.detach_duration_s)] = 0.0
        keep = rng.random(v.size) >= noise.dropout_prob
        signals[kind] = TimeSeries(s.timestamps[keep], v[keep], kind)
    meta = dict(session.meta)
    meta["device_noise"] = noise
    return DeviceSession(session.subject_id, session.device, signals, session.timeline, meta)


def noisy_cohort(bundles, noise: DeviceNoiseSpec, devices, seed: int) -> list[SubjectBundle]:
    """Copy of ``bundles`` with ``noise`` applied to the listed devices."""
    devices = {DeviceKind(d) for d in devices}
    out = []
    for i, b in enumerate(bundles):
        sessions = dict(b.sessions)
        for d in devices & set(sessions):
            sessions[d] = apply_device_noise(sessions[d], noise, [seed, i, DEVICE_ORDER.index(d)])
        out.append(SubjectBundle(b.subject_id, sessions, b.truth))
    return out


def match_events(driver: TimeSeries, event_times, amplitudes, tol_s: float = 1.0,
                 rel_height: float = 0.5) -> np.ndarray:
    """Which true events have a driver local maximum of at least ``rel_height``
    times their amplitude within ``tol_s`` seconds.

    ``amplitudes`` must be in the driver's units.  Each local maximum is
    credited to at most one event (nearest first).
    """
    t, q = driver.timestamps, driver.values
    peaks, _ = find_peaks(np.concatenate([[-np.inf], q, [-np.inf]]))
    peaks = peaks - 1
    pt, pv = t[peaks], q[peaks]
    events = np.asarray(event_times, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    hit = np.zeros(events.size, dtype=bool)
    used = np.zeros(pt.size, dtype=bool)
    pairs = []
    for i, (e, a) in enumerate(zip(events, amps)):
        for j in np.flatnonzero((np.abs(pt - e) <= tol_s + 1e-9) & (pv >= rel_height * a)):
            pairs.append((abs(pt[j] - e), i, j))
    for _, i, j in sorted(pairs):
        if not hit[i] and not used[j]:
            hit[i] = used[j] = True
    return hit
