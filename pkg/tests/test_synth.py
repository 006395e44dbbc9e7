import numpy as np
import pytest
from scipy.stats import binom

from stresswear.errors import InvalidSpec
from stresswear.ingest import (
    EDA_DEVICES,
    STRESSORS,
    DeviceKind,
    SegmentLabel,
    SignalKind,
    TimeSeries,
    assemble_session,
    default_protocol,
)
from stresswear.preprocess import filter_physiological_range
from stresswear.synth import (
    EDA_DETACHMENT,
    CohortSpec,
    DeviceNoiseSpec,
    apply_device_noise,
    gen_cohort,
    gen_eda_trace,
    gen_subject,
    match_events,
    noisy_cohort,
)

SMALL = CohortSpec(n_subjects=3, seed=11)


@pytest.fixture(scope="module")
def cohort():
    return gen_cohort(SMALL)


def _same_sessions(a, b):
    return all(a[d].signals.keys() == b[d].signals.keys()
               and all(a[d].signals[k] == b[d].signals[k] for k in a[d].signals) for d in a)


def test_cohort_shape(cohort):
    assert [b.subject_id for b in cohort] == ["S01", "S02", "S03"]
    for b in cohort:
        assert set(b.sessions) == set(DeviceKind)
        for d, s in b.sessions.items():
            assert s.has(SignalKind.RR_INTERVAL)
            assert s.has(SignalKind.EDA) == (d in EDA_DEVICES)
    assert len(gen_cohort(CohortSpec(n_subjects=2))) == 2


def test_generation_is_deterministic(cohort):
    again = gen_subject(SMALL, 1)[0]
    assert _same_sessions(cohort[1].sessions, again)
    other = gen_subject(CohortSpec(n_subjects=3, seed=12), 1)[0]
    rr = SignalKind.RR_INTERVAL
    assert not np.array_equal(other[DeviceKind.POLAR_H10].signals[rr].values,
                              cohort[1].sessions[DeviceKind.POLAR_H10].signals[rr].values)


def test_device_subset_does_not_change_data(cohort):
    only = gen_subject(CohortSpec(n_subjects=3, seed=11, devices=(DeviceKind.EMPATICA_E4,)), 0)[0]
    assert _same_sessions(only, {DeviceKind.EMPATICA_E4: cohort[0].sessions[DeviceKind.EMPATICA_E4]})


def test_stress_raises_true_heart_rate(cohort):
    for b in cohort:
        base = [hr for lab, *_, hr in b.truth.segment_mean_hr if lab is SegmentLabel.BASELINE][0]
        for lab, *_, hr in b.truth.segment_mean_hr:
            if lab in STRESSORS:
                assert hr > base


def test_null_spec_removes_effects():
    null = CohortSpec().null()
    assert null.hr_stress_delta == 0 and null.scr_rate_stress == null.scr_rate_rest
    assert null.hrv_stress_sdnn == null.hrv_base_sdnn


def test_protocol_randomized_but_cold_pressor_last():
    orders = set()
    for b in gen_cohort(CohortSpec(n_subjects=8, seed=0, devices=(DeviceKind.POLAR_H10,))):
        labels = [s.label for s in b.truth.timeline.segments]
        assert labels[-1] is SegmentLabel.COLD_PRESSOR
        orders.add(labels[1])
    assert orders == {SegmentLabel.MENTAL_ARITHMETIC, SegmentLabel.STARTLE}


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        CohortSpec(n_subjects=1)
    with pytest.raises(InvalidSpec):
        CohortSpec(scr_rate_rest=-1)
    with pytest.raises(InvalidSpec):
        DeviceNoiseSpec(dropout_prob=1.5)
    with pytest.raises(InvalidSpec):
        gen_subject(SMALL, 5)


def test_identity_noise_returns_same_session(cohort):
    s = cohort[0].sessions[DeviceKind.EMPATICA_E4]
    assert apply_device_noise(s, DeviceNoiseSpec(), seed=1) is s


def test_dropout_binomial_bounds():
    t = np.arange(1000.0)
    rr = TimeSeries(t, np.full(1000, 800.0), SignalKind.RR_INTERVAL)
    s = assemble_session("S01", DeviceKind.POLAR_H10, {SignalKind.RR_INTERVAL: rr}, default_protocol())
    lo, hi = binom.ppf([0.0005, 0.9995], 1000, 0.5)
    for seed in range(5):
        kept = len(apply_device_noise(s, DeviceNoiseSpec(dropout_prob=0.5), seed).signals[SignalKind.RR_INTERVAL])
        assert lo <= kept <= hi


def test_detachment_runs_are_removed_by_range_filter(cohort):
    s = cohort[0].sessions[DeviceKind.EMPATICA_E4]
    noisy = apply_device_noise(s, EDA_DETACHMENT, seed=3).signals[SignalKind.EDA]
    low = noisy.values < 0.01
    assert np.any(low[1:] & low[:-1])
    assert not np.any(filter_physiological_range(noisy).values < 0.01)
    assert noisy.timestamps.size == s.signals[SignalKind.EDA].timestamps.size


def test_noisy_cohort_touches_only_listed_devices(cohort):
    noisy = noisy_cohort(cohort, EDA_DETACHMENT, [DeviceKind.EMPATICA_E4], seed=0)
    assert noisy[0].sessions[DeviceKind.BIOPAC_MP160] is cohort[0].sessions[DeviceKind.BIOPAC_MP160]
    assert noisy[0].sessions[DeviceKind.EMPATICA_E4].meta["device_noise"] == EDA_DETACHMENT


def test_eda_trace_and_event_matching():
    tr = gen_eda_trace(CohortSpec(), 120.0, seed=4)
    assert tr.event_times.size > 0
    assert np.all(np.diff(tr.event_times) >= 2.0)
    np.testing.assert_allclose(tr.eda.values - tr.tonic.values - tr.phasic.values, 0, atol=0.05)
    t = tr.eda.timestamps
    perfect = np.zeros(t.size)
    perfect[np.rint(tr.event_times * 4).astype(int)] = tr.amplitudes
    assert match_events(TimeSeries(t, perfect, SignalKind.EDA), tr.event_times, tr.amplitudes).all()
    shifted = np.roll(perfect, 8)  # 2 s late: outside the tolerance
    assert not match_events(TimeSeries(t, shifted, SignalKind.EDA), tr.event_times, tr.amplitudes).any()


def test_one_peak_credits_one_event():
    t = np.arange(40) * 0.25
    q = np.zeros(40)
    q[20] = 1.0
    hit = match_events(TimeSeries(t, q, SignalKind.EDA), [4.75, 5.25], [1.0, 1.0])
    assert hit.sum() == 1


def test_event_bookkeeping_is_exact(cohort):
    from stresswear.eda import irf_kernel

    for b in cohort:
        tr = b.truth
        t = tr.eda_phasic.timestamps
        drv = np.zeros(t.size)
        idx = np.rint(tr.scr_event_times * 4).astype(int)
        assert np.unique(idx).size == idx.size  # one impulse per event
        drv[idx] = tr.scr_amplitudes
        rebuilt = np.convolve(drv, irf_kernel(0.25, tr.irf_tau0, 0.7, 10.0))[: t.size]
        np.testing.assert_allclose(rebuilt, tr.eda_phasic.values, atol=1e-12)


def test_true_heart_rate_in_range(cohort):
    for b in cohort:
        for *_, hr in b.truth.segment_mean_hr:
            assert 30 <= hr <= 220
        rr = b.sessions[DeviceKind.BIOPAC_MP160].signals[SignalKind.RR_INTERVAL].values
        assert rr.min() > 272.7 - 5 and rr.max() < 2000 + 5  # clamped beats plus 0.5 ms jitter
