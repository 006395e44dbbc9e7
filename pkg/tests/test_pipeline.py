import numpy as np
import pytest

from stresswear.errors import PipelineError, SignalError
from stresswear.features import Scenario
from stresswear.ingest import DeviceKind, SignalKind, TimeSeries, assemble_session
from stresswear.pipeline import cohort_matrices, session_matrices
from stresswear.synth import CohortSpec, gen_cohort


def test_cohort_matrices_per_scenario():
    cohort = gen_cohort(CohortSpec(n_subjects=2, seed=1, devices=(DeviceKind.POLAR_H10,)))
    out = cohort_matrices(cohort, DeviceKind.POLAR_H10, include_eda=False)
    assert set(out) == set(Scenario)
    for sc, per in out.items():
        assert sorted(per) == ["S01", "S02"]
        for m in per.values():
            assert m.scenario is sc and m.X.shape[1] == 16 and set(m.labels.tolist()) == {0, 1}
    # scenario 2 keeps only mental-arithmetic windows as positives
    assert len(out[Scenario.MENTAL_ARITHMETIC_ONLY]["S01"]) < len(out[Scenario.ALL_STRESSORS]["S01"])


def test_failures_name_subject_and_device():
    cohort = gen_cohort(CohortSpec(n_subjects=2, seed=1, devices=(DeviceKind.EMPATICA_E4,)))
    s = cohort[0].sessions[DeviceKind.EMPATICA_E4]
    eda = s.signals[SignalKind.EDA]
    broken = assemble_session(s.subject_id, s.device,
                              {**s.signals, SignalKind.EDA: TimeSeries(eda.timestamps, np.zeros(len(eda)),
                                                                      SignalKind.EDA)}, s.timeline)
    with pytest.raises(PipelineError) as exc:
        session_matrices(broken)
    assert exc.value.subject_id == "S01" and exc.value.device is DeviceKind.EMPATICA_E4
    assert isinstance(exc.value.cause, SignalError)
    assert "S01" in str(exc.value) and "EmpaticaE4" in str(exc.value)
