import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stresswear.errors import EmptyInput, SchemaMismatch, SingleClassLabels, TooFewSubjects
from stresswear.evaluation import (
    EvalMode,
    EvalReport,
    auroc,
    format_cell,
    loso,
    pretrained_eval,
    render_report,
    report_csv,
    report_table,
    summarize,
)
from stresswear.features import FeatureMatrix, HRV_EDA_SCHEMA, HRV_SCHEMA, Scenario
from stresswear.ingest import DeviceKind
from stresswear.models import ModelKind, RfConfig, SvmConfig, fit_model

from conftest import toy_matrix


def brute_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@st.composite
def scored(draw):
    n = draw(st.integers(2, 60))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda v: 0 < sum(v) < len(v)))
    # a small value pool forces ties
    scores = draw(st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.9, 1.0, -3.0]) | st.floats(-5, 5),
                           min_size=n, max_size=n))
    return scores, labels


@given(scored())
def test_auroc_matches_pairwise_enumeration(case):
    scores, labels = case
    assert abs(auroc(scores, labels) - brute_auroc(scores, labels)) <= 1e-12


def test_auroc_examples():
    assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auroc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5


def test_auroc_rejects_single_class_and_nan():
    with pytest.raises(SingleClassLabels):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auroc([np.nan, 0.2], [0, 1])


def test_summarize_examples():
    assert summarize([1, 2, 3, 4]) == (2.5, 1.75, 3.25)
    assert summarize([0.7]) == (0.7, 0.7, 0.7)
    assert summarize([0.3] * 5) == (0.3, 0.3, 0.3)
    with pytest.raises(EmptyInput):
        summarize([])


def _subject(sid, X, y, schema=HRV_SCHEMA, device=DeviceKind.POLAR_H10):
    n = len(y)
    return FeatureMatrix(schema, X, y, np.full(n, sid), np.arange(n) * 15.0, np.arange(n) * 15.0 + 60,
                         Scenario.ALL_STRESSORS, device)


def test_loso_identical_separable_subjects():
    rng = np.random.default_rng(0)
    y = np.arange(20) % 2
    X = rng.normal(size=(20, 16)) * 0.1 + 4.0 * y[:, None]
    mats = {"S01": _subject("S01", X, y), "S02": _subject("S02", X, y)}
    rep = loso(mats, "svm")
    assert rep.per_subject_auroc == {"S01": 1.0, "S02": 1.0}
    assert rep.median == 1.0
    assert rep.diagnostics["leakage_checks"] == 2


def test_loso_skips_single_class_subject():
    m = toy_matrix(n_subjects=4, shift=2.0)
    base_only = _subject("S09", np.zeros((6, 16)), np.zeros(6, dtype=int))
    mats = {sid: m.subset(m.subject_ids == sid) for sid in np.unique(m.subject_ids)}
    mats["S09"] = base_only
    rep = loso(mats, "rf", rf_config=RfConfig(n_trees=15))
    assert rep.skipped == ("S09",)
    assert rep.diagnostics["skipped"] == ["S09"]
    assert "S09" not in rep.per_subject_auroc and rep.n_subjects == 4


def test_loso_accepts_pooled_matrix_and_needs_two_subjects():
    m = toy_matrix(n_subjects=3, shift=2.0)
    rep = loso(m, ModelKind.SVM_RBF)
    assert sorted(rep.per_subject_auroc) == ["S01", "S02", "S03"]
    with pytest.raises(TooFewSubjects):
        loso(m.subset(m.subject_ids == "S01"))


def test_loso_threshold_oracle_on_strong_effect():
    # a single informative column: every subject is separable by one threshold
    rng = np.random.default_rng(3)
    mats = {}
    for s in range(8):
        y = np.arange(30) % 2
        X = rng.normal(size=(30, 16))
        X[:, 0] = 70 + 20 * y + rng.normal(0, 2, 30)
        mats[f"S{s:02d}"] = _subject(f"S{s:02d}", X, y)
    oracle = [auroc(m.X[:, 0], m.labels) for m in mats.values()]
    rep = loso(mats, "svm")
    assert np.median(oracle) == 1.0
    assert rep.median >= 0.9


def test_pretrained_in_sample_optimism():
    m = toy_matrix(n_subjects=6, shift=0.8, seed=4)
    model = fit_model(m, ModelKind.SVM_RBF, SvmConfig(gamma=0.05))
    inside = pretrained_eval(model, m)
    out = loso(m, "svm", svm_config=SvmConfig(gamma=0.05))
    assert inside.mode is EvalMode.PRETRAINED
    assert inside.median >= out.median


def test_pretrained_schema_mismatch():
    m = toy_matrix(n_subjects=3)
    model = fit_model(m, ModelKind.RANDOM_FOREST, rf_config=RfConfig(n_trees=5))
    wide = _subject("S01", np.zeros((4, 32)), np.array([0, 1, 0, 1]), schema=HRV_EDA_SCHEMA)
    with pytest.raises(SchemaMismatch):
        pretrained_eval(model, {"S01": wide})


def _report(device=DeviceKind.BIOPAC_MP160, mode=EvalMode.LOSO, scenario=Scenario.ALL_STRESSORS,
            model="HRV+EDA", med=0.984, q1=0.908, q3=0.995):
    return EvalReport(device, scenario, model, mode, {"S01": med}, med, q1, q3)


def test_cell_rendering_and_files(tmp_path):
    assert format_cell(0.984, 0.908, 0.995) == "0.984 [0.908–0.995]"
    csv_path, txt_path = render_report([_report()], tmp_path / "table")
    assert "HRV+EDA: 0.984 [0.908–0.995]" in txt_path.read_text(encoding="utf-8")
    assert "0.984000,0.908000,0.995000" in csv_path.read_text(encoding="utf-8")
    with pytest.raises(EmptyInput):
        render_report([], tmp_path / "none")


def test_rows_follow_device_order():
    reps = [_report(DeviceKind.GARMIN_FORERUNNER_55S, model="HRV-only"), _report(DeviceKind.BIOPAC_MP160)]
    lines = report_csv(reps).splitlines()
    assert lines[1].startswith("BiopacMP160") and lines[2].startswith("GarminForerunner55s")
    table = report_table(reps)
    assert table.index("BiopacMP160") < table.index("GarminForerunner55s")
    with pytest.raises(ValueError):
        report_table([_report(), _report()])


def test_report_properties():
    r = _report()
    assert r.iqr == (0.908, 0.995) and r.n_subjects == 1
    assert math.isclose(r.q3 - r.q1, 0.087)
