"""AUROC scoring, leave-one-subject-out and frozen-model evaluation, reporting."""
from __future__ import annotations

import csv
import io
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, LeakageError, SchemaMismatch, SingleClassLabels, TooFewSubjects
from .fileio import write_text_atomic
from .features import FeatureMatrix, Scenario
from .ingest import DeviceKind
from .models import ModelKind, RfConfig, SvmConfig, TrainedModel, fit_model, predict_proba
from .stats import percentile


class EvalMode(str, Enum):
    LOSO = "LOSO"
    PRETRAINED = "Pretrained"


def auroc(scores, labels) -> float:
    """Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n1 = int(np.sum(y == 1))
    n0 = int(np.sum(y == 0))
    if n1 == 0 or n0 == 0 or n1 + n0 != y.size:
        raise SingleClassLabels("AUROC needs both labels 0 and 1")
    r = rankdata(s)  # average ranks resolve ties as half wins
    u = float(r[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def summarize(values) -> tuple[float, float, float]:
    """``(median, q1, q3)`` by linear interpolation between order statistics."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise EmptyInput("nothing to summarize")
    return percentile(v, 50), percentile(v, 25), percentile(v, 75)


@dataclass(frozen=True)
class EvalReport:
    device: DeviceKind
    scenario: Scenario
    model_desc: str
    mode: EvalMode
    per_subject_auroc: dict
    median: float
    q1: float
    q3: float
    skipped: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def iqr(self) -> tuple[float, float]:
        return self.q1, self.q3

    @property
    def n_subjects(self) -> int:
        return len(self.per_subject_auroc)


def _by_subject(matrices) -> dict[str, FeatureMatrix]:
    if isinstance(matrices, FeatureMatrix):
        out = {}
        for sid in sorted(set(matrices.subject_ids.tolist())):
            out[sid] = matrices.subset(matrices.subject_ids == sid)
        return out
    if isinstance(matrices, Mapping):
        return {str(k): matrices[k] for k in sorted(matrices, key=str)}
    return _by_subject({m.subject_ids[0] if len(m) else str(i): m for i, m in enumerate(matrices)})


def _make_report(per_subject, skipped, mode, first: FeatureMatrix, diagnostics) -> EvalReport:
    if not per_subject:
        raise TooFewSubjects("no held-out subject had both classes")
    med, q1, q3 = summarize(per_subject.values())
    return EvalReport(
        device=first.device,
        scenario=first.scenario,
        model_desc=first.schema.description,
        mode=mode,
        per_subject_auroc=dict(per_subject),
        median=med,
        q1=q1,
        q3=q3,
        skipped=tuple(skipped),
        diagnostics=diagnostics,
    )


def _both_classes(m: FeatureMatrix) -> bool:
    return len(m) > 0 and np.unique(m.labels).size == 2


def loso(
    matrices,
    model_kind: ModelKind | str = ModelKind.SVM_RBF,
    svm_config: SvmConfig = SvmConfig(),
    rf_config: RfConfig = RfConfig(),
) -> EvalReport:
    """Leave-one-subject-out AUROC per held-out subject.

    ``matrices`` maps subject id to that subject's :class:`FeatureMatrix` (a
    single pooled matrix is split by ``subject_ids``).  Held-out subjects
    lacking either class are skipped and listed in ``report.skipped``.
    """
    kind = _model_kind(model_kind)
    per = _by_subject(matrices)
    if len(per) < 2:
        raise TooFewSubjects(f"LOSO needs at least 2 subjects, got {len(per)}")
    first = next(iter(per.values()))
    pooled = FeatureMatrix.concatenate(per.values())
    scores, skipped = {}, []
    checks = 0
    for sid, held in per.items():
        if not _both_classes(held):
            skipped.append(sid)
            continue
        train = pooled.subset(pooled.subject_ids != sid)
        if np.any(train.subject_ids == sid) or np.any(np.isin(held.subject_ids, train.subject_ids)):
            raise LeakageError(f"rows of held-out subject {sid} found in the training split")
        checks += 1
        model = fit_model(train, kind, svm_config, rf_config, meta={"cohort": f"loso-without-{sid}"})
        scores[sid] = auroc(predict_proba(model, held), held.labels)
    diagnostics = {"classifier": kind.value, "leakage_checks": checks, "skipped": list(skipped)}
    return _make_report(scores, skipped, EvalMode.LOSO, first, diagnostics)


def pretrained_eval(model: TrainedModel, matrices) -> EvalReport:
    """Score each subject with a frozen model; nothing is refit."""
    per = _by_subject(matrices)
    if not per:
        raise EmptyInput("no subjects to evaluate")
    first = next(iter(per.values()))
    if first.schema.names != model.schema.names:
        raise SchemaMismatch(
            f"model schema {model.schema.description} ({len(model.schema)} columns) does not match "
            f"matrix schema {first.schema.description} ({len(first.schema)} columns)"
        )
    scores, skipped = {}, []
    for sid, m in per.items():
        if not _both_classes(m):
            skipped.append(sid)
            continue
        scores[sid] = auroc(predict_proba(model, m), m.labels)
    diagnostics = {
        "classifier": model.kind.value,
        "model_cohort": model.training_meta.get("cohort", ""),
        "skipped": list(skipped),
    }
    return _make_report(scores, skipped, EvalMode.PRETRAINED, first, diagnostics)


def _model_kind(kind) -> ModelKind:
    if isinstance(kind, ModelKind):
        return kind
    aliases = {"svm": ModelKind.SVM_RBF, "rf": ModelKind.RANDOM_FOREST}
    return aliases.get(str(kind).lower()) or ModelKind(kind)


# --- reporting ---------------------------------------------------------------

CSV_HEADER = ("device", "mode", "scenario", "model", "median", "q1", "q3", "n_subjects", "n_skipped")
_MODEL_ORDER = ("HRV-only", "HRV+EDA")
_SHORT = {"HRV-only": "HRV", "HRV+EDA": "HRV+EDA"}
_SCENARIO_TITLE = {Scenario.ALL_STRESSORS: "Rest vs. All Stressors",
                   Scenario.MENTAL_ARITHMETIC_ONLY: "Rest vs. Mental Arithmetic"}


def format_cell(median: float, q1: float, q3: float) -> str:
    return f"{median:.3f} [{q1:.3f}–{q3:.3f}]"


def report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in _ordered(reports):
        w.writerow([r.device.value, r.mode.value, r.scenario.value, r.model_desc,
                    f"{r.median:.6f}", f"{r.q1:.6f}", f"{r.q3:.6f}", r.n_subjects, len(r.skipped)])
    return buf.getvalue()


def _ordered(reports):
    devices = list(DeviceKind)
    modes = list(EvalMode)
    return sorted(reports, key=lambda r: (devices.index(r.device), modes.index(r.mode),
                                          r.scenario.value, _MODEL_ORDER.index(r.model_desc)))


def report_table(reports) -> str:
    """Plain-text table: one block per device, columns mode x scenario."""
    cols = [(m, s) for m in EvalMode for s in Scenario]
    cells: dict = {}
    for r in reports:
        key = (r.device, r.mode, r.scenario, r.model_desc)
        if key in cells:
            raise ValueError(f"duplicate report for {key}")
        cells[key] = f"{_SHORT[r.model_desc]}: {format_cell(r.median, r.q1, r.q3)}"
    devices = [d for d in DeviceKind if any(r.device is d for r in reports)]
    head1 = ["Training Data"] + [("LOSO" if m is EvalMode.LOSO else "Pretrained") for m, _ in cols]
    head2 = [""] + [_SCENARIO_TITLE[s] for _, s in cols]
    body = []
    for d in devices:
        models = [md for md in _MODEL_ORDER if any(k[0] is d and k[3] == md for k in cells)]
        for i, md in enumerate(models):
            label = d.value if i == 0 else ""
            body.append([label] + [cells.get((d, m, s, md), "-") for m, s in cols])
        body.append(None)
    width = [max(len(row[j]) for row in [head1, head2] + [b for b in body if b]) for j in range(len(head1))]
    rule = "+" + "+".join("-" * (w + 2) for w in width) + "+"

    def line(row):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(row, width)) + " |"

    out = [rule, line(head1), line(head2), rule]
    for row in body:
        out.append(rule if row is None else line(row))
    out.append("Cells: median AUROC across subjects [q1–q3].")
    return "\n".join(out) + "\n"


def render_report(reports, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.txt``; returns both paths."""
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to render")
    base = Path(path)
    if base.suffix in (".csv", ".txt"):
        base = base.with_suffix("")
    csv_path, txt_path = base.with_suffix(".csv"), base.with_suffix(".txt")
    write_text_atomic(csv_path, report_csv(reports))
    write_text_atomic(txt_path, report_table(reports))
    return csv_path, txt_path
