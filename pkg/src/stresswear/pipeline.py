"""Session-to-feature-matrix pipeline: preprocess, decompose EDA, window."""
from __future__ import annotations

from .eda import CvxEdaConfig, decompose_eda
from .errors import PipelineError, StressWearError
from .features import FeatureMatrix, Scenario, WindowSpec, build_feature_matrix
from .ingest import DeviceKind, DeviceSession, SignalKind
from .preprocess import preprocess_session


def session_matrices(
    session: DeviceSession,
    scenarios=tuple(Scenario),
    include_eda: bool = True,
    cvx_config: CvxEdaConfig | None = None,
    window: WindowSpec = WindowSpec(),
) -> dict[Scenario, FeatureMatrix]:
    """Feature matrices of one raw session for each requested scenario.

    The EDA decomposition is computed once and shared by all scenarios.
    Failures are re-raised as :class:`PipelineError` naming the subject and device.
    """
    try:
        clean = preprocess_session(session)
        dec = None
        if include_eda and SignalKind.EDA in clean.signals:
            dec = decompose_eda(clean.signals[SignalKind.EDA], cvx_config)
        return {
            Scenario(s): build_feature_matrix(clean, Scenario(s), dec, window, include_eda)
            for s in scenarios
        }
    except StressWearError as exc:
        raise PipelineError(session.subject_id, session.device, exc) from exc


def cohort_matrices(
    bundles,
    device: DeviceKind,
    scenarios=tuple(Scenario),
    include_eda: bool = True,
    cvx_config: CvxEdaConfig | None = None,
    window: WindowSpec = WindowSpec(),
) -> dict[Scenario, dict[str, FeatureMatrix]]:
    """``{scenario: {subject_id: matrix}}`` for one device across a synthetic cohort."""
    device = DeviceKind(device)
    out = {Scenario(s): {} for s in scenarios}
    for b in bundles:
        per = session_matrices(b.sessions[device], scenarios, include_eda, cvx_config, window)
        for s, m in per.items():
            out[s][b.subject_id] = m
    return out
