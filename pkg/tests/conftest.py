"""Shared fixtures: small hand-built sessions and cached synthetic cohorts."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stresswear.features import FeatureMatrix, HRV_SCHEMA, Scenario
from stresswear.ingest import DeviceKind, SignalKind, TimeSeries

settings.register_profile(
    "stresswear",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("stresswear")


def series(values, kind=SignalKind.HEART_RATE, dt=1.0, t0=0.0) -> TimeSeries:
    v = np.asarray(values, dtype=float)
    return TimeSeries(t0 + dt * np.arange(v.size), v, kind)


def toy_matrix(n_subjects=6, n_rows=24, shift=1.5, seed=0, device=DeviceKind.POLAR_H10) -> FeatureMatrix:
    """Separable-ish Gaussian blobs in the HRV schema, balanced per subject."""
    rng = np.random.default_rng(seed)
    parts = []
    for s in range(n_subjects):
        y = np.arange(n_rows) % 2
        X = rng.normal(size=(n_rows, len(HRV_SCHEMA))) + shift * y[:, None] + rng.normal(0, 0.3)
        parts.append(FeatureMatrix(HRV_SCHEMA, X, y, np.full(n_rows, f"S{s + 1:02d}"),
                                   np.arange(n_rows) * 15.0, np.arange(n_rows) * 15.0 + 60.0,
                                   Scenario.ALL_STRESSORS, device))
    return FeatureMatrix.concatenate(parts)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each; printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
