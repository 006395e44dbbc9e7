"""Tonic/phasic decomposition of skin conductance (cvxEDA model).

The normalized signal ``y`` is modeled as

    y = M q + B l + C d + noise

with ``q >= 0`` a sparse sudomotor driver, ``M`` the convolution with a
biexponential impulse response, ``B`` a cubic B-spline basis for the tonic
level and ``C = [1, t]`` a linear drift.  The estimate minimizes

    0.5 * ||y - M q - B l - C d||^2 + alpha * sum(q) + 0.5 * gamma_l * ||l||^2

which is a non-negative QP handed to :func:`stresswear.qp.solve_nnqp`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import BSpline

from .errors import NonUniformSampling, SessionTooShort
from .fileio import write_text_atomic
from .ingest import SignalKind, TimeSeries
from .qp import solve_nnqp


@dataclass(frozen=True)
class CvxEdaConfig:
    tau0: float = 2.0
    tau1: float = 0.7
    knot_spacing_s: float = 10.0
    alpha: float = 8e-4
    gamma_l: float = 1e-2
    irf_truncation_s: float = 10.0
    solver_tol: float = 1e-7
    max_iters: int = 300
    resample_hz: float = 4.0

    def __post_init__(self):
        if not (self.tau0 > self.tau1 > 0):
            raise ValueError("need tau0 > tau1 > 0")
        if not (self.knot_spacing_s > 0 and self.alpha > 0 and self.gamma_l > 0 and self.solver_tol > 0):
            raise ValueError("knot_spacing_s, alpha, gamma_l and solver_tol must be positive")


@dataclass(frozen=True)
class EdaDecomposition:
    tonic: TimeSeries
    phasic: TimeSeries
    driver: TimeSeries
    residual: TimeSeries
    objective: float
    kkt_residual: float
    iterations: int
    history: tuple = ()


def sampling_interval(timestamps, rtol: float = 1e-6) -> float:
    t = np.asarray(timestamps, dtype=float)
    if t.size < 2:
        raise NonUniformSampling("need at least two samples to define a sampling rate")
    dt = np.diff(t)
    step = (t[-1] - t[0]) / (t.size - 1)
    if step <= 0 or np.max(np.abs(dt - step)) > rtol * step + 1e-9:
        raise NonUniformSampling("timestamps are not uniformly spaced")
    return float(step)


def irf_kernel(dt: float, tau0: float, tau1: float, truncation_s: float) -> np.ndarray:
    """Biexponential impulse response sampled every ``dt`` and scaled to unit peak."""
    k = np.arange(int(np.floor(truncation_s / dt + 1e-9)) + 1) * dt
    h = np.exp(-k / tau0) - np.exp(-k / tau1)
    return h / h.max()


def build_irf_matrix(timestamps, config: CvxEdaConfig) -> sp.csr_matrix:
    """Lower-triangular banded operator mapping driver to phasic response."""
    if config.irf_truncation_s < 5 * config.tau0:
        raise ValueError("irf_truncation_s must be at least 5 * tau0")
    dt = sampling_interval(timestamps)
    n = len(timestamps)
    h = irf_kernel(dt, config.tau0, config.tau1, config.irf_truncation_s)
    lags = [k for k in range(1, min(h.size, n)) if h[k] != 0.0]
    if not lags:
        return sp.csr_matrix((n, n))
    return sp.diags([np.full(n - k, h[k]) for k in lags], [-k for k in lags], shape=(n, n), format="csr")


def spline_breakpoints(t_start: float, t_end: float, spacing: float) -> np.ndarray:
    """Knots every ``spacing`` seconds; the last interval absorbs any remainder."""
    duration = t_end - t_start
    n_int = int(np.floor(duration / spacing + 1e-9))
    if n_int < 2:
        raise SessionTooShort(f"need at least {2 * spacing} s for the tonic basis, got {duration} s")
    inner = t_start + spacing * np.arange(1, n_int)
    return np.concatenate([[t_start], inner, [t_end]])


def build_tonic_basis(timestamps, config: CvxEdaConfig) -> tuple[sp.csr_matrix, np.ndarray]:
    """Clamped cubic B-spline columns ``B`` and the drift block ``C = [1, t_norm]``.

    There are ``floor(duration / knot_spacing_s) + 3`` spline columns.
    """
    t = np.asarray(timestamps, dtype=float)
    bp = spline_breakpoints(t[0], t[-1], config.knot_spacing_s)
    knots = np.concatenate([[bp[0]] * 3, bp, [bp[-1]] * 3])
    B = BSpline.design_matrix(np.clip(t, bp[0], bp[-1]), knots, 3).tocsr()
    tn = (t - t[0]) / (t[-1] - t[0])
    C = np.column_stack([np.ones_like(t), tn])
    return B, C


def _elimination_rank(timestamps, n_spline, config):
    """Order variables by the time they act on; drift terms go last."""
    t = np.asarray(timestamps, dtype=float)
    bp = spline_breakpoints(t[0], t[-1], config.knot_spacing_s)
    knots = np.concatenate([[bp[0]] * 3, bp, [bp[-1]] * 3])
    centers = 0.5 * (knots[:n_spline] + knots[4:4 + n_spline])
    return np.concatenate([t, centers, [np.inf, np.inf]])


def resample_uniform(series: TimeSeries, hz: float = 4.0) -> TimeSeries:
    """Linearly interpolate onto a uniform grid starting at the first sample."""
    t, v = series.timestamps, series.values
    n = int(np.floor((t[-1] - t[0]) * hz + 1e-9)) + 1
    grid = t[0] + np.arange(n) / hz
    return TimeSeries(grid, np.interp(grid, t, v), series.kind)


def is_uniform(timestamps) -> bool:
    try:
        sampling_interval(timestamps)
    except NonUniformSampling:
        return False
    return True


def decomposition_problem(y, timestamps, config: CvxEdaConfig):
    """Assemble the QP ``(H, c, mask)`` over ``x = [q, l, d]`` and its pieces."""
    M = build_irf_matrix(timestamps, config)
    B, C = build_tonic_basis(timestamps, config)
    n, nb = M.shape[0], B.shape[1]
    A = sp.hstack([M, B, sp.csr_matrix(C)], format="csr")
    reg = np.concatenate([np.zeros(n), np.full(nb, config.gamma_l), np.zeros(2)])
    H = (A.T @ A + sp.diags(reg)).tocsr()
    c = -(A.T @ y)
    c[:n] += config.alpha
    mask = np.zeros(n + nb + 2, dtype=bool)
    mask[:n] = True
    return H, c, mask, (M, B, C)


def solve_decomposition(eda: TimeSeries, config: CvxEdaConfig | None = None) -> EdaDecomposition:
    """Decompose a uniformly sampled, normalized EDA series.

    Raises :class:`NonUniformSampling` for irregular timestamps and
    :class:`DidNotConverge` if the KKT residual stays above
    ``config.solver_tol`` after ``config.max_iters`` iterations.
    """
    config = config or CvxEdaConfig()
    t, y = eda.timestamps, eda.values
    sampling_interval(t)
    H, c, mask, (M, B, C) = decomposition_problem(y, t, config)
    n, nb = M.shape[0], B.shape[1]

    # warm start: no driver, tonic fitted by ridge least squares
    x0 = np.zeros(c.size)
    tail = slice(n, None)
    Hw = H[tail][:, tail].toarray()
    x0[tail] = np.linalg.solve(Hw, -c[tail])

    res = solve_nnqp(
        H,
        c,
        mask,
        x0=x0,
        tol=config.solver_tol,
        max_iter=config.max_iters,
        elimination_rank=_elimination_rank(t, nb, config),
    )
    q = res.x[:n]
    ell, d = res.x[n:n + nb], res.x[n + nb:]
    tonic = B @ ell + C @ d
    phasic = M @ q
    residual = y - tonic - phasic
    mk = lambda v: TimeSeries(t, v, SignalKind.EDA)  # noqa: E731
    return EdaDecomposition(
        tonic=mk(tonic),
        phasic=mk(phasic),
        driver=mk(q),
        residual=mk(residual),
        objective=res.objective + 0.5 * float(y @ y),
        kkt_residual=res.kkt_residual,
        iterations=res.iterations,
        history=tuple(h + 0.5 * float(y @ y) for h in res.history),
    )


def decompose_eda(eda: TimeSeries, config: CvxEdaConfig | None = None) -> EdaDecomposition:
    """Resample to a uniform grid when needed, then decompose."""
    config = config or CvxEdaConfig()
    if not is_uniform(eda.timestamps):
        eda = resample_uniform(eda, config.resample_hz)
    return solve_decomposition(eda, config)


def write_decomposition_csv(dec: EdaDecomposition, path) -> None:
    lines = ["t_seconds,tonic,phasic,driver"]
    for row in zip(
        dec.tonic.timestamps.tolist(),
        dec.tonic.values.tolist(),
        dec.phasic.values.tolist(),
        dec.driver.values.tolist(),
    ):
        lines.append(",".join(repr(x) for x in row))
    write_text_atomic(path, "\n".join(lines) + "\n")
