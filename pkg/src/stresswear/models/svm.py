"""Soft-margin RBF support vector machine with Platt-calibrated probabilities.

The dual is solved by SMO with second-order working-set selection
(Fan, Chen & Lin, JMLR 2005), the same scheme LIBSVM uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DidNotConverge, SingleClassTraining

TAU = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    c: float = 107.0
    gamma: float = 0.001
    platt_folds: int = 5
    tol: float = 1e-3
    max_passes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (self.c > 0 and self.gamma > 0):
            raise ValueError("c and gamma must be positive")
        if self.platt_folds < 2:
            raise ValueError("platt_folds must be >= 2")


# The printed regularization constant is ambiguous; both readings ship.
SVM_PRESET_LITERAL = SvmConfig(c=107.0)
SVM_PRESET_EXPONENT = SvmConfig(c=1e7)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class SvmSolution:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float


def smo_solve(K, y, c: float, tol: float = 1e-3, max_iter: int | None = None) -> SvmSolution:
    """Solve ``min 0.5 a'Qa - sum(a)`` s.t. ``0 <= a <= c``, ``y'a = 0``.

    ``K`` is the precomputed kernel matrix and ``y`` holds labels in {-1, +1}.
    Stops when the maximal violating pair gap drops below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    Kd = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while True:
        minus_yG = -y * G
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        vals_up = np.where(up, minus_yG, -np.inf)
        i = int(np.argmax(vals_up))
        m_up = vals_up[i]
        vals_low = np.where(low, minus_yG, np.inf)
        gap = m_up - float(vals_low.min())
        if gap < tol:
            break
        if it >= max_iter:
            raise DidNotConverge(f"SMO stopped after {it} iterations with gap {gap:.3g}")
        b = m_up - minus_yG
        cand = low & (b > 0)
        a = Kd[i] + Kd - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))

        # two-variable subproblem, written as in LIBSVM's Solver::Solve
        yi, yj = y[i], y[j]
        Qij = yi * yj * K[i, j]
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            quad = max(Kd[i] + Kd[j] + 2.0 * Qij, TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > c:
                    ai, aj = c, c - diff
            elif aj > c:
                aj, ai = c, c + diff
        else:
            quad = max(Kd[i] + Kd[j] - 2.0 * Qij, TAU)
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > c:
                if ai > c:
                    ai, aj = c, total - c
            elif aj < 0:
                aj, ai = 0.0, total
            if total > c:
                if aj > c:
                    aj, ai = c, total - c
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - ai_old, aj - aj_old
        alpha[i], alpha[j] = ai, aj
        G += y * (K[i] * (yi * dai) + K[j] * (yj * daj))
        it += 1

    yG = y * G
    free = (alpha > 0) & (alpha < c)
    if free.any():
        r = float(yG[free].mean())
    else:
        ub_mask = ((alpha >= c) & (y < 0)) | ((alpha <= 0) & (y > 0))
        lb_mask = ((alpha >= c) & (y > 0)) | ((alpha <= 0) & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        r = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else 0.0
    return SvmSolution(alpha, -r, it, float(gap))


def platt_fit(decision, labels, max_iter: int = 100) -> tuple[float, float]:
    """Fit ``P(y=1|f) = 1 / (1 + exp(A f + B))`` by Newton with backtracking.

    Follows Lin, Lin & Weng (2007), including the regularized targets.
    """
    f = np.asarray(decision, dtype=float)
    t01 = np.asarray(labels) > 0
    prior1 = int(t01.sum())
    prior0 = t01.size - prior1
    hi, lo = (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0)
    t = np.where(t01, hi, lo)
    A, B = 0.0, np.log((prior0 + 1.0) / (prior1 + 1.0))
    sigma, eps, min_step = 1e-12, 1e-5, 1e-10

    def nll(A, B):
        fApB = f * A + B
        return float(np.sum(np.where(fApB >= 0, t * fApB + np.log1p(np.exp(-np.abs(fApB))),
                                     (t - 1) * fApB + np.log1p(np.exp(-np.abs(fApB))))))

    fval = nll(A, B)
    for _ in range(max_iter):
        fApB = f * A + B
        e = np.exp(-np.abs(fApB))
        p = np.where(fApB >= 0, e / (1 + e), 1 / (1 + e))
        q = 1 - p
        d2 = p * q
        h11 = sigma + float(np.sum(f * f * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = nll(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


def sigmoid_proba(decision, A: float, B: float) -> np.ndarray:
    fApB = np.asarray(decision, dtype=float) * A + B
    e = np.exp(-np.abs(fApB))
    return np.where(fApB >= 0, e / (1 + e), 1 / (1 + e))


def _stratified_folds(labels, k, seed):
    rng = np.random.default_rng(seed)
    fold = np.empty(labels.size, dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % k
    return fold


def fit_svm_arrays(X, labels, config: SvmConfig) -> dict:
    """Fit on standardized features; returns the serializable parameter dict."""
    labels = np.asarray(labels, dtype=int)
    if np.unique(labels).size < 2:
        raise SingleClassTraining("SVM training needs both classes")
    y = np.where(labels == 1, 1.0, -1.0)
    K = rbf_kernel(X, X, config.gamma)
    max_iter = max(1, config.max_passes) * max(1, X.shape[0])
    sol = smo_solve(K, y, config.c, config.tol, max_iter)

    # Platt scaling on out-of-fold decision values
    k = min(config.platt_folds, int(min(np.sum(labels == 0), np.sum(labels == 1))))
    if k >= 2:
        fold = _stratified_folds(labels, k, config.seed)
        dec = np.empty(labels.size)
        for f in range(k):
            tr, te = fold != f, fold == f
            sub = smo_solve(K[np.ix_(tr, tr)], y[tr], config.c, config.tol, max_iter)
            dec[te] = (K[np.ix_(te, tr)] * (sub.alpha * y[tr])) .sum(1) + sub.bias
    else:
        dec = K @ (sol.alpha * y) + sol.bias
    A, B = platt_fit(dec, labels)

    sv = sol.alpha > 0
    return {
        "support_vectors": X[sv].tolist(),
        "dual_coef": (sol.alpha[sv] * y[sv]).tolist(),
        "bias": sol.bias,
        "gamma": config.gamma,
        "c": config.c,
        "platt_a": A,
        "platt_b": B,
        "iterations": sol.iterations,
    }


def svm_decision(params: dict, X) -> np.ndarray:
    sv = np.asarray(params["support_vectors"], dtype=float).reshape(-1, np.asarray(X).shape[1])
    coef = np.asarray(params["dual_coef"], dtype=float)
    if coef.size == 0:
        return np.full(np.asarray(X).shape[0], float(params["bias"]))
    return rbf_kernel(X, sv, params["gamma"]) @ coef + params["bias"]
