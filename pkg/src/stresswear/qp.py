"""Convex quadratic programs with non-negativity on a subset of coordinates.

    minimize   0.5 * x' H x + c' x
    subject to x[i] >= 0   for i where mask[i]

:func:`solve_nnqp` is a projected Newton method (Bertsekas 1982) that works
on dense or scipy-sparse ``H``; :func:`qp_oracle` enumerates active sets
exhaustively and is only meant to check it on small instances.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DidNotConverge, DimensionTooLarge


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def objective(H, c, x) -> float:
    return float(0.5 * x @ (H @ x) + c @ x)


def kkt_residual(H, c, x, mask) -> float:
    """Infinity norm of the natural residual ``x - P(x - grad)``.

    A value <= tol certifies: free coordinates have |grad| <= tol, bound
    coordinates at zero have grad >= -tol.
    """
    g = H @ x + c
    r = np.where(mask, np.minimum(x, g), g)
    return float(np.max(np.abs(r))) if r.size else 0.0


def _project(x, mask):
    return np.where(mask & (x < 0), 0.0, x)


def _newton_direction(H, g, free, sparse, diag, rank=None):
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return np.zeros(0)
    reg = 1e-12 * max(1.0, float(diag.max()))
    if sparse:
        if rank is not None:
            idx = idx[np.argsort(rank[idx], kind="stable")]
        Hff = H[idx][:, idx].tocsc() + reg * sp.identity(idx.size, format="csc")
        # symmetric positive definite: no pivoting, caller-supplied order if any
        lu = spla.splu(
            Hff,
            permc_spec="NATURAL" if rank is not None else "MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        return -lu.solve(g[idx])[np.argsort(idx)]
    Hff = H[np.ix_(idx, idx)] + reg * np.eye(idx.size)
    try:
        L = np.linalg.cholesky(Hff)
        y = np.linalg.solve(L, -g[idx])
        return np.linalg.solve(L.T, y)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(Hff, -g[idx], rcond=None)[0]


def solve_nnqp(
    H,
    c,
    mask,
    x0=None,
    tol: float = 1e-9,
    max_iter: int = 500,
    eps_active: float = 1e-3,
    max_refine: int = 8,
    raise_on_failure: bool = True,
    elimination_rank=None,
) -> QPResult:
    """Solve the masked non-negative QP by projected Newton with Armijo search.

    Parameters
    ----------
    H : (n, n) array or sparse matrix
        Symmetric positive semidefinite Hessian.
    c : (n,) array
        Linear term.
    mask : (n,) bool array
        Coordinates constrained to be non-negative.
    x0 : (n,) array, optional
        Starting point; projected onto the feasible set.
    tol : float
        Stop once :func:`kkt_residual` is at most ``tol``.
    elimination_rank : (n,) array, optional
        For sparse ``H``: variables are eliminated in increasing rank with
        no further reordering.  A banded-friendly rank makes the Newton
        solves cheap; without it SuperLU picks a minimum-degree order.

    Returns
    -------
    QPResult
        ``history`` holds the objective after every iteration and is
        non-increasing.
    """
    sparse = sp.issparse(H)
    if sparse:
        H = H.tocsr()
    else:
        H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    n = c.size
    diag = np.asarray(H.diagonal(), dtype=float)
    dscale = np.where(diag > 0, diag, 1.0)

    x = np.zeros(n) if x0 is None else _project(np.asarray(x0, dtype=float).copy(), mask)
    Hx = H @ x
    f = float(0.5 * x @ Hx + c @ x)
    history = [f]
    sigma = 1e-4
    res = np.inf
    for it in range(max_iter + 1):
        g = Hx + c
        r = np.where(mask, np.minimum(x, g), g)
        res = float(np.max(np.abs(r))) if n else 0.0
        if res <= tol or it == max_iter:
            break
        eps = min(eps_active, float(np.linalg.norm(r)))
        active = mask & (x <= eps) & (g > 0)
        free = ~active
        d = np.zeros(n)
        for _ in range(max_refine):
            d[:] = 0.0
            d[free] = _newton_direction(H, g, free, sparse, diag, elimination_rank)
            # coordinates sitting on the bound that the Newton step would push
            # outward are pinned and the step is recomputed without them
            pinned = free & mask & (x == 0) & (d < 0)
            if not pinned.any():
                break
            free &= ~pinned
        d[~free] = 0.0
        d[active] = -g[active] / dscale[active]

        beta, accepted = 1.0, False
        gF = g[free] @ d[free]
        for _ in range(60):
            xn = _project(x + beta * d, mask)
            step = xn - x
            Hstep = H @ step
            # exact change of a quadratic, free of cancellation in f(xn) - f(x)
            delta = float(g @ step + 0.5 * step @ Hstep)
            decrease = -beta * gF + g[active] @ (x[active] - xn[active])
            if -delta >= sigma * decrease and delta <= 0:
                accepted = True
                break
            beta *= 0.5
        if not accepted:
            break
        x, Hx, f = xn, Hx + Hstep, f + delta
        history.append(f)

    converged = res <= tol
    if not converged and raise_on_failure:
        raise DidNotConverge(f"KKT residual {res:.3g} > tol {tol:.3g} after {len(history) - 1} iterations")
    return QPResult(x, f, res, len(history) - 1, converged, history)


def qp_oracle(H, c, mask, max_dim: int = 60, max_masked: int = 20) -> np.ndarray:
    """Exact minimizer by enumerating every active set of the masked coordinates.

    For each subset held at zero, the remaining coordinates solve the
    stationarity system; candidates that are primal feasible and whose
    held coordinates have non-negative gradient are KKT points, and the
    one with the lowest objective is returned.  Cost is exponential in
    the number of masked coordinates.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    n = c.size
    masked = np.flatnonzero(mask)
    if n > max_dim or masked.size > max_masked:
        raise DimensionTooLarge(
            f"oracle limited to {max_dim} dims / {max_masked} masked coordinates, got {n} / {masked.size}"
        )
    scale = max(1.0, float(np.abs(H).max()), float(np.abs(c).max()))
    best_x, best_f = None, np.inf
    for k in range(masked.size + 1):
        for held in itertools.combinations(masked, k):
            free = np.ones(n, dtype=bool)
            free[list(held)] = False
            x = np.zeros(n)
            idx = np.flatnonzero(free)
            if idx.size:
                Hff = H[np.ix_(idx, idx)]
                sol = np.linalg.lstsq(Hff, -c[idx], rcond=None)[0]
                sol -= np.linalg.lstsq(Hff, Hff @ sol + c[idx], rcond=None)[0]
                if np.max(np.abs(Hff @ sol + c[idx])) > 1e-9 * scale:
                    continue
                x[idx] = sol
            if np.any(x[mask] < -1e-12 * scale):
                continue
            g = H @ x + c
            if held and np.min(g[list(held)]) < -1e-9 * scale:
                continue
            x = _project(x, mask)
            fx = objective(H, c, x)
            if fx < best_f:
                best_x, best_f = x, fx
    if best_x is None:
        raise DidNotConverge("no KKT point found; problem may be unbounded")
    return best_x
